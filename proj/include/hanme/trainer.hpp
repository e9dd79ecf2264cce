#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hanme/graph.hpp"
#include "hanme/metrics.hpp"
#include "hanme/model.hpp"

namespace hanme {

enum class PacingKind { kOff, kLinear, kRoot, kGeometric };

PacingKind pacing_kind_from_string(const std::string& s);
std::string to_string(PacingKind k);

struct PacingConfig {
  PacingKind kind = PacingKind::kOff;
  double lambda0 = 0.1;       // initial included fraction, in (0,1]
  std::int64_t full_epoch = 100;  // T: epoch offset at which everything is included
};

// Included fraction at epoch offset t:
//   linear    lambda0 + (1-lambda0) t/T
//   root      sqrt(lambda0^2 + (1-lambda0^2) t/T)
//   geometric 2^(log2(lambda0) - log2(lambda0) t/T)
// clamped to 1 for t >= T; off always yields 1.
double pacing(const PacingConfig& cfg, std::int64_t t);

// The ceil(lambda * N) train nodes with smallest loss, ties broken by
// ascending node ID. `losses` is aligned with `train_ids`.
std::vector<NodeId> select_nodes_lts(const std::vector<double>& losses,
                                     const std::vector<NodeId>& train_ids, double lambda);

struct TrainOptions {
  std::vector<std::vector<std::string>> metapaths;  // empty = every 2-hop pattern
  EncoderKind encoder = EncoderKind::kMultihop;
  double gamma = 0.4;
  double leaky_slope = 0.2;
  int heads = 8;
  int hidden = 128;
  int semantic_hidden = 128;
  double lr = 0.005;
  double weight_decay = 0.001;
  double dropout = 0.6;
  int patience = 100;
  int max_epochs = 1000;
  std::uint64_t seed = 483;
  double threshold = 0.5;
  PacingConfig pacing;
  std::size_t max_instances_per_source = 0;
  bool strict = true;  // execution is always sequential-deterministic

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;               // 1-based
  double lambda = 1.0;
  std::size_t num_selected = 0;
  double train_loss = 0.0;
  double val_micro = 0.0;
  double val_macro = 0.0;
};

struct TrainResult {
  int best_epoch = 0;
  double best_val_micro = 0.0;
  double best_val_macro = 0.0;
  double test_micro = 0.0;
  double test_macro = 0.0;
  int epochs_run = 0;
  std::vector<EpochRecord> history;
  std::map<std::string, std::size_t> fallback_counts;  // per metapath
  // Semantic attention of the selected model, computed over the train split;
  // aligned with metapath_names.
  std::vector<std::string> metapath_names;
  std::vector<double> semantic_betas;
  std::string checkpoint_path;
  std::string history_path;
  std::string metrics_path;
};

// Full-batch training with optional loss-aware node scheduling, early
// stopping on validation micro F1, and best-checkpoint retention. Writes
// model.ckpt, history.csv and metrics.txt under out_dir.
TrainResult train(const TrainOptions& opt, const std::string& dataset_dir,
                  const std::string& out_dir);

struct EvalResult {
  std::string split;
  double micro = 0.0;
  double macro = 0.0;
};

EvalResult evaluate(const std::string& checkpoint_path, const std::string& dataset_dir,
                    const std::string& split);

// Shared by train/evaluate/CLI: loads the dataset and pools features onto
// every type that has none.
HeteroGraph load_prepared_graph(const std::string& dataset_dir);

// Metapath type lists resolved against the graph; empty input expands to
// every (labeled, X, labeled) pattern reachable over one relation.
std::vector<InstanceTable> extract_tables(const HeteroGraph& g,
                                          const std::vector<std::vector<std::string>>& metapaths,
                                          std::size_t max_per_source);

}  // namespace hanme
