#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hanme/graph.hpp"

namespace hanme {

struct SyntheticTypeConfig {
  std::string name;
  std::int64_t count = 1;
  std::int64_t feature_dim = 0;  // 0 = assign later by pooling
  // Per-type overrides for edge probabilities to the labeled type; a bridge
  // type with intra == inter carries no community signal.
  std::optional<double> intra_prob;
  std::optional<double> inter_prob;
};

// Desk-scale planted-community dataset: the first node type is labeled, every
// other type bridges it. Labels follow community membership (up to the noise
// rate) and communities are recoverable through 2-hop metapath structure.
struct SyntheticConfig {
  std::vector<SyntheticTypeConfig> node_types;  // first entry = labeled type
  std::int64_t num_classes = 2;
  std::int64_t communities = 2;
  double intra_prob = 0.1;
  double inter_prob = 0.01;
  double label_noise = 0.0;
  double feature_noise = 0.5;  // uniform half-width around community centroid
  double train_frac = 0.5;
  double val_frac = 0.25;
  std::uint64_t seed = 1;

  static SyntheticConfig from_json(const std::string& text);
  void validate() const;
};

HeteroGraph gen_synthetic_graph(const SyntheticConfig& cfg);

// Generates and writes the dataset directory; identical config (seed
// included) produces byte-identical output.
void gen_synthetic(const SyntheticConfig& cfg, const std::string& out_dir);

}  // namespace hanme
