#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hanme/encoders.hpp"
#include "hanme/graph.hpp"
#include "hanme/metapath.hpp"
#include "hanme/tape.hpp"

namespace hanme {

enum class EncoderKind { kMultihop, kDirect, kTerminalOnly };

EncoderKind encoder_kind_from_string(const std::string& s);
std::string to_string(EncoderKind k);

struct ModelConfig {
  EncoderKind encoder = EncoderKind::kMultihop;
  int heads = 8;
  int hidden = 128;           // shared projected width d
  int semantic_hidden = 128;  // d_s
  double gamma = 0.4;
  double leaky_slope = 0.2;
  double dropout = 0.6;
  std::uint64_t seed = 483;
};

// End-to-end forward pass over a fixed (graph, instance tables) pair:
// type projection, per-instance chain encoding, node-level attention over
// each node's instances (K heads, concatenated), semantic attention across
// metapaths, a linear classifier, and BCE-with-logits. Built once on a
// fixed-topology tape and replayed each epoch.
class HanMeModel {
 public:
  HanMeModel(const HeteroGraph& g, const std::vector<InstanceTable>& tables,
             const ModelConfig& cfg);

  // Rows of the labeled type contributing to the loss mean.
  void set_loss_nodes(const std::vector<NodeId>& ids);
  // Rows over which the semantic-importance mean runs (training split while
  // training, the scored split at evaluation).
  void set_semantic_nodes(const std::vector<NodeId>& ids);

  double forward(bool training);  // returns the loss
  void backward();

  const Tensor& logits() const { return tape_.value(logits_node_); }
  const std::vector<double>& per_node_losses() const { return tape_.row_losses(loss_node_); }
  std::vector<double> semantic_weights() const;  // beta, one per metapath

  // Node-level attention column (post-softmax, pre-dropout) for one
  // (metapath, head); rows follow the instance table's canonical order.
  const Tensor& node_attention(std::size_t schema_idx, int head) const;
  const std::vector<std::int64_t>& segment_offsets(std::size_t schema_idx) const;
  std::size_t fallback_count(std::size_t schema_idx) const;

  Tape& tape() { return tape_; }
  int loss_node() const { return loss_node_; }
  std::size_t num_labeled() const { return num_labeled_; }
  const ModelConfig& config() const { return cfg_; }
  const std::vector<std::string>& metapath_names() const { return metapath_names_; }

 private:
  ModelConfig cfg_;
  Tape tape_;
  int loss_node_ = -1;
  int logits_node_ = -1;
  int beta_node_ = -1;
  int loss_mask_ = -1;
  int sem_mask_ = -1;
  std::size_t num_labeled_ = 0;
  std::vector<std::string> metapath_names_;
  std::vector<std::vector<int>> alpha_nodes_;        // [schema][head]
  std::vector<std::vector<std::int64_t>> offsets_;   // per schema
  std::vector<std::size_t> fallback_counts_;
};

// Glorot-uniform fill: limit sqrt(6 / (fan_in + fan_out)) over the first two
// axes; used for every weight matrix and attention vector.
void glorot_init(Tensor& t, RandomStream& rng);

// Contract-level single-node operations. These mirror the batched tape
// stages and exist for direct use in tests and the python surface.

// h' = h_raw * M for every row.
Tensor type_project(const Tensor& raw_rows, const Tensor& projection);

// e_j = LeakyReLU(a . [h_v || enc_j]); alpha = softmax(e); z = ELU(sum alpha_j enc_j).
// With no encodings, alpha is empty and z = ELU(h_v).
std::pair<std::vector<double>, std::vector<double>> instance_attention_aggregate(
    const std::vector<double>& h_v, const InstanceFeatures& encodings,
    const std::vector<double>& attention, double slope);

std::vector<double> multi_head_concat(const InstanceFeatures& head_outputs);

// w_p = mean over mean_nodes of q . tanh(z W + b); beta = softmax(w);
// fused = sum beta_p Z_p.
std::pair<std::vector<double>, Tensor> semantic_fuse(const std::vector<Tensor>& z_per_metapath,
                                                     const Tensor& w, const Tensor& b,
                                                     const Tensor& q,
                                                     const std::vector<NodeId>& mean_nodes);

// Mean over node_set of the per-node class-summed BCE, in the log-sum-exp
// form; also returns per-node losses for every row.
std::pair<double, std::vector<double>> bce_with_logits_loss(const Tensor& logits,
                                                            const Tensor& labels,
                                                            const std::vector<NodeId>& node_set);

}  // namespace hanme
