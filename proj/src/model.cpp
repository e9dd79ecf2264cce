#include "hanme/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hanme/error.hpp"

namespace hanme {

EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "multihop") return EncoderKind::kMultihop;
  if (s == "direct") return EncoderKind::kDirect;
  if (s == "terminal-only") return EncoderKind::kTerminalOnly;
  throw ConfigError("unknown encoder '" + s + "' (want multihop, direct or terminal-only)");
}

std::string to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::kMultihop: return "multihop";
    case EncoderKind::kDirect: return "direct";
    case EncoderKind::kTerminalOnly: return "terminal-only";
  }
  return "?";
}

void glorot_init(Tensor& t, RandomStream& rng) {
  const std::size_t fan_in = t.rows();
  const std::size_t fan_out = t.cols();
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
}

HanMeModel::HanMeModel(const HeteroGraph& g, const std::vector<InstanceTable>& tables,
                       const ModelConfig& cfg)
    : cfg_(cfg), tape_(cfg.seed) {
  if (tables.empty()) throw ConfigError("model: at least one metapath required");
  if (cfg.heads < 1 || cfg.hidden < 1 || cfg.semantic_hidden < 1) {
    throw ConfigError("model: heads and widths must be >= 1");
  }
  if (g.labeled_type.empty() || g.num_classes < 1) {
    throw ConfigError("model: graph has no labeled type");
  }
  for (const auto& table : tables) {
    if (table.schema.node_types.front() != g.labeled_type) {
      throw ConfigError("model: metapath '" + table.schema.name +
                        "' is not rooted at the labeled type");
    }
  }
  for (std::size_t i = 0; i < tables.size(); ++i) {
    for (std::size_t j = i + 1; j < tables.size(); ++j) {
      if (tables[i].schema.name == tables[j].schema.name) {
        throw ConfigError("model: metapath '" + tables[i].schema.name + "' listed twice");
      }
    }
  }

  const std::size_t d = static_cast<std::size_t>(cfg.hidden);
  const std::size_t ds = static_cast<std::size_t>(cfg.semantic_hidden);
  const std::size_t S = static_cast<std::size_t>(g.count(g.labeled_type));
  const std::size_t C = static_cast<std::size_t>(g.num_classes);
  num_labeled_ = S;
  RandomStream rng(cfg.seed);

  // Type-specific projection into the shared width, then feature dropout.
  // One projection per node type, shared by all metapaths and heads.
  std::map<std::string, int> projected;
  auto project_type = [&](const std::string& type) {
    auto it = projected.find(type);
    if (it != projected.end()) return it->second;
    const std::size_t raw = g.feature_dim(type);
    if (raw == 0) {
      throw ConfigError("model: node type '" + type + "' has no features (pool first)");
    }
    const int x = tape_.constant(g.features.at(type));
    const int m = tape_.param("proj." + type, {raw, d});
    glorot_init(tape_.value(m), rng);
    const int h = tape_.dropout(tape_.matmul(x, m), cfg.dropout);
    projected[type] = h;
    return h;
  };

  const int h_labeled = project_type(g.labeled_type);
  const int loss_mask = tape_.input("loss_mask", {S});
  const int sem_mask = tape_.input("sem_mask", {S});
  loss_mask_ = loss_mask;
  sem_mask_ = sem_mask;

  std::vector<int> z_per_schema;
  std::vector<int> w_per_schema;

  const int sem_w = tape_.param("sem.W", {d * static_cast<std::size_t>(cfg.heads), ds});
  glorot_init(tape_.value(sem_w), rng);
  const int sem_b = tape_.param("sem.b", {ds});
  const int sem_q = tape_.param("sem.q", {ds, 1});
  glorot_init(tape_.value(sem_q), rng);

  for (std::size_t si = 0; si < tables.size(); ++si) {
    const InstanceTable& table = tables[si];
    const std::size_t k = table.schema.length();
    metapath_names_.push_back(table.schema.name);

    // Canonical-order gathers, one per chain position, shared by all heads.
    const std::size_t n_inst = static_cast<std::size_t>(table.num_instances());
    std::vector<int> gathers(k + 1);
    for (std::size_t j = 0; j <= k; ++j) {
      std::vector<std::int64_t> idx(n_inst);
      for (std::size_t r = 0; r < n_inst; ++r) {
        idx[r] = table.nodes[r * (k + 1) + j];
      }
      gathers[j] = tape_.gather_rows(project_type(table.schema.node_types[j]), std::move(idx));
    }
    offsets_.push_back(table.offsets);

    // Fallback for sources with no instances: the projected self feature.
    Tensor fb_mask({S});
    std::size_t fallbacks = 0;
    for (std::size_t v = 0; v < S; ++v) {
      if (table.count_for(static_cast<NodeId>(v)) == 0) {
        fb_mask[v] = 1.0;
        ++fallbacks;
      }
    }
    fallback_counts_.push_back(fallbacks);
    const int fb = tape_.col_scale(h_labeled, tape_.constant(std::move(fb_mask)));

    std::vector<int> head_outputs;
    std::vector<int> head_alphas;
    for (int head = 0; head < cfg.heads; ++head) {
      const std::string prefix =
          "mp." + table.schema.name + ".h" + std::to_string(head) + ".";

      int enc = -1;
      switch (cfg.encoder) {
        case EncoderKind::kMultihop: {
          const int wh = tape_.param(prefix + "enc.w_h", {d, d});
          const int wt = tape_.param(prefix + "enc.w_t", {d, d});
          const int va = tape_.param(prefix + "enc.v_a", {2 * d, 1});
          glorot_init(tape_.value(wh), rng);
          glorot_init(tape_.value(wt), rng);
          glorot_init(tape_.value(va), rng);
          enc = tape_.multihop_chain(gathers, wh, wt, va, cfg.gamma, cfg.leaky_slope);
          break;
        }
        case EncoderKind::kDirect: {
          const int wt = tape_.param(prefix + "enc.w_t", {d, d});
          const int wh = tape_.param(prefix + "enc.w_h", {d, d});
          glorot_init(tape_.value(wt), rng);
          glorot_init(tape_.value(wh), rng);
          enc = tape_.direct_chain(gathers, wt, wh);
          break;
        }
        case EncoderKind::kTerminalOnly:
          enc = gathers[k];
          break;
      }

      const int a = tape_.param(prefix + "att.a", {2 * d, 1});
      glorot_init(tape_.value(a), rng);
      const int e =
          tape_.leaky_relu(tape_.matmul(tape_.concat_cols({gathers[0], enc}), a),
                           cfg.leaky_slope);
      const int alpha = tape_.segment_softmax(e, table.offsets);
      head_alphas.push_back(alpha);
      const int alpha_d = tape_.dropout(alpha, cfg.dropout);
      const int agg = tape_.segment_sum(tape_.col_scale(enc, alpha_d), table.offsets);
      head_outputs.push_back(tape_.elu(tape_.add(agg, fb)));
    }
    alpha_nodes_.push_back(head_alphas);

    const int z = cfg.heads == 1 ? head_outputs[0] : tape_.concat_cols(head_outputs);
    z_per_schema.push_back(z);

    const int t = tape_.tanh(tape_.add_row_vec(tape_.matmul(z, sem_w), sem_b));
    w_per_schema.push_back(tape_.masked_mean(tape_.matmul(t, sem_q), sem_mask));
  }

  beta_node_ = tape_.softmax(tape_.stack_scalars(w_per_schema), 0);
  const int fused = tape_.lin_comb(beta_node_, z_per_schema);

  const int clf_w = tape_.param("clf.W", {d * static_cast<std::size_t>(cfg.heads), C});
  glorot_init(tape_.value(clf_w), rng);
  const int clf_b = tape_.param("clf.b", {C});
  logits_node_ = tape_.add_row_vec(tape_.matmul(fused, clf_w), clf_b);
  loss_node_ = tape_.bce_with_logits(logits_node_, g.labels, loss_mask);

  // Default masks: every labeled row.
  Tensor ones({S});
  ones.fill(1.0);
  tape_.value(loss_mask_) = ones;
  tape_.value(sem_mask_) = ones;
}

void HanMeModel::set_loss_nodes(const std::vector<NodeId>& ids) {
  Tensor& m = tape_.value(loss_mask_);
  m.zero();
  for (NodeId v : ids) m[static_cast<std::size_t>(v)] = 1.0;
}

void HanMeModel::set_semantic_nodes(const std::vector<NodeId>& ids) {
  Tensor& m = tape_.value(sem_mask_);
  m.zero();
  for (NodeId v : ids) m[static_cast<std::size_t>(v)] = 1.0;
}

double HanMeModel::forward(bool training) {
  tape_.forward(training);
  return tape_.value(loss_node_)[0];
}

void HanMeModel::backward() { tape_.backward(loss_node_); }

std::vector<double> HanMeModel::semantic_weights() const {
  const Tensor& b = tape_.value(beta_node_);
  return std::vector<double>(b.data(), b.data() + b.size());
}

const Tensor& HanMeModel::node_attention(std::size_t schema_idx, int head) const {
  return tape_.value(alpha_nodes_.at(schema_idx).at(head));
}

const std::vector<std::int64_t>& HanMeModel::segment_offsets(std::size_t schema_idx) const {
  return offsets_.at(schema_idx);
}

std::size_t HanMeModel::fallback_count(std::size_t schema_idx) const {
  return fallback_counts_.at(schema_idx);
}

// --------------------------------------------------- contract-level ops ----

Tensor type_project(const Tensor& raw_rows, const Tensor& projection) {
  if (raw_rows.ndim() != 2 || projection.ndim() != 2 ||
      raw_rows.shape()[1] != projection.shape()[0]) {
    throw DimensionError("type_project: raw width must match projection rows");
  }
  const std::size_t n = raw_rows.shape()[0], rdim = raw_rows.shape()[1],
                    d = projection.shape()[1];
  Tensor out({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < rdim; ++r) {
      const double x = raw_rows.at(i, r);
      if (x == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) out.at(i, c) += x * projection.at(r, c);
    }
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> instance_attention_aggregate(
    const std::vector<double>& h_v, const InstanceFeatures& encodings,
    const std::vector<double>& attention, double slope) {
  const std::size_t d = h_v.size();
  if (attention.size() != 2 * d) {
    throw DimensionError("instance_attention: attention vector must have width 2d");
  }
  auto elu = [](double x) { return x > 0.0 ? x : std::expm1(x); };

  if (encodings.empty()) {
    std::vector<double> z(d);
    for (std::size_t c = 0; c < d; ++c) z[c] = elu(h_v[c]);
    return {std::vector<double>{}, z};
  }

  std::vector<double> e(encodings.size());
  for (std::size_t j = 0; j < encodings.size(); ++j) {
    if (encodings[j].size() != d) throw DimensionError("instance_attention: encoding width");
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += attention[c] * h_v[c];
    for (std::size_t c = 0; c < d; ++c) s += attention[d + c] * encodings[j][c];
    e[j] = s > 0.0 ? s : slope * s;
  }
  const double mx = *std::max_element(e.begin(), e.end());
  double sum = 0.0;
  std::vector<double> alpha(e.size());
  for (std::size_t j = 0; j < e.size(); ++j) {
    alpha[j] = std::exp(e[j] - mx);
    sum += alpha[j];
  }
  for (double& a : alpha) a /= sum;

  std::vector<double> z(d, 0.0);
  for (std::size_t j = 0; j < encodings.size(); ++j) {
    for (std::size_t c = 0; c < d; ++c) z[c] += alpha[j] * encodings[j][c];
  }
  for (double& v : z) v = elu(v);
  return {alpha, z};
}

std::vector<double> multi_head_concat(const InstanceFeatures& head_outputs) {
  if (head_outputs.empty()) throw DimensionError("multi_head_concat: no heads");
  const std::size_t d = head_outputs[0].size();
  std::vector<double> out;
  out.reserve(d * head_outputs.size());
  for (const auto& h : head_outputs) {
    if (h.size() != d) throw DimensionError("multi_head_concat: head widths differ");
    out.insert(out.end(), h.begin(), h.end());
  }
  return out;
}

std::pair<std::vector<double>, Tensor> semantic_fuse(const std::vector<Tensor>& z_per_metapath,
                                                     const Tensor& w, const Tensor& b,
                                                     const Tensor& q,
                                                     const std::vector<NodeId>& mean_nodes) {
  if (z_per_metapath.empty()) throw DimensionError("semantic_fuse: no metapaths");
  const std::size_t S = z_per_metapath[0].rows();
  const std::size_t dk = z_per_metapath[0].cols();
  const std::size_t ds = w.cols();
  if (w.rows() != dk || b.size() != ds || q.rows() != ds) {
    throw DimensionError("semantic_fuse: attention shapes do not match embedding width");
  }
  if (mean_nodes.empty()) throw DimensionError("semantic_fuse: empty node set");

  std::vector<double> importance;
  for (const Tensor& z : z_per_metapath) {
    if (z.rows() != S || z.cols() != dk) throw DimensionError("semantic_fuse: Z shapes differ");
    double acc = 0.0;
    std::vector<double> t(ds);
    for (NodeId v : mean_nodes) {
      for (std::size_t c = 0; c < ds; ++c) t[c] = b[c];
      for (std::size_t r = 0; r < dk; ++r) {
        const double x = z.at(v, r);
        if (x == 0.0) continue;
        for (std::size_t c = 0; c < ds; ++c) t[c] += x * w.at(r, c);
      }
      double dot = 0.0;
      for (std::size_t c = 0; c < ds; ++c) dot += q[c] * std::tanh(t[c]);
      acc += dot;
    }
    importance.push_back(acc / static_cast<double>(mean_nodes.size()));
  }

  const double mx = *std::max_element(importance.begin(), importance.end());
  double sum = 0.0;
  std::vector<double> beta(importance.size());
  for (std::size_t p = 0; p < beta.size(); ++p) {
    beta[p] = std::exp(importance[p] - mx);
    sum += beta[p];
  }
  for (double& x : beta) x /= sum;

  Tensor fused({S, dk});
  for (std::size_t p = 0; p < beta.size(); ++p) {
    const Tensor& z = z_per_metapath[p];
    for (std::size_t i = 0; i < fused.size(); ++i) fused[i] += beta[p] * z[i];
  }
  return {beta, std::move(fused)};
}

std::pair<double, std::vector<double>> bce_with_logits_loss(const Tensor& logits,
                                                            const Tensor& labels,
                                                            const std::vector<NodeId>& node_set) {
  if (!logits.same_shape(labels)) throw DimensionError("bce_with_logits: shape mismatch");
  if (node_set.empty()) throw DimensionError("bce_with_logits: empty node set");
  const std::size_t S = logits.rows(), C = logits.cols();
  std::vector<double> per_row(S, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    double l = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double z = logits.at(s, c), y = labels.at(s, c);
      l += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    per_row[s] = l;
  }
  double total = 0.0;
  for (NodeId v : node_set) total += per_row[static_cast<std::size_t>(v)];
  return {total / static_cast<double>(node_set.size()), per_row};
}

}  // namespace hanme
