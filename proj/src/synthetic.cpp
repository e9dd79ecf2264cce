#include "hanme/synthetic.hpp"

#include <algorithm>
#include <map>

#include <json.hpp>

#include "hanme/error.hpp"
#include "hanme/random.hpp"

using json = nlohmann::json;

namespace hanme {

SyntheticConfig SyntheticConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("synthetic config: " + std::string(e.what()));
  }
  SyntheticConfig cfg;
  try {
    cfg.num_classes = j.value("num_classes", cfg.num_classes);
    cfg.communities = j.value("communities", cfg.communities);
    cfg.intra_prob = j.value("intra_prob", cfg.intra_prob);
    cfg.inter_prob = j.value("inter_prob", cfg.inter_prob);
    cfg.label_noise = j.value("label_noise", cfg.label_noise);
    cfg.feature_noise = j.value("feature_noise", cfg.feature_noise);
    cfg.train_frac = j.value("train_frac", cfg.train_frac);
    cfg.val_frac = j.value("val_frac", cfg.val_frac);
    cfg.seed = j.value("seed", cfg.seed);
    for (const auto& t : j.at("node_types")) {
      SyntheticTypeConfig tc;
      tc.name = t.at("name").get<std::string>();
      tc.count = t.at("count").get<std::int64_t>();
      tc.feature_dim = t.value("feature_dim", std::int64_t{0});
      if (t.contains("intra_prob")) tc.intra_prob = t["intra_prob"].get<double>();
      if (t.contains("inter_prob")) tc.inter_prob = t["inter_prob"].get<double>();
      cfg.node_types.push_back(std::move(tc));
    }
  } catch (const json::exception& e) {
    throw ConfigError("synthetic config: " + std::string(e.what()));
  }
  cfg.validate();
  return cfg;
}

void SyntheticConfig::validate() const {
  if (node_types.size() < 2) throw ConfigError("synthetic config: need at least two node types");
  for (const auto& t : node_types) {
    if (t.count < 1) throw ConfigError("synthetic config: counts must be >= 1");
    if (t.feature_dim < 0) throw ConfigError("synthetic config: negative feature dim");
    for (auto p : {t.intra_prob, t.inter_prob}) {
      if (p && (*p < 0.0 || *p > 1.0)) throw ConfigError("synthetic config: probability outside [0,1]");
    }
  }
  if (node_types[0].feature_dim < 1) {
    throw ConfigError("synthetic config: labeled type needs feature_dim >= 1");
  }
  for (double p : {intra_prob, inter_prob, label_noise}) {
    if (p < 0.0 || p > 1.0) throw ConfigError("synthetic config: probability outside [0,1]");
  }
  if (num_classes < 1 || communities < 1) {
    throw ConfigError("synthetic config: classes and communities must be >= 1");
  }
  if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0) {
    throw ConfigError("synthetic config: bad split fractions");
  }
}

namespace {

// Community centroid: a distinct {0,1} stripe pattern per community.
double centroid(std::int64_t community, std::int64_t dim_index, std::int64_t communities) {
  return (dim_index % communities) == community ? 1.0 : 0.0;
}

}  // namespace

HeteroGraph gen_synthetic_graph(const SyntheticConfig& cfg) {
  cfg.validate();
  RandomStream rng(cfg.seed);
  HeteroGraph g;

  const auto& labeled = cfg.node_types[0];
  for (const auto& t : cfg.node_types) {
    g.node_types.push_back(t.name);
    g.node_counts[t.name] = t.count;
  }
  g.labeled_type = labeled.name;
  g.num_classes = cfg.num_classes;

  // Community assignment, labeled type first, then each bridge type.
  std::map<std::string, std::vector<std::int64_t>> community;
  for (const auto& t : cfg.node_types) {
    auto& c = community[t.name];
    c.resize(t.count);
    for (std::int64_t i = 0; i < t.count; ++i) {
      c[i] = static_cast<std::int64_t>(rng.index(static_cast<std::size_t>(cfg.communities)));
    }
  }

  // Features: community centroid plus uniform noise for every type that
  // declares a dimension; others are left at dim 0 for later pooling.
  for (const auto& t : cfg.node_types) {
    Tensor feats({static_cast<std::size_t>(t.count), static_cast<std::size_t>(t.feature_dim)});
    for (std::int64_t i = 0; i < t.count; ++i) {
      for (std::int64_t f = 0; f < t.feature_dim; ++f) {
        feats.at(i, f) = centroid(community[t.name][i], f, cfg.communities) +
                         rng.uniform(-cfg.feature_noise, cfg.feature_noise);
      }
    }
    g.features[t.name] = std::move(feats);
  }

  // Edges labeled <-> bridge, community-modulated Bernoulli per pair.
  for (std::size_t ti = 1; ti < cfg.node_types.size(); ++ti) {
    const auto& bridge = cfg.node_types[ti];
    const double p_intra = bridge.intra_prob.value_or(cfg.intra_prob);
    const double p_inter = bridge.inter_prob.value_or(cfg.inter_prob);
    Relation rel{labeled.name, "has_" + bridge.name, bridge.name};
    g.relations.push_back(rel);
    auto& pairs = g.edges[rel];
    for (std::int64_t u = 0; u < labeled.count; ++u) {
      for (std::int64_t b = 0; b < bridge.count; ++b) {
        const bool same = community[labeled.name][u] == community[bridge.name][b];
        if (rng.bernoulli(same ? p_intra : p_inter)) {
          pairs.push_back({static_cast<NodeId>(u), static_cast<NodeId>(b)});
        }
      }
    }
  }

  // Labels: class = community (mod class count), then per-bit noise flips.
  g.labels = Tensor({static_cast<std::size_t>(labeled.count),
                     static_cast<std::size_t>(cfg.num_classes)});
  g.has_label.assign(labeled.count, 1);
  for (std::int64_t i = 0; i < labeled.count; ++i) {
    const std::int64_t cls = community[labeled.name][i] % cfg.num_classes;
    for (std::int64_t c = 0; c < cfg.num_classes; ++c) {
      double y = (c == cls) ? 1.0 : 0.0;
      if (cfg.label_noise > 0.0 && rng.bernoulli(cfg.label_noise)) y = 1.0 - y;
      g.labels.at(i, c) = y;
    }
  }

  // Splits: shuffled labeled ids cut by the configured fractions.
  std::vector<NodeId> ids(labeled.count);
  for (std::int64_t i = 0; i < labeled.count; ++i) ids[i] = static_cast<NodeId>(i);
  rng.shuffle(ids);
  const std::size_t n_train = static_cast<std::size_t>(cfg.train_frac * labeled.count);
  const std::size_t n_val = static_cast<std::size_t>(cfg.val_frac * labeled.count);
  g.train_ids.assign(ids.begin(), ids.begin() + n_train);
  g.val_ids.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  g.test_ids.assign(ids.begin() + n_train + n_val, ids.end());
  std::sort(g.train_ids.begin(), g.train_ids.end());
  std::sort(g.val_ids.begin(), g.val_ids.end());
  std::sort(g.test_ids.begin(), g.test_ids.end());

  g.finalize();
  return g;
}

void gen_synthetic(const SyntheticConfig& cfg, const std::string& out_dir) {
  save_graph(gen_synthetic_graph(cfg), out_dir);
}

}  // namespace hanme
