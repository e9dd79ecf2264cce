#include <doctest.h>

#include <cmath>
#include <vector>

#include "hanme/adam.hpp"
#include "hanme/error.hpp"
#include "hanme/gradcheck.hpp"
#include "hanme/model.hpp"
#include "hanme/random.hpp"
#include "hanme/synthetic.hpp"
#include "hanme/trainer.hpp"

using namespace hanme;

namespace {

SyntheticConfig small_cfg(std::uint64_t seed = 21, std::int64_t classes = 2) {
  SyntheticConfig cfg;
  cfg.node_types = {{"movie", 24, 5, {}, {}}, {"director", 6, 0, {}, {}},
                    {"actor", 6, 0, {}, {}}};
  cfg.num_classes = classes;
  cfg.communities = 2;
  cfg.intra_prob = 0.35;
  cfg.inter_prob = 0.1;
  cfg.seed = seed;
  return cfg;
}

HeteroGraph prepared(const SyntheticConfig& cfg) {
  HeteroGraph g = gen_synthetic_graph(cfg);
  assign_pooled_features(g, {"director", "actor"});
  return g;
}

ModelConfig tiny_model(EncoderKind enc = EncoderKind::kMultihop) {
  ModelConfig mc;
  mc.encoder = enc;
  mc.heads = 2;
  mc.hidden = 6;
  mc.semantic_hidden = 8;
  mc.dropout = 0.0;
  mc.seed = 483;
  return mc;
}

}  // namespace

TEST_CASE("type_project is the identity under an identity projection") {
  Tensor raw({3, 4});
  RandomStream rng(11);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = rng.uniform(-2, 2);

  Tensor eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
  Tensor same = type_project(raw, eye);
  for (std::size_t i = 0; i < raw.size(); ++i) CHECK(same[i] == raw[i]);

  Tensor zero({4, 4});
  Tensor zeros = type_project(raw, zero);
  for (std::size_t i = 0; i < zeros.size(); ++i) CHECK(zeros[i] == 0.0);

  SUBCASE("random projection matches a hand recomputation") {
    Tensor m({4, 2});
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(-1, 1);
    Tensor got = type_project(raw, m);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t c = 0; c < 2; ++c) {
        double want = 0.0;
        for (std::size_t r = 0; r < 4; ++r) want += raw.at(i, r) * m.at(r, c);
        CHECK(got.at(i, c) == doctest::Approx(want).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("instance attention: singletons, symmetry and the scalar oracle") {
  RandomStream rng(12);
  std::vector<double> h_v = {0.3, -0.8, 1.1};
  std::vector<double> attn(6);
  for (auto& v : attn) v = rng.uniform(-1, 1);

  SUBCASE("one instance gets all the weight") {
    InstanceFeatures enc = {{1.0, 2.0, -1.0}};
    auto [alpha, z] = instance_attention_aggregate(h_v, enc, attn, 0.2);
    REQUIRE(alpha.size() == 1);
    CHECK(alpha[0] == 1.0);
    CHECK(z[0] == 1.0);
    CHECK(z[2] == doctest::Approx(std::expm1(-1.0)).epsilon(1e-14));
  }

  SUBCASE("two identical encodings split evenly") {
    InstanceFeatures enc = {{1.0, 2.0, -1.0}, {1.0, 2.0, -1.0}};
    auto [alpha, z] = instance_attention_aggregate(h_v, enc, attn, 0.2);
    CHECK(alpha[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(alpha[1] == doctest::Approx(0.5).epsilon(1e-15));
  }

  SUBCASE("three instances match an independent softmax recomputation") {
    InstanceFeatures enc = {{1.0, 0.2, -1.0}, {0.4, -0.5, 0.9}, {-1.2, 0.8, 0.1}};
    auto [alpha, z] = instance_attention_aggregate(h_v, enc, attn, 0.2);

    std::vector<double> e(3);
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int c = 0; c < 3; ++c) s += attn[c] * h_v[c] + attn[3 + c] * enc[j][c];
      e[j] = s > 0 ? s : 0.2 * s;
    }
    double denom = 0.0;
    for (double v : e) denom += std::exp(v);
    double asum = 0.0;
    for (int j = 0; j < 3; ++j) {
      CHECK(alpha[j] == doctest::Approx(std::exp(e[j]) / denom).epsilon(1e-12));
      asum += alpha[j];
    }
    CHECK(asum == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("no instances fall back to the projected self feature") {
    auto [alpha, z] = instance_attention_aggregate(h_v, {}, attn, 0.2);
    CHECK(alpha.empty());
    CHECK(z[0] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(z[1] == doctest::Approx(std::expm1(-0.8)).epsilon(1e-14));
  }
}

TEST_CASE("multi-head concat is ordered and width-checked") {
  CHECK(multi_head_concat({{1.0, 2.0}}) == std::vector<double>{1.0, 2.0});
  CHECK(multi_head_concat({{0.0, 0.0}, {0.0, 0.0}}) == std::vector<double>(4, 0.0));
  InstanceFeatures heads(8, std::vector<double>(3, 1.0));
  CHECK(multi_head_concat(heads).size() == 24);
  CHECK_THROWS_AS(multi_head_concat({{1.0}, {1.0, 2.0}}), DimensionError);
}

TEST_CASE("semantic fusion: single path, symmetry") {
  RandomStream rng(13);
  Tensor z({4, 6});
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng.uniform(-1, 1);
  Tensor w({6, 5}), b({5}), q({5, 1});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = rng.uniform(-1, 1);

  auto [beta1, fused1] = semantic_fuse({z}, w, b, q, {0, 1, 2, 3});
  REQUIRE(beta1.size() == 1);
  CHECK(beta1[0] == 1.0);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(fused1[i] == z[i]);

  auto [beta2, fused2] = semantic_fuse({z, z}, w, b, q, {0, 2});
  CHECK(beta2[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(beta2[1] == doctest::Approx(0.5).epsilon(1e-15));
  for (std::size_t i = 0; i < z.size(); ++i) {
    CHECK(fused2[i] == doctest::Approx(z[i]).epsilon(1e-15));
  }
}

TEST_CASE("bce with logits: ln2 at zero, saturation stays finite, naive-formula oracle") {
  Tensor z({2, 3});
  Tensor y({2, 3});
  y.at(0, 0) = 1;
  y.at(1, 2) = 1;
  auto [loss, rows] = bce_with_logits_loss(z, y, {0, 1});
  CHECK(loss == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-14));
  CHECK(rows[0] == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-14));

  SUBCASE("saturated correct predictions give a tiny finite loss") {
    Tensor zs({1, 2});
    Tensor ys({1, 2});
    zs.at(0, 0) = 50.0;
    ys.at(0, 0) = 1.0;
    zs.at(0, 1) = -50.0;
    auto [l2, r2] = bce_with_logits_loss(zs, ys, {0});
    CHECK(std::isfinite(l2));
    CHECK(l2 < 1e-8);
  }

  SUBCASE("random logits match the naive sigmoid-then-log formula where finite") {
    RandomStream rng(14);
    Tensor zr({5, 4}), yr({5, 4});
    for (std::size_t i = 0; i < zr.size(); ++i) {
      zr[i] = rng.uniform(-6, 6);
      yr[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
    }
    auto [l3, r3] = bce_with_logits_loss(zr, yr, {0, 1, 2, 3, 4});
    double naive = 0.0;
    for (std::size_t s = 0; s < 5; ++s) {
      for (std::size_t c = 0; c < 4; ++c) {
        const double p = 1.0 / (1.0 + std::exp(-zr.at(s, c)));
        naive -= yr.at(s, c) * std::log(p) + (1 - yr.at(s, c)) * std::log(1 - p);
      }
    }
    CHECK(l3 == doctest::Approx(naive / 5.0).epsilon(1e-10));
  }

  CHECK_THROWS_AS(bce_with_logits_loss(z, y, {}), DimensionError);
}

TEST_CASE("forward is deterministic and shape-correct") {
  HeteroGraph g = prepared(small_cfg(21, 5));
  auto tables = extract_tables(g, {}, 0);

  ModelConfig mc = tiny_model();
  mc.dropout = 0.4;
  HanMeModel m1(g, tables, mc);
  HanMeModel m2(g, tables, mc);

  CHECK(m1.logits().rows() == 24);
  CHECK(m1.logits().cols() == 5);  // one logit per class

  const double l1 = m1.forward(true);
  const double l2 = m2.forward(true);
  CHECK(l1 == l2);
  for (std::size_t i = 0; i < m1.logits().size(); ++i) {
    CHECK(m1.logits()[i] == m2.logits()[i]);
  }
  const double e1 = m1.forward(false);
  const double e2 = m2.forward(false);
  CHECK(e1 == e2);
}

TEST_CASE("logits are invariant to edge file order") {
  SyntheticConfig cfg = small_cfg(22);
  HeteroGraph g1 = gen_synthetic_graph(cfg);
  HeteroGraph g2 = g1;
  for (auto& [key, pairs] : g2.edges) {
    (void)key;
    std::reverse(pairs.begin(), pairs.end());
  }
  g2.finalize();
  assign_pooled_features(g1, {"director", "actor"});
  assign_pooled_features(g2, {"director", "actor"});

  auto t1 = extract_tables(g1, {}, 0);
  auto t2 = extract_tables(g2, {}, 0);
  HanMeModel m1(g1, t1, tiny_model());
  HanMeModel m2(g2, t2, tiny_model());
  m1.forward(false);
  m2.forward(false);
  for (std::size_t i = 0; i < m1.logits().size(); ++i) {
    CHECK(m1.logits()[i] == m2.logits()[i]);
  }
}

TEST_CASE("tape attention agrees with the single-node contract route") {
  HeteroGraph g = prepared(small_cfg(23));
  auto tables = extract_tables(g, {}, 0);
  ModelConfig mc = tiny_model();
  HanMeModel model(g, tables, mc);
  model.forward(false);

  Tape& tape = model.tape();
  const std::size_t d = static_cast<std::size_t>(mc.hidden);

  // Numeric projected features per type (dropout is 0, so these match the
  // tape's internal values).
  std::map<std::string, Tensor> proj;
  for (const auto& type : g.node_types) {
    const int m = tape.find("proj." + type);
    REQUIRE(m >= 0);
    proj[type] = type_project(g.features.at(type), tape.value(m));
  }

  for (std::size_t si = 0; si < tables.size(); ++si) {
    const InstanceTable& table = tables[si];
    const std::string prefix = "mp." + table.schema.name + ".h0.";
    MultihopParams p;
    p.w_h = tape.value(tape.find(prefix + "enc.w_h"));
    p.w_t = tape.value(tape.find(prefix + "enc.w_t"));
    p.v_a = tape.value(tape.find(prefix + "enc.v_a"));
    p.gamma = mc.gamma;
    p.leaky_slope = mc.leaky_slope;
    const Tensor& attn = tape.value(tape.find(prefix + "att.a"));
    std::vector<double> attn_vec(attn.data(), attn.data() + attn.size());

    const Tensor& alpha = model.node_attention(si, 0);
    for (NodeId v = 0; v < std::min<NodeId>(table.num_sources, 8); ++v) {
      if (table.count_for(v) == 0) continue;
      InstanceFeatures encodings;
      for (std::int64_t r = table.offsets[v]; r < table.offsets[v + 1]; ++r) {
        auto row = table.instance(r);
        InstanceFeatures feats;
        for (std::size_t j = 0; j < row.size(); ++j) {
          const Tensor& h = proj.at(table.schema.node_types[j]);
          feats.emplace_back(h.data() + row[j] * d, h.data() + (row[j] + 1) * d);
        }
        encodings.push_back(multihop_encode(feats, p));
      }
      const Tensor& hl = proj.at(g.labeled_type);
      std::vector<double> h_v(hl.data() + v * d, hl.data() + (v + 1) * d);
      auto [want_alpha, z] = instance_attention_aggregate(h_v, encodings, attn_vec,
                                                          mc.leaky_slope);
      for (std::size_t j = 0; j < want_alpha.size(); ++j) {
        CHECK(alpha[table.offsets[v] + static_cast<std::int64_t>(j)] ==
              doctest::Approx(want_alpha[j]).epsilon(1e-11));
      }
    }
  }
}

TEST_CASE("attention normalizations hold on a fixture") {
  HeteroGraph g = prepared(small_cfg(24));
  auto tables = extract_tables(g, {}, 0);
  ModelConfig mc = tiny_model();
  mc.dropout = 0.5;
  HanMeModel model(g, tables, mc);
  model.forward(true);

  for (std::size_t si = 0; si < tables.size(); ++si) {
    const auto& offsets = model.segment_offsets(si);
    for (int head = 0; head < mc.heads; ++head) {
      const Tensor& alpha = model.node_attention(si, head);
      for (std::size_t seg = 0; seg + 1 < offsets.size(); ++seg) {
        if (offsets[seg] == offsets[seg + 1]) continue;
        double sum = 0.0;
        for (std::int64_t r = offsets[seg]; r < offsets[seg + 1]; ++r) sum += alpha[r];
        CHECK(std::abs(sum - 1.0) <= 1e-9);
      }
    }
  }
  auto beta = model.semantic_weights();
  double bsum = 0.0;
  for (double b : beta) bsum += b;
  CHECK(std::abs(bsum - 1.0) <= 1e-12);
}

TEST_CASE("zero-instance sources are flagged and the forward stays finite") {
  // Movie 0 has no edges at all: both metapaths fall back for it.
  HeteroGraph g;
  g.node_types = {"movie", "director"};
  g.node_counts["movie"] = 3;
  g.node_counts["director"] = 1;
  g.relations.push_back({"movie", "md", "director"});
  g.edges[{"movie", "md", "director"}] = {{1, 0}, {2, 0}};
  Tensor feats({3, 2});
  feats.at(0, 0) = 5.0;
  feats.at(1, 0) = 1.0;
  feats.at(2, 1) = -2.0;
  g.features["movie"] = feats;
  g.features["director"] = Tensor({1, 0});
  g.labeled_type = "movie";
  g.num_classes = 2;
  g.labels = Tensor({3, 2});
  g.labels.at(0, 0) = 1;
  g.labels.at(1, 1) = 1;
  g.labels.at(2, 0) = 1;
  g.has_label = {1, 1, 1};
  g.train_ids = {0, 1};
  g.val_ids = {2};
  g.finalize();
  assign_pooled_features(g, {"director"});

  auto tables = extract_tables(g, {}, 0);
  HanMeModel model(g, tables, tiny_model());
  CHECK(model.fallback_count(0) == 1);
  model.forward(false);
  CHECK(model.logits().all_finite());
  model.backward();
}

TEST_CASE("feature scaling changes logits but keeps shape and determinism") {
  SyntheticConfig cfg = small_cfg(27);
  HeteroGraph g1 = prepared(cfg);
  HeteroGraph g2 = g1;
  for (std::size_t i = 0; i < g2.features.at("movie").size(); ++i) {
    g2.features.at("movie")[i] *= 1000.0;
  }
  auto t1 = extract_tables(g1, {}, 0);
  auto t2 = extract_tables(g2, {}, 0);
  HanMeModel m1(g1, t1, tiny_model());
  HanMeModel m2(g2, t2, tiny_model());
  m1.forward(false);
  m2.forward(false);
  CHECK(m1.logits().shape() == m2.logits().shape());
  CHECK(m2.logits().all_finite());
  double diff = 0.0;
  for (std::size_t i = 0; i < m1.logits().size(); ++i) {
    diff = std::max(diff, std::abs(m1.logits()[i] - m2.logits()[i]));
  }
  CHECK(diff > 1e-9);  // no scale-invariance claim
}

TEST_CASE("a metapath with zero instances everywhere still runs on fallbacks") {
  HeteroGraph g;
  g.node_types = {"movie", "director"};
  g.node_counts["movie"] = 4;
  g.node_counts["director"] = 2;
  g.relations.push_back({"movie", "md", "director"});
  g.edges[{"movie", "md", "director"}] = {};  // relation exists, no edges
  Tensor feats({4, 3});
  for (std::size_t i = 0; i < feats.size(); ++i) feats[i] = 0.25 * static_cast<double>(i);
  g.features["movie"] = feats;
  g.features["director"] = Tensor({2, 3});
  g.labeled_type = "movie";
  g.num_classes = 2;
  g.labels = Tensor({4, 2});
  for (int i = 0; i < 4; ++i) g.labels.at(i, i % 2) = 1;
  g.has_label = {1, 1, 1, 1};
  g.train_ids = {0, 1};
  g.val_ids = {2, 3};
  g.finalize();

  auto tables = extract_tables(g, {{"movie", "director", "movie"}}, 0);
  CHECK(tables[0].num_instances() == 0);
  HanMeModel model(g, tables, tiny_model());
  CHECK(model.fallback_count(0) == 4);
  model.forward(false);
  CHECK(model.logits().all_finite());
  model.backward();
}

TEST_CASE("loss descends over twenty epochs on the planted fixture") {
  SyntheticConfig cfg = small_cfg(25);
  cfg.node_types[0].count = 60;
  HeteroGraph g = prepared(cfg);
  auto tables = extract_tables(g, {}, 0);
  ModelConfig mc = tiny_model();
  HanMeModel model(g, tables, mc);
  model.set_loss_nodes(g.train_ids);
  model.set_semantic_nodes(g.train_ids);
  AdamState adam = AdamState::init(model.tape());

  std::vector<double> losses;
  for (int epoch = 0; epoch < 20; ++epoch) {
    losses.push_back(model.forward(true));
    model.backward();
    adam_step(model.tape(), adam, 0.01, 0.0005);
  }
  CHECK(losses.back() < losses.front());
  for (double l : losses) CHECK(std::isfinite(l));
}

TEST_CASE("full-model gradients pass the finite-difference oracle") {
  SyntheticConfig cfg = small_cfg(26);
  cfg.node_types[0].count = 10;
  cfg.node_types[1].count = 3;
  cfg.node_types[2].count = 3;
  HeteroGraph g = prepared(cfg);
  auto tables = extract_tables(g, {}, 0);

  for (EncoderKind enc :
       {EncoderKind::kMultihop, EncoderKind::kDirect, EncoderKind::kTerminalOnly}) {
    ModelConfig mc = tiny_model(enc);
    mc.heads = 1;
    mc.hidden = 4;
    mc.semantic_hidden = 4;
    HanMeModel model(g, tables, mc);
    model.set_loss_nodes(g.train_ids);
    model.set_semantic_nodes(g.train_ids);
    FiniteDiffOptions opt;
    opt.max_coords_per_param = 6;
    CHECK(finite_diff_check(model.tape(), model.loss_node(), opt) < 1e-4);
  }
}
