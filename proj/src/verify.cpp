#include "hanme/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>

#include "hanme/encoders.hpp"
#include "hanme/error.hpp"
#include "hanme/gradcheck.hpp"
#include "hanme/metapath.hpp"
#include "hanme/model.hpp"
#include "hanme/random.hpp"
#include "hanme/synthetic.hpp"
#include "hanme/trainer.hpp"

namespace fs = std::filesystem;

namespace hanme::verify {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Failure {
  std::string detail;
};

CheckResult run_check(const std::string& name, const std::function<std::string()>& body) {
  CheckResult r;
  r.name = name;
  const auto t0 = Clock::now();
  try {
    r.detail = body();
    r.passed = true;
  } catch (const Failure& f) {
    r.detail = f.detail;
  } catch (const std::exception& e) {
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = seconds_since(t0);
  return r;
}

void require(bool cond, const std::string& detail) {
  if (!cond) throw Failure{detail};
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

double vec_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(a[i]));
  }
  return num / std::max(den, 1e-30);
}

MultihopParams random_multihop_params(RandomStream& rng, std::size_t d, double gamma) {
  MultihopParams p;
  p.w_h = Tensor({d, d});
  p.w_t = Tensor({d, d});
  p.v_a = Tensor({2 * d, 1});
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < p.w_h.size(); ++i) p.w_h[i] = rng.uniform(-s, s);
  for (std::size_t i = 0; i < p.w_t.size(); ++i) p.w_t[i] = rng.uniform(-s, s);
  for (std::size_t i = 0; i < p.v_a.size(); ++i) p.v_a[i] = rng.uniform(-s, s);
  p.gamma = gamma;
  return p;
}

InstanceFeatures random_features(RandomStream& rng, std::size_t k, std::size_t d, double mag) {
  InstanceFeatures feats(k + 1, std::vector<double>(d));
  for (auto& row : feats) {
    for (auto& v : row) v = rng.uniform(-mag, mag);
  }
  return feats;
}

// A small scratch directory under the system temp root.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("hanme_verify_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

// ------------------------------------------------------------- criterion 1 --

std::string check_closed_form_vs_series() {
  const auto t0 = Clock::now();
  RandomStream rng(20240901);
  const std::size_t dims[] = {4, 16, 128};
  const double gammas[] = {0.1, 0.4, 0.9};
  double worst = 0.0;
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t k = 1 + static_cast<std::size_t>(rng.index(8));
    const std::size_t d = dims[rng.index(3)];
    const double gamma = gammas[rng.index(3)];
    MultihopParams p = random_multihop_params(rng, d, gamma);
    InstanceFeatures feats = random_features(rng, k, d, 2.0);
    const auto closed = multihop_encode(feats, p);
    const auto series = diffusion_series_encode(feats, p);
    worst = std::max(worst, vec_rel_error(closed, series));
  }
  const double elapsed = seconds_since(t0);
  require(worst <= 1e-10, "max relative error " + fmt(worst) + " > 1e-10");
  require(elapsed < 10.0, "runtime " + fmt(elapsed) + "s >= 10s");
  return "1000 draws, max relative error " + fmt(worst);
}

// ------------------------------------------------------------- criterion 2 --

std::string check_nilpotency() {
  RandomStream rng(77);
  for (std::size_t k = 1; k <= 8; ++k) {
    const std::size_t n = k + 1;
    std::vector<double> A(n * n, 0.0);
    for (std::size_t j = 1; j <= k; ++j) A[(j - 1) * n + j] = rng.uniform(0.01, 0.99);
    std::vector<double> P = A;
    for (std::size_t p = 2; p <= k + 4; ++p) {
      std::vector<double> next(n * n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < n; ++t) {
          const double x = P[i * n + t];
          if (x == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) next[i * n + j] += x * A[t * n + j];
        }
      }
      P = std::move(next);
      if (p >= n) {
        for (double v : P) {
          require(v == 0.0, "A^" + std::to_string(p) + " has a nonzero entry at k=" +
                                std::to_string(k));
        }
      } else {
        // A^p still carries its (0, p) entry while p <= k.
        require(P[p] != 0.0, "A^" + std::to_string(p) + " lost its (0,p) entry early");
      }
    }
  }
  return "A^p = 0 exactly for p >= k+1, k = 1..8";
}

// ------------------------------------------------------------- criterion 3 --

std::string check_pacing() {
  const double lambda0 = 0.1;
  for (PacingKind kind : {PacingKind::kLinear, PacingKind::kRoot, PacingKind::kGeometric}) {
    PacingConfig cfg{kind, lambda0, 10};
    require(pacing(cfg, 0) == lambda0, to_string(kind) + ": t=0 must be exactly lambda0");
    require(pacing(cfg, 10) == 1.0, to_string(kind) + ": t=T must be exactly 1");
    require(pacing(cfg, 17) == 1.0, to_string(kind) + ": t>T must clamp to 1");
  }
  const double lin_mid = pacing({PacingKind::kLinear, lambda0, 10}, 5);
  require(std::abs(lin_mid - 0.55) <= 1e-5, "linear midpoint " + fmt(lin_mid) + " != 0.55");
  const double geo_mid = pacing({PacingKind::kGeometric, lambda0, 10}, 5);
  require(std::abs(geo_mid - 0.31623) <= 1e-5, "geometric midpoint " + fmt(geo_mid) + " != 0.31623");
  return "endpoints exact, linear mid " + fmt(lin_mid) + ", geometric mid " + fmt(geo_mid);
}

// ------------------------------------------------------------- criterion 4 --

SyntheticConfig tiny_fixture_config() {
  SyntheticConfig cfg;
  cfg.node_types = {{"movie", 12, 5, {}, {}}, {"director", 4, 0, {}, {}},
                    {"actor", 4, 0, {}, {}}};
  cfg.num_classes = 2;
  cfg.communities = 2;
  cfg.intra_prob = 0.5;
  cfg.inter_prob = 0.1;
  cfg.feature_noise = 0.5;
  cfg.seed = 11;
  return cfg;
}

std::vector<double> flatten_params(Tape& tape) {
  std::vector<double> out;
  for (int p : tape.params()) {
    const Tensor& t = tape.value(p);
    out.insert(out.end(), t.data(), t.data() + t.size());
  }
  return out;
}

void unflatten_params(Tape& tape, const std::vector<double>& x) {
  std::size_t at = 0;
  for (int p : tape.params()) {
    Tensor& t = tape.value(p);
    std::copy(x.begin() + at, x.begin() + at + t.size(), t.data());
    at += t.size();
  }
}

std::string check_full_gradient() {
  const auto t0 = Clock::now();
  HeteroGraph g = gen_synthetic_graph(tiny_fixture_config());
  assign_pooled_features(g, {"director", "actor"});
  auto tables = extract_tables(g, {}, 0);

  double worst = 0.0;
  for (EncoderKind enc : {EncoderKind::kMultihop, EncoderKind::kDirect}) {
    ModelConfig mc;
    mc.encoder = enc;
    mc.heads = 2;
    mc.hidden = 6;
    mc.semantic_hidden = 8;
    mc.dropout = 0.0;
    mc.seed = 483;
    HanMeModel model(g, tables, mc);
    model.set_loss_nodes(g.train_ids);
    model.set_semantic_nodes(g.train_ids);
    FiniteDiffOptions opt;
    opt.eps = 1e-5;
    opt.max_coords_per_param = 12;
    worst = std::max(worst, finite_diff_check(model.tape(), model.loss_node(), opt));
  }
  require(worst < 1e-4, "max relative gradient error " + fmt(worst) + " >= 1e-4");

  // Negative control: corrupt one analytic coordinate and confirm the
  // checker flags it.
  ModelConfig mc;
  mc.encoder = EncoderKind::kMultihop;
  mc.heads = 1;
  mc.hidden = 4;
  mc.semantic_hidden = 4;
  mc.dropout = 0.0;
  mc.seed = 7;
  HanMeModel model(g, tables, mc);
  model.set_loss_nodes(g.train_ids);
  model.set_semantic_nodes(g.train_ids);
  Tape& tape = model.tape();
  tape.forward(false);
  tape.backward(model.loss_node());
  std::vector<double> analytic;
  for (int p : tape.params()) {
    const Tensor& gr = tape.grad(p);
    analytic.insert(analytic.end(), gr.data(), gr.data() + gr.size());
  }
  std::size_t imax = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (std::abs(analytic[i]) > std::abs(analytic[imax])) imax = i;
  }
  analytic[imax] += 10.0;  // the seeded bug
  const std::vector<double> at = flatten_params(tape);
  auto f = [&](const std::vector<double>& x) {
    unflatten_params(tape, x);
    tape.forward(false);
    return tape.value(model.loss_node())[0];
  };
  const double bug_err = finite_diff_max_rel_error(f, at, analytic, 1e-5);
  require(bug_err > 1e-2, "negative control error " + fmt(bug_err) + " <= 1e-2");

  const double elapsed = seconds_since(t0);
  require(elapsed < 30.0, "runtime " + fmt(elapsed) + "s >= 30s");
  return "max relative error " + fmt(worst) + ", negative control " + fmt(bug_err);
}

// ------------------------------------------------------------- criterion 5 --

std::string check_normalization() {
  double worst_alpha = 0.0, worst_beta = 0.0;
  for (int fixture = 0; fixture < 100; ++fixture) {
    RandomStream rng(5000 + fixture);
    SyntheticConfig cfg;
    cfg.node_types = {
        {"movie", static_cast<std::int64_t>(10 + rng.index(12)), 4, {}, {}},
        {"director", static_cast<std::int64_t>(3 + rng.index(5)), 0, {}, {}},
        {"actor", static_cast<std::int64_t>(3 + rng.index(5)), 0, {}, {}}};
    cfg.num_classes = 2;
    cfg.communities = 2;
    cfg.intra_prob = 0.4;
    cfg.inter_prob = 0.15;
    cfg.seed = 900 + fixture;
    HeteroGraph g = gen_synthetic_graph(cfg);
    assign_pooled_features(g, {"director", "actor"});
    auto tables = extract_tables(g, {}, 0);

    ModelConfig mc;
    mc.heads = 2;
    mc.hidden = 4;
    mc.semantic_hidden = 4;
    mc.dropout = 0.3;
    mc.seed = 1000 + fixture;
    mc.encoder = fixture % 2 ? EncoderKind::kDirect : EncoderKind::kMultihop;
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
          worst_alpha = std::max(worst_alpha, std::abs(sum - 1.0));
        }
      }
    }
    const auto beta = model.semantic_weights();
    double bsum = 0.0;
    for (double b : beta) bsum += b;
    worst_beta = std::max(worst_beta, std::abs(bsum - 1.0));
  }
  require(worst_alpha <= 1e-9, "node-level attention sum off by " + fmt(worst_alpha));
  require(worst_beta <= 1e-12, "semantic attention sum off by " + fmt(worst_beta));
  return "100 fixtures, worst |alpha sum - 1| " + fmt(worst_alpha) + ", worst |beta sum - 1| " +
         fmt(worst_beta);
}

// ------------------------------------------------------------- criterion 6 --

HeteroGraph random_hetero_graph(std::uint64_t seed) {
  RandomStream rng(seed);
  HeteroGraph g;
  const bool three_types = rng.bernoulli(0.5);
  g.node_types = {"a", "b"};
  if (three_types) g.node_types.push_back("c");
  std::int64_t budget = 50;
  for (const auto& t : g.node_types) {
    const std::int64_t n =
        std::min<std::int64_t>(3 + static_cast<std::int64_t>(rng.index(14)), budget - 2);
    g.node_counts[t] = std::max<std::int64_t>(n, 1);
    budget -= g.node_counts[t];
  }
  g.relations.push_back({"a", "ab", "b"});
  if (three_types) g.relations.push_back({"b", "bc", "c"});
  for (const auto& rel : g.relations) {
    auto& pairs = g.edges[rel];
    for (NodeId u = 0; u < g.node_counts[rel.src]; ++u) {
      for (NodeId v = 0; v < g.node_counts[rel.dst]; ++v) {
        if (rng.bernoulli(0.15)) pairs.push_back({u, v});
      }
    }
  }
  for (const auto& t : g.node_types) {
    g.features[t] = Tensor({static_cast<std::size_t>(g.node_counts[t]), 0});
  }
  g.finalize();
  return g;
}

// Walk enumeration straight off the raw edge pair lists, independent of the
// CSR path used by the extractor.
void brute_walks(const HeteroGraph& g, const MetapathSchema& schema, std::size_t depth,
                 std::vector<NodeId>& walk, std::set<std::vector<NodeId>>& out) {
  if (depth == schema.length()) {
    out.insert(walk);
    return;
  }
  const std::string& from = schema.node_types[depth];
  const std::string& to = schema.node_types[depth + 1];
  const std::string& rel = schema.relation_names[depth];
  std::set<NodeId> nexts;
  for (const auto& [key, pairs] : g.edges) {
    if (key.rel != rel) continue;
    if (key.src == from && key.dst == to) {
      for (auto [u, v] : pairs) {
        if (u == walk[depth]) nexts.insert(v);
      }
    }
    if (key.dst == from && key.src == to) {
      for (auto [u, v] : pairs) {
        if (v == walk[depth]) nexts.insert(u);
      }
    }
  }
  for (NodeId nxt : nexts) {
    walk[depth + 1] = nxt;
    brute_walks(g, schema, depth + 1, walk, out);
  }
}

std::string check_extractor() {
  std::size_t total = 0;
  for (int seedidx = 0; seedidx < 20; ++seedidx) {
    HeteroGraph g = random_hetero_graph(3100 + seedidx);
    std::vector<std::vector<std::string>> lists = {{"a", "b", "a"}};
    if (g.has_type("c")) lists.push_back({"a", "b", "c"});
    for (const auto& list : lists) {
      MetapathSchema schema = resolve_schema(g, list);
      InstanceTable table = enumerate_instances(g, schema);

      std::set<std::vector<NodeId>> expected;
      std::vector<NodeId> walk(schema.length() + 1);
      for (NodeId v = 0; v < g.node_counts.at(schema.node_types[0]); ++v) {
        walk[0] = v;
        brute_walks(g, schema, 0, walk, expected);
      }
      std::set<std::vector<NodeId>> got;
      for (std::int64_t r = 0; r < table.num_instances(); ++r) {
        auto row = table.instance(r);
        got.insert(std::vector<NodeId>(row.begin(), row.end()));
      }
      require(got == expected,
              "instance sets differ on seed " + std::to_string(seedidx) + " schema " + schema.name +
                  " (" + std::to_string(got.size()) + " vs " + std::to_string(expected.size()) + ")");
      total += expected.size();
    }
  }
  return "20 random graphs, " + std::to_string(total) + " walks matched";
}

// ------------------------------------------------------------- criterion 7 --

SyntheticConfig planted_config() {
  SyntheticConfig cfg;
  cfg.node_types = {{"movie", 200, 8, {}, {}}, {"director", 50, 0, {}, {}},
                    {"actor", 50, 0, {}, {}}};
  cfg.num_classes = 2;
  cfg.communities = 2;
  cfg.intra_prob = 0.10;
  cfg.inter_prob = 0.01;
  cfg.feature_noise = 1.0;
  cfg.label_noise = 0.0;
  cfg.seed = 7;
  return cfg;
}

TrainOptions planted_train_options() {
  TrainOptions t;
  t.encoder = EncoderKind::kMultihop;
  t.heads = 2;
  t.hidden = 16;
  t.semantic_hidden = 16;
  t.dropout = 0.1;
  t.lr = 0.01;
  t.weight_decay = 5e-4;
  t.patience = 200;
  t.max_epochs = 200;
  t.seed = 483;
  t.pacing.kind = PacingKind::kOff;
  return t;
}

std::string check_end_to_end() {
  const auto t0 = Clock::now();
  TempDir dir("planted");
  gen_synthetic(planted_config(), (dir.path / "data").string());

  TrainOptions opt = planted_train_options();
  TrainResult multihop = train(opt, (dir.path / "data").string(), (dir.path / "mh").string());
  opt.encoder = EncoderKind::kTerminalOnly;
  TrainResult terminal = train(opt, (dir.path / "data").string(), (dir.path / "term").string());

  const double elapsed = seconds_since(t0);
  require(multihop.test_micro >= 0.95,
          "multihop test micro F1 " + fmt(multihop.test_micro) + " < 0.95");
  require(multihop.test_micro >= terminal.test_micro,
          "multihop " + fmt(multihop.test_micro) + " below terminal-only " +
              fmt(terminal.test_micro));
  require(elapsed < 120.0, "runtime " + fmt(elapsed) + "s >= 120s");
  return "multihop test micro " + fmt(multihop.test_micro) + " vs terminal-only " +
         fmt(terminal.test_micro) + " (" + fmt(elapsed) + "s)";
}

// ------------------------------------------------------------- criterion 8 --

std::string check_semantic_discrimination() {
  int wins = 0;
  std::ostringstream betas;
  for (int s = 0; s < 10; ++s) {
    SyntheticConfig cfg;
    cfg.node_types = {{"movie", 160, 8, {}, {}},
                      {"director", 30, 0, 0.15, 0.0},   // community-pure bridge
                      {"actor", 30, 0, 0.08, 0.08}};    // community-blind bridge
    cfg.num_classes = 2;
    cfg.communities = 2;
    cfg.feature_noise = 2.0;
    cfg.seed = 40 + s;

    TempDir dir("disc_" + std::to_string(s));
    gen_synthetic(cfg, (dir.path / "data").string());

    TrainOptions t;
    t.encoder = EncoderKind::kMultihop;
    t.heads = 2;
    t.hidden = 8;
    t.semantic_hidden = 8;
    t.dropout = 0.1;
    t.lr = 0.01;
    t.weight_decay = 5e-4;
    t.patience = 80;
    t.max_epochs = 80;
    t.seed = 100 + s;
    t.pacing.kind = PacingKind::kOff;
    TrainResult res = train(t, (dir.path / "data").string(), (dir.path / "run").string());

    double beta_dir = 0.0, beta_act = 0.0;
    for (std::size_t i = 0; i < res.metapath_names.size(); ++i) {
      if (res.metapath_names[i].find("director") != std::string::npos) {
        beta_dir = res.semantic_betas[i];
      } else {
        beta_act = res.semantic_betas[i];
      }
    }
    if (beta_dir > beta_act) ++wins;
    betas << " " << fmt(beta_dir) << ">" << fmt(beta_act) << (beta_dir > beta_act ? "+" : "-");
  }
  require(wins >= 9, "signal metapath won only " + std::to_string(wins) + "/10 seeds:" +
                         betas.str());
  return "signal metapath outweighed the blind one in " + std::to_string(wins) + "/10 seeds";
}

// ------------------------------------------------------------- criterion 9 --

std::string check_imdb(const Options& opt, bool& skipped) {
  if (opt.imdb_dir.empty() || !fs::exists(fs::path(opt.imdb_dir) / "manifest.json")) {
    skipped = true;
    return "no dataset directory supplied; property suite is the acceptance bar";
  }
  TempDir dir("imdb");
  TrainOptions t;  // stock full-scale defaults
  t.metapaths = {{"movie", "director", "movie"}, {"movie", "actor", "movie"}};
  t.encoder = EncoderKind::kMultihop;
  TrainResult multihop = train(t, opt.imdb_dir, (dir.path / "mh").string());
  t.encoder = EncoderKind::kTerminalOnly;
  TrainResult terminal = train(t, opt.imdb_dir, (dir.path / "term").string());

  require(std::abs(multihop.test_micro - 0.6801) <= 0.03,
          "multihop test micro " + fmt(multihop.test_micro) + " outside 0.6801 +/- 0.03");
  require(std::abs(terminal.test_micro - 0.6426) <= 0.03,
          "terminal-only test micro " + fmt(terminal.test_micro) + " outside 0.6426 +/- 0.03");
  require(multihop.test_micro > terminal.test_micro,
          "ordering violated: " + fmt(multihop.test_micro) + " <= " + fmt(terminal.test_micro));
  return "multihop " + fmt(multihop.test_micro) + ", terminal-only " + fmt(terminal.test_micro);
}

}  // namespace

std::vector<CheckResult> run_all(const Options& opt) {
  std::vector<CheckResult> out;
  out.push_back(run_check("multihop closed form vs diffusion series", check_closed_form_vs_series));
  out.push_back(run_check("chain matrix nilpotency", check_nilpotency));
  out.push_back(run_check("pacing endpoints and midpoints", check_pacing));
  out.push_back(run_check("full-model gradient check", check_full_gradient));
  out.push_back(run_check("attention normalization", check_normalization));
  out.push_back(run_check("extractor vs brute-force walks", check_extractor));
  out.push_back(run_check("end-to-end planted synthetic", check_end_to_end));
  out.push_back(run_check("semantic attention discrimination", check_semantic_discrimination));
  {
    CheckResult r;
    r.name = "imdb reproduction (optional)";
    const auto t0 = Clock::now();
    bool skipped = false;
    try {
      r.detail = check_imdb(opt, skipped);
      r.passed = !skipped;
      r.skipped = skipped;
    } catch (const Failure& f) {
      r.detail = f.detail;
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = seconds_since(t0);
    out.push_back(std::move(r));
  }
  return out;
}

int report(const std::vector<CheckResult>& results) {
  int failed = 0;
  for (const auto& r : results) {
    const char* tag = r.skipped ? "SKIP" : (r.passed ? "PASS" : "FAIL");
    if (!r.skipped && !r.passed) ++failed;
    std::printf("[%s] %s (%.2fs)%s%s\n", tag, r.name.c_str(), r.seconds,
                r.detail.empty() ? "" : ": ", r.detail.c_str());
  }
  return failed;
}

}  // namespace hanme::verify
