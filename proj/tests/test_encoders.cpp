#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "hanme/encoders.hpp"
#include "hanme/error.hpp"
#include "hanme/random.hpp"

using namespace hanme;

namespace {

MultihopParams random_mh(RandomStream& rng, std::size_t d, double gamma = 0.4) {
  MultihopParams p;
  p.w_h = Tensor({d, d});
  p.w_t = Tensor({d, d});
  p.v_a = Tensor({2 * d, 1});
  for (std::size_t i = 0; i < p.w_h.size(); ++i) p.w_h[i] = rng.uniform(-0.7, 0.7);
  for (std::size_t i = 0; i < p.w_t.size(); ++i) p.w_t[i] = rng.uniform(-0.7, 0.7);
  for (std::size_t i = 0; i < p.v_a.size(); ++i) p.v_a[i] = rng.uniform(-0.7, 0.7);
  p.gamma = gamma;
  return p;
}

DirectParams random_direct(RandomStream& rng, std::size_t d) {
  DirectParams p;
  p.w_t = Tensor({d, d});
  p.w_h = Tensor({d, d});
  for (std::size_t i = 0; i < p.w_t.size(); ++i) p.w_t[i] = rng.uniform(-0.7, 0.7);
  for (std::size_t i = 0; i < p.w_h.size(); ++i) p.w_h[i] = rng.uniform(-0.7, 0.7);
  return p;
}

InstanceFeatures random_feats(RandomStream& rng, std::size_t k, std::size_t d, double mag = 1.5) {
  InstanceFeatures f(k + 1, std::vector<double>(d));
  for (auto& row : f) {
    for (auto& v : row) v = rng.uniform(-mag, mag);
  }
  return f;
}

double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(a[i]));
  }
  return num / std::max(den, 1e-30);
}

// Hand-rolled scalar route for one chain score, written with its own loops.
double oracle_score(const std::vector<double>& far, const std::vector<double>& near,
                    const MultihopParams& p) {
  const std::size_t d = far.size();
  double s = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    double u = 0.0, w = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
      u += far[r] * p.w_h.at(r, c);
      w += near[r] * p.w_t.at(r, c);
    }
    s += p.v_a[c] * u + p.v_a[d + c] * w;
  }
  const double act = s > 0 ? s : p.leaky_slope * s;
  return 1.0 / (1.0 + std::exp(-act));
}

}  // namespace

TEST_CASE("zero features with a zero attention vector score one half everywhere") {
  MultihopParams p;
  p.w_h = Tensor({3, 3});
  p.w_t = Tensor({3, 3});
  p.v_a = Tensor({6, 1});
  InstanceFeatures feats(4, std::vector<double>(3, 0.0));
  ChainScores s = one_hop_scores(feats, p);
  REQUIRE(s.a.size() == 4);
  for (double a : s.a) CHECK(a == 0.5);
}

TEST_CASE("a lone source yields only the self-loop score") {
  RandomStream rng(1);
  MultihopParams p = random_mh(rng, 4);
  InstanceFeatures feats = random_feats(rng, 0, 4);
  ChainScores s = one_hop_scores(feats, p);
  CHECK(s.a.size() == 1);
  CHECK(s.a[0] > 0.0);
  CHECK(s.a[0] < 1.0);
  CHECK(s.a[0] == doctest::Approx(oracle_score(feats[0], feats[0], p)).epsilon(1e-14));
}

TEST_CASE("one-hop scores match an independent scalar recomputation") {
  RandomStream rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    MultihopParams p = random_mh(rng, 5);
    InstanceFeatures feats = random_feats(rng, 2, 5);
    ChainScores s = one_hop_scores(feats, p);
    REQUIRE(s.a.size() == 3);
    CHECK(s.a[0] == doctest::Approx(oracle_score(feats[0], feats[0], p)).epsilon(1e-13));
    CHECK(s.a[1] == doctest::Approx(oracle_score(feats[1], feats[0], p)).epsilon(1e-13));
    CHECK(s.a[2] == doctest::Approx(oracle_score(feats[2], feats[1], p)).epsilon(1e-13));
    for (double a : s.a) {
      CHECK(a > 0.0);
      CHECK(a < 1.0);
    }
  }
}

TEST_CASE("one-hop chain weights are gamma*a00 and gamma*(1-gamma)*a10") {
  RandomStream rng(3);
  MultihopParams p = random_mh(rng, 3, 0.4);
  InstanceFeatures feats = random_feats(rng, 1, 3);
  ChainScores s = one_hop_scores(feats, p);
  auto enc = multihop_encode(feats, p);
  for (std::size_t c = 0; c < 3; ++c) {
    const double expect = 0.4 * s.a[0] * feats[0][c] + 0.24 * s.a[1] * feats[1][c];
    CHECK(enc[c] == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("a k=0 chain reduces to the damped self term") {
  RandomStream rng(4);
  for (double gamma : {0.1, 0.5, 0.9}) {
    MultihopParams p = random_mh(rng, 4, gamma);
    InstanceFeatures feats = random_feats(rng, 0, 4);
    ChainScores s = one_hop_scores(feats, p);
    auto enc = multihop_encode(feats, p);
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(enc[c] == doctest::Approx(gamma * s.a[0] * feats[0][c]).epsilon(1e-14));
    }
  }
}

TEST_CASE("closed form equals the matrix power series on random chains") {
  RandomStream rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + rng.index(8);
    const std::size_t d = 3 + rng.index(6);
    const double gamma = rng.uniform(0.05, 0.95);
    MultihopParams p = random_mh(rng, d, gamma);
    InstanceFeatures feats = random_feats(rng, k, d);
    worst = std::max(worst, rel_diff(multihop_encode(feats, p), diffusion_series_encode(feats, p)));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("equal scores damp strictly with hop distance") {
  // A zero attention vector makes every score 0.5, so basis-vector features
  // expose the raw hop coefficients in the output.
  const std::size_t k = 6, d = k + 1;
  MultihopParams p;
  p.w_h = Tensor({d, d});
  p.w_t = Tensor({d, d});
  p.v_a = Tensor({2 * d, 1});
  p.gamma = 0.4;
  InstanceFeatures feats(k + 1, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i <= k; ++i) feats[i][i] = 1.0;
  auto enc = multihop_encode(feats, p);
  for (std::size_t i = 1; i <= k; ++i) {
    CHECK(std::abs(enc[i]) < std::abs(enc[i - 1]));
  }
}

TEST_CASE("permuting intermediates changes the multihop encoding but not the direct one") {
  RandomStream rng(6);
  MultihopParams mh = random_mh(rng, 5);
  DirectParams dp = random_direct(rng, 5);
  InstanceFeatures feats = random_feats(rng, 3, 5);
  InstanceFeatures swapped = feats;
  std::swap(swapped[1], swapped[2]);

  auto a = multihop_encode(feats, mh);
  auto b = multihop_encode(swapped, mh);
  double diff = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) diff = std::max(diff, std::abs(a[c] - b[c]));
  CHECK(diff > 1e-6);

  CHECK(rel_diff(direct_encode(feats, dp), direct_encode(swapped, dp)) < 1e-12);
}

TEST_CASE("direct encoder on all-zero features attends 0.5 everywhere and returns zero") {
  DirectParams p;
  p.w_t = Tensor({4, 4});
  p.w_h = Tensor({4, 4});
  for (std::size_t i = 0; i < p.w_t.size(); ++i) p.w_t[i] = 0.3;
  for (std::size_t i = 0; i < p.w_h.size(); ++i) p.w_h[i] = -0.2;
  InstanceFeatures feats(3, std::vector<double>(4, 0.0));
  auto enc = direct_encode(feats, p);
  for (double v : enc) CHECK(v == 0.0);
}

TEST_CASE("direct encoder with k=0 is sigmoid(||h~||^2/sqrt(d)) times h~") {
  RandomStream rng(7);
  DirectParams p = random_direct(rng, 4);
  InstanceFeatures feats = random_feats(rng, 0, 4);

  std::vector<double> ht(4, 0.0);
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t r = 0; r < 4; ++r) ht[c] += feats[0][r] * p.w_t.at(r, c);
  }
  double norm2 = 0.0;
  for (double v : ht) norm2 += v * v;
  const double alpha = 1.0 / (1.0 + std::exp(-norm2 / 2.0));  // sqrt(4) = 2

  auto enc = direct_encode(feats, p);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(enc[c] == doctest::Approx(alpha * ht[c]).epsilon(1e-13));
  }
}

TEST_CASE("direct encoder matches an independent scalar recomputation") {
  RandomStream rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 4, k = 2;
    DirectParams p = random_direct(rng, d);
    InstanceFeatures feats = random_feats(rng, k, d);

    // Plain-loop route written independently of the library kernels.
    std::vector<std::vector<double>> transformed(k + 1, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i <= k; ++i) {
      const Tensor& w = i == 0 ? p.w_t : p.w_h;
      for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t r = 0; r < d; ++r) transformed[i][c] += feats[i][r] * w.at(r, c);
      }
    }
    std::vector<double> expect(d, 0.0);
    for (std::size_t i = 0; i <= k; ++i) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += transformed[0][c] * transformed[i][c];
      const double alpha = 1.0 / (1.0 + std::exp(-dot / std::sqrt(double(d))));
      for (std::size_t c = 0; c < d; ++c) expect[c] += alpha * transformed[i][c];
    }
    CHECK(rel_diff(direct_encode(feats, p), expect) < 1e-13);
  }
}

TEST_CASE("encoders stay finite on zero and large-magnitude inputs") {
  RandomStream rng(9);
  MultihopParams mh = random_mh(rng, 4);
  DirectParams dp = random_direct(rng, 4);
  for (double mag : {0.0, 1e3}) {
    InstanceFeatures feats(4, std::vector<double>(4, mag));
    for (double v : multihop_encode(feats, mh)) CHECK(std::isfinite(v));
    for (double v : direct_encode(feats, dp)) CHECK(std::isfinite(v));
    for (double a : one_hop_scores(feats, mh).a) {
      CHECK(std::isfinite(a));
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
    }
  }
}

TEST_CASE("dimension mismatches are rejected") {
  MultihopParams p;
  p.w_h = Tensor({3, 3});
  p.w_t = Tensor({3, 3});
  p.v_a = Tensor({5, 1});  // wrong: must be 2d x 1
  InstanceFeatures feats(2, std::vector<double>(3, 0.0));
  CHECK_THROWS_AS(multihop_encode(feats, p), DimensionError);

  InstanceFeatures ragged = {{0.0, 0.0, 0.0}, {0.0}};
  p.v_a = Tensor({6, 1});
  CHECK_THROWS_AS(multihop_encode(ragged, p), DimensionError);
}
