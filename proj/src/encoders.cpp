#include "hanme/encoders.hpp"

#include <cassert>
#include <cmath>

#include "hanme/error.hpp"

namespace hanme {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }
double dleaky(double x, double slope) { return x > 0.0 ? 1.0 : slope; }

// u = x * W for row-major W [d x d].
void row_times_mat(const double* x, const double* w, std::size_t d, double* u) {
  for (std::size_t c = 0; c < d; ++c) u[c] = 0.0;
  for (std::size_t r = 0; r < d; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const double* wrow = w + r * d;
    for (std::size_t c = 0; c < d; ++c) u[c] += xr * wrow[c];
  }
}

std::vector<const double*> feature_ptrs(const InstanceFeatures& feats, std::size_t d) {
  if (feats.empty()) throw DimensionError("encoder: instance has no nodes");
  std::vector<const double*> ptrs(feats.size());
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (feats[i].size() != d) throw DimensionError("encoder: feature dims differ across nodes");
    ptrs[i] = feats[i].data();
  }
  return ptrs;
}

}  // namespace

void MultihopParams::validate(std::size_t d) const {
  if (w_h.ndim() != 2 || w_h.shape()[0] != d || w_h.shape()[1] != d ||
      w_t.ndim() != 2 || w_t.shape()[0] != d || w_t.shape()[1] != d ||
      v_a.ndim() != 2 || v_a.shape()[0] != 2 * d || v_a.shape()[1] != 1) {
    throw DimensionError("multihop params: shapes do not match feature dim");
  }
  if (gamma <= 0.0 || gamma >= 1.0) throw DimensionError("multihop params: gamma outside (0,1)");
}

void DirectParams::validate(std::size_t d) const {
  if (w_t.ndim() != 2 || w_t.shape()[0] != d || w_t.shape()[1] != d ||
      w_h.ndim() != 2 || w_h.shape()[0] != d || w_h.shape()[1] != d) {
    throw DimensionError("direct params: shapes do not match feature dim");
  }
}

namespace chain {

void multihop_forward(const double* const* feats, std::size_t k, std::size_t d,
                      const double* w_h, const double* w_t, const double* v_a,
                      double gamma, double slope, double* out, double* s_out, double* a_out) {
  const double* va_h = v_a;       // first d entries pair with the W_h half
  const double* va_t = v_a + d;   // last d entries pair with the W_t half
  std::vector<double> u(d), w(d);

  for (std::size_t j = 0; j <= k; ++j) {
    const double* xh = feats[j];                 // farther node of edge (j-1, j)
    const double* xt = feats[j == 0 ? 0 : j - 1];  // nearer node; self-loop uses h_0 twice
    row_times_mat(xh, w_h, d, u.data());
    row_times_mat(xt, w_t, d, w.data());
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += va_h[c] * u[c] + va_t[c] * w[c];
    s_out[j] = s;
    a_out[j] = stable_sigmoid(leaky(s, slope));
  }

  // h_0' = gamma*a0*h_0 + sum_i gamma*(1-gamma)^i (prod_{j<=i} a_j) h_i,
  // aggregating the untransformed features.
  for (std::size_t c = 0; c < d; ++c) out[c] = gamma * a_out[0] * feats[0][c];
  double damp = 1.0, prod = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    damp *= 1.0 - gamma;
    prod *= a_out[i];
    const double coeff = gamma * damp * prod;
    for (std::size_t c = 0; c < d; ++c) out[c] += coeff * feats[i][c];
  }
}

void multihop_backward(const double* const* feats, std::size_t k, std::size_t d,
                       const double* w_h, const double* w_t, const double* v_a,
                       double gamma, double slope, const double* s, const double* a,
                       const double* dout, double* const* dfeats, double* dw_h,
                       double* dw_t, double* dv_a) {
  const double* va_h = v_a;
  const double* va_t = v_a + d;

  // Aggregation term: coefficients on each h_i and their pullback to scores.
  std::vector<double> dcoeff(k + 1);
  for (std::size_t i = 0; i <= k; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) acc += dout[c] * feats[i][c];
    dcoeff[i] = acc;
  }
  std::vector<double> coeff(k + 1);
  coeff[0] = gamma * a[0];
  {
    double damp = 1.0, prod = 1.0;
    for (std::size_t i = 1; i <= k; ++i) {
      damp *= 1.0 - gamma;
      prod *= a[i];
      coeff[i] = gamma * damp * prod;
    }
  }
  for (std::size_t i = 0; i <= k; ++i) {
    if (!dfeats[i]) continue;
    for (std::size_t c = 0; c < d; ++c) dfeats[i][c] += coeff[i] * dout[c];
  }

  // d(score): self-loop directly, chain scores through the running products.
  std::vector<double> da(k + 1, 0.0);
  da[0] = gamma * dcoeff[0];
  std::vector<double> pre(k + 2, 1.0);  // pre[j] = prod_{t<j} a_t over t>=1
  for (std::size_t j = 1; j <= k; ++j) pre[j + 1] = pre[j] * a[j];
  double damp = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    damp *= 1.0 - gamma;
    const double dprod = gamma * damp * dcoeff[i];
    double suf = 1.0;
    for (std::size_t j = i; j >= 1; --j) {
      da[j] += dprod * pre[j] * suf;
      suf *= a[j];
    }
  }

  std::vector<double> u(d), w(d);
  for (std::size_t j = 0; j <= k; ++j) {
    if (da[j] == 0.0) continue;
    const double dl = da[j] * a[j] * (1.0 - a[j]);
    const double ds = dl * dleaky(s[j], slope);
    const double* xh = feats[j];
    const double* xt = feats[j == 0 ? 0 : j - 1];
    row_times_mat(xh, w_h, d, u.data());
    row_times_mat(xt, w_t, d, w.data());
    if (dv_a) {
      for (std::size_t c = 0; c < d; ++c) {
        dv_a[c] += ds * u[c];
        dv_a[d + c] += ds * w[c];
      }
    }
    // du = ds * va_h, dw = ds * va_t; push through the transforms.
    double* dxh = dfeats[j];
    double* dxt = dfeats[j == 0 ? 0 : j - 1];
    for (std::size_t r = 0; r < d; ++r) {
      double acc_h = 0.0, acc_t = 0.0;
      const double* whrow = w_h + r * d;
      const double* wtrow = w_t + r * d;
      for (std::size_t c = 0; c < d; ++c) {
        acc_h += va_h[c] * whrow[c];
        acc_t += va_t[c] * wtrow[c];
      }
      if (dxh) dxh[r] += ds * acc_h;
      if (dxt) dxt[r] += ds * acc_t;
    }
    if (dw_h) {
      for (std::size_t r = 0; r < d; ++r) {
        const double x = xh[r];
        if (x == 0.0) continue;
        double* row = dw_h + r * d;
        for (std::size_t c = 0; c < d; ++c) row[c] += ds * x * va_h[c];
      }
    }
    if (dw_t) {
      for (std::size_t r = 0; r < d; ++r) {
        const double x = xt[r];
        if (x == 0.0) continue;
        double* row = dw_t + r * d;
        for (std::size_t c = 0; c < d; ++c) row[c] += ds * x * va_t[c];
      }
    }
  }
}

void direct_forward(const double* const* feats, std::size_t k, std::size_t d,
                    const double* w_t, const double* w_h, double* out, double* alpha_out) {
  const double invsq = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> h0(d), hi(d);
  row_times_mat(feats[0], w_t, d, h0.data());
  for (std::size_t c = 0; c < d; ++c) out[c] = 0.0;
  for (std::size_t i = 0; i <= k; ++i) {
    const double* ht = h0.data();
    if (i > 0) {
      row_times_mat(feats[i], w_h, d, hi.data());
      ht = hi.data();
    }
    double dot = 0.0;
    for (std::size_t c = 0; c < d; ++c) dot += h0[c] * ht[c];
    alpha_out[i] = stable_sigmoid(dot * invsq);
    for (std::size_t c = 0; c < d; ++c) out[c] += alpha_out[i] * ht[c];
  }
}

void direct_backward(const double* const* feats, std::size_t k, std::size_t d,
                     const double* w_t, const double* w_h, const double* alpha,
                     const double* dout, double* const* dfeats, double* dw_t, double* dw_h) {
  const double invsq = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> h0(d);
  row_times_mat(feats[0], w_t, d, h0.data());
  std::vector<double> dh0(d, 0.0);
  std::vector<double> hi(d), dhi(d);

  for (std::size_t i = 0; i <= k; ++i) {
    const double* ht;
    if (i == 0) {
      ht = h0.data();
    } else {
      row_times_mat(feats[i], w_h, d, hi.data());
      ht = hi.data();
    }
    double dalpha = 0.0;
    for (std::size_t c = 0; c < d; ++c) dalpha += dout[c] * ht[c];
    const double ddot = dalpha * alpha[i] * (1.0 - alpha[i]) * invsq;

    if (i == 0) {
      // out term and both slots of the self dot product feed h~_0.
      for (std::size_t c = 0; c < d; ++c) dh0[c] += alpha[0] * dout[c] + 2.0 * ddot * h0[c];
    } else {
      for (std::size_t c = 0; c < d; ++c) {
        dhi[c] = alpha[i] * dout[c] + ddot * h0[c];
        dh0[c] += ddot * hi[c];
      }
      // h~_i = h_i * W_h
      if (dfeats[i]) {
        for (std::size_t r = 0; r < d; ++r) {
          double acc = 0.0;
          const double* row = w_h + r * d;
          for (std::size_t c = 0; c < d; ++c) acc += dhi[c] * row[c];
          dfeats[i][r] += acc;
        }
      }
      if (dw_h) {
        for (std::size_t r = 0; r < d; ++r) {
          const double x = feats[i][r];
          if (x == 0.0) continue;
          double* row = dw_h + r * d;
          for (std::size_t c = 0; c < d; ++c) row[c] += x * dhi[c];
        }
      }
    }
  }

  // h~_0 = h_0 * W_t
  if (dfeats[0]) {
    for (std::size_t r = 0; r < d; ++r) {
      double acc = 0.0;
      const double* row = w_t + r * d;
      for (std::size_t c = 0; c < d; ++c) acc += dh0[c] * row[c];
      dfeats[0][r] += acc;
    }
  }
  if (dw_t) {
    for (std::size_t r = 0; r < d; ++r) {
      const double x = feats[0][r];
      if (x == 0.0) continue;
      double* row = dw_t + r * d;
      for (std::size_t c = 0; c < d; ++c) row[c] += x * dh0[c];
    }
  }
}

}  // namespace chain

// ------------------------------------------------------------ numeric ops --

ChainScores one_hop_scores(const InstanceFeatures& feats, const MultihopParams& p) {
  const std::size_t d = feats.at(0).size();
  p.validate(d);
  auto ptrs = feature_ptrs(feats, d);
  const std::size_t k = feats.size() - 1;
  std::vector<double> out(d), s(k + 1);
  ChainScores scores;
  scores.a.resize(k + 1);
  chain::multihop_forward(ptrs.data(), k, d, p.w_h.data(), p.w_t.data(), p.v_a.data(),
                          p.gamma, p.leaky_slope, out.data(), s.data(), scores.a.data());
  return scores;
}

std::vector<double> multihop_encode(const InstanceFeatures& feats, const MultihopParams& p) {
  const std::size_t d = feats.at(0).size();
  p.validate(d);
  auto ptrs = feature_ptrs(feats, d);
  const std::size_t k = feats.size() - 1;
  std::vector<double> out(d), s(k + 1), a(k + 1);
  chain::multihop_forward(ptrs.data(), k, d, p.w_h.data(), p.w_t.data(), p.v_a.data(),
                          p.gamma, p.leaky_slope, out.data(), s.data(), a.data());
  return out;
}

std::vector<double> diffusion_series_encode(const InstanceFeatures& feats,
                                            const MultihopParams& p) {
  const std::size_t d = feats.at(0).size();
  p.validate(d);
  const std::size_t k = feats.size() - 1;
  const std::size_t n = k + 1;
  const ChainScores scores = one_hop_scores(feats, p);

  // Strictly superdiagonal chain matrix: A[j-1][j] = a_j.
  std::vector<double> A(n * n, 0.0);
  for (std::size_t j = 1; j <= k; ++j) A[(j - 1) * n + j] = scores.a[j];

  auto matmul_sq = [n](const std::vector<double>& X, const std::vector<double>& Y) {
    std::vector<double> Z(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < n; ++t) {
        const double x = X[i * n + t];
        if (x == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) Z[i * n + j] += x * Y[t * n + j];
      }
    }
    return Z;
  };

  // Series: the m=0 term is the virtual self-loop on the source; the rest
  // are explicit powers of the chain matrix, exact because A is nilpotent.
  std::vector<double> series(n * n, 0.0);
  series[0] = p.gamma * scores.a[0];
  std::vector<double> power = A;
  double damp = 1.0;
  for (std::size_t m = 1; m <= k; ++m) {
    damp *= 1.0 - p.gamma;
    for (std::size_t i = 0; i < n * n; ++i) series[i] += p.gamma * damp * power[i];
    power = matmul_sq(power, A);
  }
  // power now holds A^{k+1}; nilpotency means it is exactly zero, and stays
  // zero for every higher power.
  for (std::size_t i = 0; i < n * n; ++i) {
    if (power[i] != 0.0) throw CheckError("diffusion series: chain matrix is not nilpotent");
  }

  std::vector<double> out(d, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double w = series[j];  // row 0 of the diffusion matrix
    if (w == 0.0) continue;
    for (std::size_t c = 0; c < d; ++c) out[c] += w * feats[j][c];
  }
  return out;
}

std::vector<double> direct_encode(const InstanceFeatures& feats, const DirectParams& p) {
  const std::size_t d = feats.at(0).size();
  p.validate(d);
  auto ptrs = feature_ptrs(feats, d);
  const std::size_t k = feats.size() - 1;
  std::vector<double> out(d), alpha(k + 1);
  chain::direct_forward(ptrs.data(), k, d, p.w_t.data(), p.w_h.data(), out.data(), alpha.data());
  return out;
}

}  // namespace hanme
