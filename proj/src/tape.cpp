#include "hanme/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hanme/encoders.hpp"
#include "hanme/error.hpp"

namespace hanme {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// max(z,0) - z*y + log(1 + exp(-|z|)): the log-sum-exp form of binary
// cross-entropy with logits, finite for any z.
double stable_bce(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  return x;
}

}  // namespace

int Tape::push(Node n) {
  if (n.op != Op::kParam && n.op != Op::kInput && n.op != Op::kConst) {
    for (int in : n.inputs) {
      if (nodes_[in].requires_grad) n.requires_grad = true;
    }
  }
  if (n.requires_grad) n.grad = Tensor(n.value.shape());
  nodes_.push_back(std::move(n));
  row_loss_slot_.push_back(-1);
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::param(const std::string& name, std::vector<std::size_t> shape) {
  Node n;
  n.op = Op::kParam;
  n.name = name;
  n.value = Tensor(std::move(shape));
  n.requires_grad = true;
  int id = push(std::move(n));
  params_.push_back(id);
  return id;
}

int Tape::input(const std::string& name, std::vector<std::size_t> shape) {
  Node n;
  n.op = Op::kInput;
  n.name = name;
  n.value = Tensor(std::move(shape));
  return push(std::move(n));
}

int Tape::constant(Tensor value) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(value);
  return push(std::move(n));
}

int Tape::find(const std::string& name) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if ((nodes_[i].op == Op::kParam || nodes_[i].op == Op::kInput) && nodes_[i].name == name) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

// ---------------------------------------------------------------- builders --

int Tape::matmul(int a, int b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  if (A.ndim() != 2 || B.ndim() != 2 || A.shape()[1] != B.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes");
  }
  Node n;
  n.op = Op::kMatMul;
  n.inputs = {a, b};
  n.value = Tensor({A.shape()[0], B.shape()[1]});
  return push(std::move(n));
}

int Tape::concat_cols(const std::vector<int>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  std::size_t rows = nodes_[parts[0]].value.rows();
  std::size_t cols = 0;
  for (int p : parts) {
    const Tensor& t = nodes_[p].value;
    if (t.ndim() != 2 || t.rows() != rows) throw DimensionError("concat: row counts differ");
    cols += t.shape()[1];
  }
  Node n;
  n.op = Op::kConcatCols;
  n.inputs = parts;
  n.value = Tensor({rows, cols});
  return push(std::move(n));
}

int Tape::gather_rows(int src, std::vector<std::int64_t> idx) {
  const Tensor& S = nodes_[src].value;
  if (S.ndim() != 2) throw DimensionError("gather_rows: source must be 2-axis");
  for (auto i : idx) {
    if (i < 0 || i >= static_cast<std::int64_t>(S.shape()[0])) {
      throw DimensionError("gather_rows: index out of range");
    }
  }
  Node n;
  n.op = Op::kGatherRows;
  n.inputs = {src};
  n.indices = std::move(idx);
  n.value = Tensor({n.indices.size(), S.shape()[1]});
  return push(std::move(n));
}

int Tape::segment_sum(int src, std::vector<std::int64_t> offsets) {
  const Tensor& S = nodes_[src].value;
  if (S.ndim() != 2) throw DimensionError("segment_sum: source must be 2-axis");
  if (offsets.empty() || offsets.front() != 0 ||
      offsets.back() != static_cast<std::int64_t>(S.shape()[0])) {
    throw DimensionError("segment_sum: bad offsets");
  }
  Node n;
  n.op = Op::kSegmentSum;
  n.inputs = {src};
  n.indices = std::move(offsets);
  n.value = Tensor({n.indices.size() - 1, S.shape()[1]});
  return push(std::move(n));
}

int Tape::segment_softmax(int scores, std::vector<std::int64_t> offsets) {
  const Tensor& S = nodes_[scores].value;
  if (S.cols() != 1) throw DimensionError("segment_softmax: scores must be a column");
  if (offsets.empty() || offsets.front() != 0 ||
      offsets.back() != static_cast<std::int64_t>(S.rows())) {
    throw DimensionError("segment_softmax: bad offsets");
  }
  Node n;
  n.op = Op::kSegmentSoftmax;
  n.inputs = {scores};
  n.indices = std::move(offsets);
  n.value = Tensor(S.shape());
  return push(std::move(n));
}

int Tape::col_scale(int mat, int scale_col) {
  const Tensor& M = nodes_[mat].value;
  const Tensor& s = nodes_[scale_col].value;
  if (M.ndim() != 2 || s.cols() != 1 || s.rows() != M.rows()) {
    throw DimensionError("col_scale: scale must be one value per row");
  }
  Node n;
  n.op = Op::kColScale;
  n.inputs = {mat, scale_col};
  n.value = Tensor(M.shape());
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  if (!nodes_[a].value.same_shape(nodes_[b].value)) throw DimensionError("add: shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.inputs = {a, b};
  n.value = Tensor(nodes_[a].value.shape());
  return push(std::move(n));
}

int Tape::add_row_vec(int mat, int vec) {
  const Tensor& M = nodes_[mat].value;
  const Tensor& v = nodes_[vec].value;
  if (M.ndim() != 2 || v.ndim() != 1 || v.size() != M.shape()[1]) {
    throw DimensionError("add_row_vec: vector width must match columns");
  }
  Node n;
  n.op = Op::kAddRowVec;
  n.inputs = {mat, vec};
  n.value = Tensor(M.shape());
  return push(std::move(n));
}

int Tape::mul(int a, int b) {
  if (!nodes_[a].value.same_shape(nodes_[b].value)) throw DimensionError("mul: shape mismatch");
  Node n;
  n.op = Op::kMul;
  n.inputs = {a, b};
  n.value = Tensor(nodes_[a].value.shape());
  return push(std::move(n));
}

int Tape::scale(int a, double c) {
  Node n;
  n.op = Op::kScale;
  n.inputs = {a};
  n.attr0 = c;
  n.value = Tensor(nodes_[a].value.shape());
  return push(std::move(n));
}

int Tape::sigmoid(int a) {
  Node n;
  n.op = Op::kSigmoid;
  n.inputs = {a};
  n.value = Tensor(nodes_[a].value.shape());
  return push(std::move(n));
}

int Tape::tanh(int a) {
  Node n;
  n.op = Op::kTanh;
  n.inputs = {a};
  n.value = Tensor(nodes_[a].value.shape());
  return push(std::move(n));
}

int Tape::leaky_relu(int a, double slope) {
  Node n;
  n.op = Op::kLeakyRelu;
  n.inputs = {a};
  n.attr0 = slope;
  n.value = Tensor(nodes_[a].value.shape());
  return push(std::move(n));
}

int Tape::elu(int a) {
  Node n;
  n.op = Op::kElu;
  n.inputs = {a};
  n.value = Tensor(nodes_[a].value.shape());
  return push(std::move(n));
}

int Tape::exp(int a) {
  Node n;
  n.op = Op::kExp;
  n.inputs = {a};
  n.value = Tensor(nodes_[a].value.shape());
  return push(std::move(n));
}

int Tape::softmax(int a, int axis) {
  const Tensor& A = nodes_[a].value;
  if (A.ndim() == 1) {
    if (axis != 0) throw DimensionError("softmax: 1-axis tensors only have axis 0");
  } else if (A.ndim() == 2) {
    if (axis != 0 && axis != 1) throw DimensionError("softmax: axis must be 0 or 1");
  } else {
    throw DimensionError("softmax: needs 1- or 2-axis input");
  }
  Node n;
  n.op = Op::kSoftmax;
  n.inputs = {a};
  n.axis = axis;
  n.value = Tensor(A.shape());
  return push(std::move(n));
}

int Tape::row_sum(int a) {
  const Tensor& A = nodes_[a].value;
  if (A.ndim() != 2) throw DimensionError("row_sum: needs 2-axis input");
  Node n;
  n.op = Op::kRowSum;
  n.inputs = {a};
  n.value = Tensor({A.shape()[0]});
  return push(std::move(n));
}

int Tape::masked_mean(int col, int mask) {
  const Tensor& C = nodes_[col].value;
  const Tensor& M = nodes_[mask].value;
  if (C.cols() != 1 || M.cols() != 1 || C.rows() != M.rows()) {
    throw DimensionError("masked_mean: column/mask mismatch");
  }
  Node n;
  n.op = Op::kMaskedMean;
  n.inputs = {col, mask};
  n.value = Tensor({1});
  n.aux = Tensor({1});
  return push(std::move(n));
}

int Tape::dropout(int a, double p) {
  if (p < 0.0 || p >= 1.0) throw DimensionError("dropout: p must be in [0,1)");
  Node n;
  n.op = Op::kDropout;
  n.inputs = {a};
  n.attr0 = p;
  n.value = Tensor(nodes_[a].value.shape());
  n.aux = Tensor(nodes_[a].value.shape());
  n.rng = std::make_unique<RandomStream>(mix_seed(seed_, nodes_.size()));
  return push(std::move(n));
}

int Tape::stack_scalars(const std::vector<int>& xs) {
  for (int x : xs) {
    if (nodes_[x].value.size() != 1) throw DimensionError("stack_scalars: inputs must be scalars");
  }
  Node n;
  n.op = Op::kStackScalars;
  n.inputs = xs;
  n.value = Tensor({xs.size()});
  return push(std::move(n));
}

int Tape::lin_comb(int coeffs, const std::vector<int>& mats) {
  const Tensor& c = nodes_[coeffs].value;
  if (c.ndim() != 1 || c.size() != mats.size()) {
    throw DimensionError("lin_comb: one coefficient per matrix required");
  }
  for (int m : mats) {
    if (!nodes_[m].value.same_shape(nodes_[mats[0]].value)) {
      throw DimensionError("lin_comb: matrix shapes differ");
    }
  }
  Node n;
  n.op = Op::kLinComb;
  n.inputs.push_back(coeffs);
  for (int m : mats) n.inputs.push_back(m);
  n.value = Tensor(nodes_[mats[0]].value.shape());
  return push(std::move(n));
}

int Tape::multihop_chain(const std::vector<int>& feats, int w_h, int w_t, int v_a,
                         double gamma, double slope) {
  if (feats.empty()) throw DimensionError("multihop_chain: no positions");
  const Tensor& F0 = nodes_[feats[0]].value;
  const std::size_t d = F0.cols();
  for (int f : feats) {
    if (!nodes_[f].value.same_shape(F0)) throw DimensionError("multihop_chain: feature shapes differ");
  }
  const Tensor& Wh = nodes_[w_h].value;
  const Tensor& Wt = nodes_[w_t].value;
  const Tensor& va = nodes_[v_a].value;
  if (Wh.ndim() != 2 || Wh.shape()[0] != d || Wh.shape()[1] != d ||
      Wt.ndim() != 2 || Wt.shape()[0] != d || Wt.shape()[1] != d ||
      va.ndim() != 2 || va.shape()[0] != 2 * d || va.shape()[1] != 1) {
    throw DimensionError("multihop_chain: parameter shapes do not match feature dim");
  }
  if (gamma <= 0.0 || gamma >= 1.0) throw DimensionError("multihop_chain: gamma must be in (0,1)");
  Node n;
  n.op = Op::kMultihopChain;
  n.inputs = feats;
  n.inputs.push_back(w_h);
  n.inputs.push_back(w_t);
  n.inputs.push_back(v_a);
  n.attr0 = slope;
  n.attr1 = gamma;
  n.value = Tensor(F0.shape());
  n.aux = Tensor({F0.rows(), 2 * feats.size()});  // pre-activations and scores
  return push(std::move(n));
}

int Tape::direct_chain(const std::vector<int>& feats, int w_t, int w_h) {
  if (feats.empty()) throw DimensionError("direct_chain: no positions");
  const Tensor& F0 = nodes_[feats[0]].value;
  const std::size_t d = F0.cols();
  for (int f : feats) {
    if (!nodes_[f].value.same_shape(F0)) throw DimensionError("direct_chain: feature shapes differ");
  }
  const Tensor& Wt = nodes_[w_t].value;
  const Tensor& Wh = nodes_[w_h].value;
  if (Wt.ndim() != 2 || Wt.shape()[0] != d || Wt.shape()[1] != d ||
      Wh.ndim() != 2 || Wh.shape()[0] != d || Wh.shape()[1] != d) {
    throw DimensionError("direct_chain: parameter shapes do not match feature dim");
  }
  Node n;
  n.op = Op::kDirectChain;
  n.inputs = feats;
  n.inputs.push_back(w_t);
  n.inputs.push_back(w_h);
  n.value = Tensor(F0.shape());
  n.aux = Tensor({F0.rows(), feats.size()});  // attention weights
  return push(std::move(n));
}

int Tape::bce_with_logits(int logits, Tensor targets, int mask) {
  const Tensor& Z = nodes_[logits].value;
  const Tensor& M = nodes_[mask].value;
  if (Z.ndim() != 2 || !targets.same_shape(Z)) {
    throw DimensionError("bce_with_logits: logits/targets mismatch");
  }
  if (M.cols() != 1 || M.rows() != Z.rows()) {
    throw DimensionError("bce_with_logits: mask must have one entry per row");
  }
  Node n;
  n.op = Op::kBceWithLogits;
  n.inputs = {logits, mask};
  n.targets = std::move(targets);
  n.value = Tensor({1});
  n.aux = Tensor({1});
  int id = push(std::move(n));
  row_loss_slot_[id] = static_cast<int>(row_loss_store_.size());
  row_loss_store_.emplace_back(nodes_[logits].value.rows(), 0.0);
  return id;
}

const std::vector<double>& Tape::row_losses(int bce_node) const {
  return row_loss_store_.at(row_loss_slot_.at(bce_node));
}

void Tape::reset_rng(std::uint64_t seed) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op == Op::kDropout) {
      nodes_[i].rng = std::make_unique<RandomStream>(mix_seed(seed, i));
    }
  }
}

// ----------------------------------------------------------------- forward --

void Tape::forward(bool training) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) forward_node(static_cast<int>(i), training);
}

void Tape::forward_node(int id, bool training) {
  Node& n = nodes_[id];
  auto& in = n.inputs;
  switch (n.op) {
    case Op::kParam:
    case Op::kInput:
    case Op::kConst:
      return;
    case Op::kMatMul: {
      const Tensor& A = nodes_[in[0]].value;
      const Tensor& B = nodes_[in[1]].value;
      const std::size_t m = A.shape()[0], k = A.shape()[1], p = B.shape()[1];
      n.value.zero();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double a = A.data()[i * k + kk];
          if (a == 0.0) continue;
          const double* brow = B.data() + kk * p;
          double* crow = n.value.data() + i * p;
          for (std::size_t j = 0; j < p; ++j) crow[j] += a * brow[j];
        }
      }
      return;
    }
    case Op::kConcatCols: {
      const std::size_t rows = n.value.rows();
      std::size_t col0 = 0;
      for (int p : in) {
        const Tensor& t = nodes_[p].value;
        const std::size_t c = t.shape()[1];
        for (std::size_t i = 0; i < rows; ++i) {
          std::copy(t.data() + i * c, t.data() + (i + 1) * c,
                    n.value.data() + i * n.value.cols() + col0);
        }
        col0 += c;
      }
      return;
    }
    case Op::kGatherRows: {
      const Tensor& S = nodes_[in[0]].value;
      const std::size_t c = S.shape()[1];
      for (std::size_t i = 0; i < n.indices.size(); ++i) {
        std::copy(S.data() + n.indices[i] * c, S.data() + (n.indices[i] + 1) * c,
                  n.value.data() + i * c);
      }
      return;
    }
    case Op::kSegmentSum: {
      const Tensor& S = nodes_[in[0]].value;
      const std::size_t c = S.shape()[1];
      n.value.zero();
      for (std::size_t seg = 0; seg + 1 < n.indices.size(); ++seg) {
        double* out = n.value.data() + seg * c;
        for (std::int64_t r = n.indices[seg]; r < n.indices[seg + 1]; ++r) {
          const double* row = S.data() + r * c;
          for (std::size_t j = 0; j < c; ++j) out[j] += row[j];
        }
      }
      return;
    }
    case Op::kSegmentSoftmax: {
      const Tensor& S = nodes_[in[0]].value;
      for (std::size_t seg = 0; seg + 1 < n.indices.size(); ++seg) {
        const std::int64_t lo = n.indices[seg], hi = n.indices[seg + 1];
        if (lo == hi) continue;
        double mx = S[lo];
        for (std::int64_t r = lo; r < hi; ++r) mx = std::max(mx, S[r]);
        double sum = 0.0;
        for (std::int64_t r = lo; r < hi; ++r) {
          n.value[r] = std::exp(S[r] - mx);
          sum += n.value[r];
        }
        for (std::int64_t r = lo; r < hi; ++r) n.value[r] /= sum;
      }
      return;
    }
    case Op::kColScale: {
      const Tensor& M = nodes_[in[0]].value;
      const Tensor& s = nodes_[in[1]].value;
      const std::size_t rows = M.shape()[0], c = M.shape()[1];
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < c; ++j) n.value.data()[i * c + j] = M.data()[i * c + j] * s[i];
      }
      return;
    }
    case Op::kAdd: {
      const Tensor& A = nodes_[in[0]].value;
      const Tensor& B = nodes_[in[1]].value;
      for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = A[i] + B[i];
      return;
    }
    case Op::kAddRowVec: {
      const Tensor& M = nodes_[in[0]].value;
      const Tensor& v = nodes_[in[1]].value;
      const std::size_t rows = M.shape()[0], c = M.shape()[1];
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < c; ++j) n.value.data()[i * c + j] = M.data()[i * c + j] + v[j];
      }
      return;
    }
    case Op::kMul: {
      const Tensor& A = nodes_[in[0]].value;
      const Tensor& B = nodes_[in[1]].value;
      for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = A[i] * B[i];
      return;
    }
    case Op::kScale: {
      const Tensor& A = nodes_[in[0]].value;
      for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = A[i] * n.attr0;
      return;
    }
    case Op::kSigmoid: {
      const Tensor& A = nodes_[in[0]].value;
      for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = stable_sigmoid(A[i]);
      return;
    }
    case Op::kTanh: {
      const Tensor& A = nodes_[in[0]].value;
      for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = std::tanh(A[i]);
      return;
    }
    case Op::kLeakyRelu: {
      const Tensor& A = nodes_[in[0]].value;
      for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value[i] = A[i] > 0.0 ? A[i] : n.attr0 * A[i];
      }
      return;
    }
    case Op::kElu: {
      const Tensor& A = nodes_[in[0]].value;
      for (std::size_t i = 0; i < n.value.size(); ++i) {
        n.value[i] = A[i] > 0.0 ? A[i] : std::expm1(A[i]);
      }
      return;
    }
    case Op::kExp: {
      const Tensor& A = nodes_[in[0]].value;
      for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = std::exp(A[i]);
      return;
    }
    case Op::kSoftmax: {
      const Tensor& A = nodes_[in[0]].value;
      const std::size_t rows = A.rows(), cols = A.cols();
      auto run = [&](std::size_t count, std::size_t len, std::size_t stride_between,
                     std::size_t stride_within) {
        for (std::size_t g = 0; g < count; ++g) {
          const std::size_t base = g * stride_between;
          double mx = A[base];
          for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, A[base + i * stride_within]);
          double sum = 0.0;
          for (std::size_t i = 0; i < len; ++i) {
            const std::size_t at = base + i * stride_within;
            n.value[at] = std::exp(A[at] - mx);
            sum += n.value[at];
          }
          for (std::size_t i = 0; i < len; ++i) n.value[base + i * stride_within] /= sum;
        }
      };
      if (A.ndim() == 1) {
        run(1, A.size(), 0, 1);
      } else if (n.axis == 1) {
        run(rows, cols, cols, 1);  // softmax within each row
      } else {
        run(cols, rows, 1, cols);  // softmax within each column
      }
      return;
    }
    case Op::kRowSum: {
      const Tensor& A = nodes_[in[0]].value;
      const std::size_t rows = A.shape()[0], c = A.shape()[1];
      for (std::size_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += A.data()[i * c + j];
        n.value[i] = s;
      }
      return;
    }
    case Op::kMaskedMean: {
      const Tensor& C = nodes_[in[0]].value;
      const Tensor& M = nodes_[in[1]].value;
      double denom = 0.0, num = 0.0;
      for (std::size_t i = 0; i < C.size(); ++i) {
        num += M[i] * C[i];
        denom += M[i];
      }
      if (denom <= 0.0) throw TrainingError("masked_mean: empty selection");
      n.aux[0] = denom;
      n.value[0] = num / denom;
      return;
    }
    case Op::kDropout: {
      const Tensor& A = nodes_[in[0]].value;
      if (!training || n.attr0 == 0.0) {
        n.aux.fill(1.0);
        std::copy(A.data(), A.data() + A.size(), n.value.data());
        return;
      }
      const double keep = 1.0 - n.attr0;
      const double inv = 1.0 / keep;
      for (std::size_t i = 0; i < A.size(); ++i) {
        n.aux[i] = n.rng->bernoulli(keep) ? inv : 0.0;
        n.value[i] = A[i] * n.aux[i];
      }
      return;
    }
    case Op::kStackScalars: {
      for (std::size_t i = 0; i < in.size(); ++i) n.value[i] = nodes_[in[i]].value[0];
      return;
    }
    case Op::kLinComb: {
      const Tensor& c = nodes_[in[0]].value;
      n.value.zero();
      for (std::size_t p = 0; p + 1 < in.size(); ++p) {
        const Tensor& M = nodes_[in[p + 1]].value;
        for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += c[p] * M[i];
      }
      return;
    }
    case Op::kMultihopChain: {
      const std::size_t k = in.size() - 4;  // positions 0..k plus 3 params
      const std::size_t d = n.value.cols();
      const std::size_t rows = n.value.rows();
      const double* wh = nodes_[in[k + 1]].value.data();
      const double* wt = nodes_[in[k + 2]].value.data();
      const double* va = nodes_[in[k + 3]].value.data();
      std::vector<const double*> feats(k + 1);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j <= k; ++j) feats[j] = nodes_[in[j]].value.data() + r * d;
        chain::multihop_forward(feats.data(), k, d, wh, wt, va, n.attr1, n.attr0,
                                n.value.data() + r * d, n.aux.data() + r * 2 * (k + 1),
                                n.aux.data() + r * 2 * (k + 1) + (k + 1));
      }
      return;
    }
    case Op::kDirectChain: {
      const std::size_t k = in.size() - 3;
      const std::size_t d = n.value.cols();
      const std::size_t rows = n.value.rows();
      const double* wt = nodes_[in[k + 1]].value.data();
      const double* wh = nodes_[in[k + 2]].value.data();
      std::vector<const double*> feats(k + 1);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j <= k; ++j) feats[j] = nodes_[in[j]].value.data() + r * d;
        chain::direct_forward(feats.data(), k, d, wt, wh, n.value.data() + r * d,
                              n.aux.data() + r * (k + 1));
      }
      return;
    }
    case Op::kBceWithLogits: {
      const Tensor& Z = nodes_[in[0]].value;
      const Tensor& M = nodes_[in[1]].value;
      auto& rows = row_loss_store_[row_loss_slot_[id]];
      const std::size_t S = Z.shape()[0], C = Z.shape()[1];
      double denom = 0.0, total = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        double l = 0.0;
        for (std::size_t c = 0; c < C; ++c) l += stable_bce(Z.at(s, c), n.targets.at(s, c));
        rows[s] = l;
        total += M[s] * l;
        denom += M[s];
      }
      if (denom <= 0.0) throw TrainingError("bce_with_logits: empty node set");
      n.aux[0] = denom;
      n.value[0] = total / denom;
      return;
    }
  }
}

// ---------------------------------------------------------------- backward --

void Tape::backward(int loss_node) {
  for (auto& n : nodes_) {
    if (n.requires_grad) n.grad.zero();
  }
  if (!nodes_[loss_node].requires_grad) return;
  if (nodes_[loss_node].value.size() != 1) {
    throw DimensionError("backward: loss must be a scalar");
  }
  nodes_[loss_node].grad[0] = 1.0;
  for (int id = loss_node; id >= 0; --id) {
    if (nodes_[id].requires_grad) backward_node(id);
  }
}

void Tape::backward_node(int id) {
  Node& n = nodes_[id];
  auto& in = n.inputs;
  auto g = [&](int i) -> Tensor& { return nodes_[i].grad; };
  auto wants = [&](int i) { return nodes_[i].requires_grad; };

  switch (n.op) {
    case Op::kParam:
    case Op::kInput:
    case Op::kConst:
      return;
    case Op::kMatMul: {
      const Tensor& A = nodes_[in[0]].value;
      const Tensor& B = nodes_[in[1]].value;
      const std::size_t m = A.shape()[0], k = A.shape()[1], p = B.shape()[1];
      if (wants(in[0])) {
        Tensor& dA = g(in[0]);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            double s = 0.0;
            const double* grow = n.grad.data() + i * p;
            const double* brow = B.data() + kk * p;
            for (std::size_t j = 0; j < p; ++j) s += grow[j] * brow[j];
            dA.data()[i * k + kk] += s;
          }
        }
      }
      if (wants(in[1])) {
        Tensor& dB = g(in[1]);
        for (std::size_t kk = 0; kk < k; ++kk) {
          for (std::size_t i = 0; i < m; ++i) {
            const double a = A.data()[i * k + kk];
            if (a == 0.0) continue;
            const double* grow = n.grad.data() + i * p;
            double* brow = dB.data() + kk * p;
            for (std::size_t j = 0; j < p; ++j) brow[j] += a * grow[j];
          }
        }
      }
      return;
    }
    case Op::kConcatCols: {
      const std::size_t rows = n.value.rows();
      std::size_t col0 = 0;
      for (int p : in) {
        const std::size_t c = nodes_[p].value.shape()[1];
        if (wants(p)) {
          Tensor& dp = g(p);
          for (std::size_t i = 0; i < rows; ++i) {
            const double* src = n.grad.data() + i * n.value.cols() + col0;
            double* dst = dp.data() + i * c;
            for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
          }
        }
        col0 += c;
      }
      return;
    }
    case Op::kGatherRows: {
      if (!wants(in[0])) return;
      Tensor& dS = g(in[0]);
      const std::size_t c = nodes_[in[0]].value.shape()[1];
      for (std::size_t i = 0; i < n.indices.size(); ++i) {
        const double* src = n.grad.data() + i * c;
        double* dst = dS.data() + n.indices[i] * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
      }
      return;
    }
    case Op::kSegmentSum: {
      if (!wants(in[0])) return;
      Tensor& dS = g(in[0]);
      const std::size_t c = nodes_[in[0]].value.shape()[1];
      for (std::size_t seg = 0; seg + 1 < n.indices.size(); ++seg) {
        const double* src = n.grad.data() + seg * c;
        for (std::int64_t r = n.indices[seg]; r < n.indices[seg + 1]; ++r) {
          double* dst = dS.data() + r * c;
          for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
        }
      }
      return;
    }
    case Op::kSegmentSoftmax: {
      if (!wants(in[0])) return;
      Tensor& dS = g(in[0]);
      for (std::size_t seg = 0; seg + 1 < n.indices.size(); ++seg) {
        const std::int64_t lo = n.indices[seg], hi = n.indices[seg + 1];
        double dot = 0.0;
        for (std::int64_t r = lo; r < hi; ++r) dot += n.value[r] * n.grad[r];
        for (std::int64_t r = lo; r < hi; ++r) dS[r] += n.value[r] * (n.grad[r] - dot);
      }
      return;
    }
    case Op::kColScale: {
      const Tensor& M = nodes_[in[0]].value;
      const Tensor& s = nodes_[in[1]].value;
      const std::size_t rows = M.shape()[0], c = M.shape()[1];
      if (wants(in[0])) {
        Tensor& dM = g(in[0]);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < c; ++j) dM.data()[i * c + j] += n.grad.data()[i * c + j] * s[i];
        }
      }
      if (wants(in[1])) {
        Tensor& ds = g(in[1]);
        for (std::size_t i = 0; i < rows; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < c; ++j) acc += n.grad.data()[i * c + j] * M.data()[i * c + j];
          ds[i] += acc;
        }
      }
      return;
    }
    case Op::kAdd: {
      for (int which : {0, 1}) {
        if (!wants(in[which])) continue;
        Tensor& d = g(in[which]);
        for (std::size_t i = 0; i < n.value.size(); ++i) d[i] += n.grad[i];
      }
      return;
    }
    case Op::kAddRowVec: {
      const std::size_t rows = n.value.shape()[0], c = n.value.shape()[1];
      if (wants(in[0])) {
        Tensor& dM = g(in[0]);
        for (std::size_t i = 0; i < n.value.size(); ++i) dM[i] += n.grad[i];
      }
      if (wants(in[1])) {
        Tensor& dv = g(in[1]);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < c; ++j) dv[j] += n.grad.data()[i * c + j];
        }
      }
      return;
    }
    case Op::kMul: {
      const Tensor& A = nodes_[in[0]].value;
      const Tensor& B = nodes_[in[1]].value;
      if (wants(in[0])) {
        Tensor& dA = g(in[0]);
        for (std::size_t i = 0; i < n.value.size(); ++i) dA[i] += n.grad[i] * B[i];
      }
      if (wants(in[1])) {
        Tensor& dB = g(in[1]);
        for (std::size_t i = 0; i < n.value.size(); ++i) dB[i] += n.grad[i] * A[i];
      }
      return;
    }
    case Op::kScale: {
      if (!wants(in[0])) return;
      Tensor& dA = g(in[0]);
      for (std::size_t i = 0; i < n.value.size(); ++i) dA[i] += n.grad[i] * n.attr0;
      return;
    }
    case Op::kSigmoid: {
      if (!wants(in[0])) return;
      Tensor& dA = g(in[0]);
      for (std::size_t i = 0; i < n.value.size(); ++i) {
        dA[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
      }
      return;
    }
    case Op::kTanh: {
      if (!wants(in[0])) return;
      Tensor& dA = g(in[0]);
      for (std::size_t i = 0; i < n.value.size(); ++i) {
        dA[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
      }
      return;
    }
    case Op::kLeakyRelu: {
      if (!wants(in[0])) return;
      const Tensor& A = nodes_[in[0]].value;
      Tensor& dA = g(in[0]);
      for (std::size_t i = 0; i < n.value.size(); ++i) {
        dA[i] += n.grad[i] * (A[i] > 0.0 ? 1.0 : n.attr0);
      }
      return;
    }
    case Op::kElu: {
      if (!wants(in[0])) return;
      const Tensor& A = nodes_[in[0]].value;
      Tensor& dA = g(in[0]);
      for (std::size_t i = 0; i < n.value.size(); ++i) {
        dA[i] += n.grad[i] * (A[i] > 0.0 ? 1.0 : n.value[i] + 1.0);
      }
      return;
    }
    case Op::kExp: {
      if (!wants(in[0])) return;
      Tensor& dA = g(in[0]);
      for (std::size_t i = 0; i < n.value.size(); ++i) dA[i] += n.grad[i] * n.value[i];
      return;
    }
    case Op::kSoftmax: {
      if (!wants(in[0])) return;
      Tensor& dA = g(in[0]);
      const std::size_t rows = n.value.rows(), cols = n.value.cols();
      auto run = [&](std::size_t count, std::size_t len, std::size_t stride_between,
                     std::size_t stride_within) {
        for (std::size_t gidx = 0; gidx < count; ++gidx) {
          const std::size_t base = gidx * stride_between;
          double dot = 0.0;
          for (std::size_t i = 0; i < len; ++i) {
            const std::size_t at = base + i * stride_within;
            dot += n.value[at] * n.grad[at];
          }
          for (std::size_t i = 0; i < len; ++i) {
            const std::size_t at = base + i * stride_within;
            dA[at] += n.value[at] * (n.grad[at] - dot);
          }
        }
      };
      if (n.value.ndim() == 1) run(1, n.value.size(), 0, 1);
      else if (n.axis == 1) run(rows, cols, cols, 1);
      else run(cols, rows, 1, cols);
      return;
    }
    case Op::kRowSum: {
      if (!wants(in[0])) return;
      Tensor& dA = g(in[0]);
      const std::size_t rows = nodes_[in[0]].value.shape()[0];
      const std::size_t c = nodes_[in[0]].value.shape()[1];
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < c; ++j) dA.data()[i * c + j] += n.grad[i];
      }
      return;
    }
    case Op::kMaskedMean: {
      if (!wants(in[0])) return;
      const Tensor& M = nodes_[in[1]].value;
      Tensor& dC = g(in[0]);
      const double inv = n.grad[0] / n.aux[0];
      for (std::size_t i = 0; i < dC.size(); ++i) dC[i] += inv * M[i];
      return;
    }
    case Op::kDropout: {
      if (!wants(in[0])) return;
      Tensor& dA = g(in[0]);
      for (std::size_t i = 0; i < n.value.size(); ++i) dA[i] += n.grad[i] * n.aux[i];
      return;
    }
    case Op::kStackScalars: {
      for (std::size_t i = 0; i < in.size(); ++i) {
        if (wants(in[i])) g(in[i])[0] += n.grad[i];
      }
      return;
    }
    case Op::kLinComb: {
      const Tensor& c = nodes_[in[0]].value;
      for (std::size_t p = 0; p + 1 < in.size(); ++p) {
        const Tensor& M = nodes_[in[p + 1]].value;
        if (wants(in[0])) {
          double acc = 0.0;
          for (std::size_t i = 0; i < n.value.size(); ++i) acc += n.grad[i] * M[i];
          g(in[0])[p] += acc;
        }
        if (wants(in[p + 1])) {
          Tensor& dM = g(in[p + 1]);
          for (std::size_t i = 0; i < n.value.size(); ++i) dM[i] += n.grad[i] * c[p];
        }
      }
      return;
    }
    case Op::kMultihopChain: {
      const std::size_t k = in.size() - 4;
      const std::size_t d = n.value.cols();
      const std::size_t rows = n.value.rows();
      const double* wh = nodes_[in[k + 1]].value.data();
      const double* wt = nodes_[in[k + 2]].value.data();
      const double* va = nodes_[in[k + 3]].value.data();
      double* dwh = wants(in[k + 1]) ? g(in[k + 1]).data() : nullptr;
      double* dwt = wants(in[k + 2]) ? g(in[k + 2]).data() : nullptr;
      double* dva = wants(in[k + 3]) ? g(in[k + 3]).data() : nullptr;
      std::vector<const double*> feats(k + 1);
      std::vector<double*> dfeats(k + 1);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j <= k; ++j) {
          feats[j] = nodes_[in[j]].value.data() + r * d;
          dfeats[j] = wants(in[j]) ? g(in[j]).data() + r * d : nullptr;
        }
        chain::multihop_backward(feats.data(), k, d, wh, wt, va, n.attr1, n.attr0,
                                 n.aux.data() + r * 2 * (k + 1),
                                 n.aux.data() + r * 2 * (k + 1) + (k + 1),
                                 n.grad.data() + r * d, dfeats.data(), dwh, dwt, dva);
      }
      return;
    }
    case Op::kDirectChain: {
      const std::size_t k = in.size() - 3;
      const std::size_t d = n.value.cols();
      const std::size_t rows = n.value.rows();
      const double* wt = nodes_[in[k + 1]].value.data();
      const double* wh = nodes_[in[k + 2]].value.data();
      double* dwt = wants(in[k + 1]) ? g(in[k + 1]).data() : nullptr;
      double* dwh = wants(in[k + 2]) ? g(in[k + 2]).data() : nullptr;
      std::vector<const double*> feats(k + 1);
      std::vector<double*> dfeats(k + 1);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j <= k; ++j) {
          feats[j] = nodes_[in[j]].value.data() + r * d;
          dfeats[j] = wants(in[j]) ? g(in[j]).data() + r * d : nullptr;
        }
        chain::direct_backward(feats.data(), k, d, wt, wh, n.aux.data() + r * (k + 1),
                               n.grad.data() + r * d, dfeats.data(), dwt, dwh);
      }
      return;
    }
    case Op::kBceWithLogits: {
      if (!wants(in[0])) return;
      const Tensor& Z = nodes_[in[0]].value;
      const Tensor& M = nodes_[in[1]].value;
      Tensor& dZ = g(in[0]);
      const std::size_t S = Z.shape()[0], C = Z.shape()[1];
      const double scale = n.grad[0] / n.aux[0];
      for (std::size_t s = 0; s < S; ++s) {
        if (M[s] == 0.0) continue;
        const double w = scale * M[s];
        for (std::size_t c = 0; c < C; ++c) {
          dZ.at(s, c) += w * (stable_sigmoid(Z.at(s, c)) - n.targets.at(s, c));
        }
      }
      return;
    }
  }
}

}  // namespace hanme
