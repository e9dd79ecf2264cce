#include "hanme/metrics.hpp"

#include <cmath>

#include "hanme/error.hpp"

namespace hanme {

Tensor slice_rows(const Tensor& t, const std::vector<NodeId>& ids) {
  Tensor out({ids.size(), t.cols()});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t c = 0; c < t.cols(); ++c) out.at(i, c) = t.at(ids[i], c);
  }
  return out;
}

F1 f1_scores(const Tensor& logits, const Tensor& labels, double threshold) {
  if (!logits.same_shape(labels)) throw DimensionError("f1_scores: shape mismatch");
  if (threshold <= 0.0 || threshold >= 1.0) throw DimensionError("f1_scores: threshold in (0,1)");
  const std::size_t n = logits.rows(), C = logits.cols();
  // sigmoid(z) >= t  <=>  z >= logit(t)
  const double zcut = std::log(threshold / (1.0 - threshold));

  double tp_all = 0, fp_all = 0, fn_all = 0;
  double macro_sum = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool pred = logits.at(i, c) >= zcut;
      const bool truth = labels.at(i, c) >= 0.5;
      if (pred && truth) ++tp;
      else if (pred && !truth) ++fp;
      else if (!pred && truth) ++fn;
    }
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
    const double denom = 2 * tp + fp + fn;
    macro_sum += denom > 0 ? 2 * tp / denom : 0.0;  // empty class scores 0
  }
  F1 out;
  const double denom = 2 * tp_all + fp_all + fn_all;
  out.micro = denom > 0 ? 2 * tp_all / denom : 0.0;
  out.macro = C > 0 ? macro_sum / static_cast<double>(C) : 0.0;
  return out;
}

F1 f1_scores(const Tensor& logits, const Tensor& labels, const std::vector<NodeId>& ids,
             double threshold) {
  return f1_scores(slice_rows(logits, ids), slice_rows(labels, ids), threshold);
}

}  // namespace hanme
