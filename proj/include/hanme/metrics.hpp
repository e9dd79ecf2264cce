#pragma once

#include <vector>

#include "hanme/graph.hpp"
#include "hanme/tensor.hpp"

namespace hanme {

struct F1 {
  double micro = 0.0;
  double macro = 0.0;
};

// Multi-label F1 at a sigmoid threshold: predictions are sigmoid(z) >=
// threshold per class. Micro pools TP/FP/FN globally; macro is the
// unweighted mean of per-class F1, where a class with no positives and no
// predictions scores 0.
F1 f1_scores(const Tensor& logits, const Tensor& labels, double threshold);

// Restricts both matrices to the given rows first.
F1 f1_scores(const Tensor& logits, const Tensor& labels, const std::vector<NodeId>& ids,
             double threshold);

Tensor slice_rows(const Tensor& t, const std::vector<NodeId>& ids);

}  // namespace hanme
