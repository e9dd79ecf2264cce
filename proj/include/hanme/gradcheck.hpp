#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hanme/tape.hpp"

namespace hanme {

struct FiniteDiffOptions {
  double eps = 1e-5;
  // 0 = check every coordinate; otherwise sample this many per parameter
  // tensor (deterministically).
  std::size_t max_coords_per_param = 0;
  std::uint64_t sample_seed = 17;
};

// Max over checked coordinates of |analytic - central| / max(1, |analytic|),
// for a scalar function of a flat parameter vector against a supplied
// analytic gradient. Throws CheckError when f is non-finite at a perturbed
// point.
double finite_diff_max_rel_error(const std::function<double(const std::vector<double>&)>& f,
                                 const std::vector<double>& at,
                                 const std::vector<double>& analytic_grad, double eps);

// Same check for a tape: runs forward (eval mode) and backward once for the
// analytic gradients, then central differences over (sampled) parameter
// coordinates.
double finite_diff_check(Tape& tape, int loss_node, const FiniteDiffOptions& opt = {});

}  // namespace hanme
