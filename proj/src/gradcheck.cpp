#include "hanme/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "hanme/error.hpp"
#include "hanme/random.hpp"

namespace hanme {

double finite_diff_max_rel_error(const std::function<double(const std::vector<double>&)>& f,
                                 const std::vector<double>& at,
                                 const std::vector<double>& analytic_grad, double eps) {
  if (analytic_grad.size() != at.size()) {
    throw DimensionError("finite_diff: gradient length does not match parameters");
  }
  std::vector<double> x = at;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double fp = f(x);
    x[i] = keep - eps;
    const double fm = f(x);
    x[i] = keep;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw CheckError("finite_diff: non-finite objective at perturbed point");
    }
    const double fd = (fp - fm) / (2.0 * eps);
    const double rel = std::abs(analytic_grad[i] - fd) / std::max(1.0, std::abs(analytic_grad[i]));
    worst = std::max(worst, rel);
  }
  return worst;
}

double finite_diff_check(Tape& tape, int loss_node, const FiniteDiffOptions& opt) {
  tape.forward(false);
  tape.backward(loss_node);

  // Snapshot analytic gradients before the perturbation loop clobbers state.
  std::vector<std::vector<double>> analytic;
  for (int p : tape.params()) {
    const Tensor& gr = tape.grad(p);
    analytic.emplace_back(gr.data(), gr.data() + gr.size());
  }

  RandomStream rng(opt.sample_seed);
  double worst = 0.0;
  for (std::size_t pi = 0; pi < tape.params().size(); ++pi) {
    const int id = tape.params()[pi];
    Tensor& w = tape.value(id);

    std::vector<std::size_t> coords;
    if (opt.max_coords_per_param == 0 || w.size() <= opt.max_coords_per_param) {
      coords.resize(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) coords[i] = i;
    } else {
      for (std::size_t i = 0; i < opt.max_coords_per_param; ++i) {
        coords.push_back(rng.index(w.size()));
      }
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }

    for (std::size_t i : coords) {
      const double keep = w[i];
      w[i] = keep + opt.eps;
      tape.forward(false);
      const double fp = tape.value(loss_node)[0];
      w[i] = keep - opt.eps;
      tape.forward(false);
      const double fm = tape.value(loss_node)[0];
      w[i] = keep;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw CheckError("finite_diff: non-finite loss at perturbed point of '" +
                         tape.node(id).name + "'");
      }
      const double fd = (fp - fm) / (2.0 * opt.eps);
      const double rel =
          std::abs(analytic[pi][i] - fd) / std::max(1.0, std::abs(analytic[pi][i]));
      worst = std::max(worst, rel);
    }
  }
  tape.forward(false);  // restore values
  return worst;
}

}  // namespace hanme
