#include "hanme/adam.hpp"

#include <cmath>

#include "hanme/error.hpp"

namespace hanme {

AdamState AdamState::init(const Tape& tape) {
  AdamState s;
  for (int p : tape.params()) {
    s.m.emplace_back(tape.value(p).shape());
    s.v.emplace_back(tape.value(p).shape());
  }
  return s;
}

void adam_step(Tape& tape, AdamState& state, double lr, double weight_decay) {
  if (lr <= 0.0) throw TrainingError("adam: learning rate must be positive");
  if (state.m.size() != tape.params().size()) {
    throw TrainingError("adam: state does not match parameter list");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  for (std::size_t pi = 0; pi < tape.params().size(); ++pi) {
    const int id = tape.params()[pi];
    Tensor& w = tape.value(id);
    const Tensor& grad = tape.grad(id);
    Tensor& m = state.m[pi];
    Tensor& v = state.v[pi];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = grad[i];
      if (!std::isfinite(g)) {
        throw TrainingError("adam: non-finite gradient in parameter '" + tape.node(id).name + "'");
      }
      if (weight_decay != 0.0) w[i] -= lr * weight_decay * w[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace hanme
