#pragma once

#include <cstdint>
#include <vector>

#include "hanme/tape.hpp"

namespace hanme {

// First/second moment buffers aligned with tape.params().
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState init(const Tape& tape);
};

// Standard Adam update with decoupled weight decay applied before the
// adaptive step. Throws TrainingError naming the parameter on a non-finite
// gradient.
void adam_step(Tape& tape, AdamState& state, double lr, double weight_decay);

}  // namespace hanme
