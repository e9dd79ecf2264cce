#pragma once

#include <stdexcept>
#include <string>

namespace hanme {

// Input files that do not match the on-disk dataset format.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Structurally inconsistent data: dangling edge endpoints, overlapping
// splits, split members without labels.
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid run configuration (unknown relation, bad schema, bad flags).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape mismatch in a numeric operation; the message names the operation.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Runtime failure during optimization (non-finite loss or gradient).
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Failure inside a verification routine itself (e.g. non-finite objective
// at a perturbed point during a finite-difference check).
struct CheckError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hanme
