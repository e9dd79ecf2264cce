#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hanme/tensor.hpp"

namespace hanme {

// Flat list of named tensors with a versioned text header followed by raw
// little-endian 64-bit values; meta carries a single-line JSON document with
// whatever the producer needs to rebuild its model.
struct Checkpoint {
  std::string meta_json;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hanme
