#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lcgn/tensor.hpp"

namespace lcgn {

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

// Binary container: magic + version header, a JSON blob with the training
// and model configuration, a tensor directory (name, shape, byte offsets),
// raw 32-bit little-endian tensor data, and a parallel EMA table. Round
// trips are bitwise.
struct Checkpoint {
  std::string config_json;
  std::vector<CheckpointTensor> params;
  std::vector<CheckpointTensor> ema;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace lcgn
