#pragma once

#include <map>
#include <string>

#include "mbd/network.hpp"
#include "mbd/tensor.hpp"

namespace mbd {

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// On-disk training state. `tensors` carries the network parameters plus any
// optimizer slots (adam.m/<name>, adam.v/<name>, adam.step); `config_text` is
// the flat key=value config the run was started with, stored verbatim so a
// resumed run can rebuild the exact same shapes and schedule.
struct Checkpoint {
  std::string config_text;
  std::map<std::string, Tensor> tensors;
};

// Binary layout: magic "MBD1", format version u32 LE, config blob (u32 LE
// byte length + UTF-8), tensor count u32 LE, then per tensor: name (u16 LE
// length + UTF-8), dtype byte (0 = f32), rank u8, dims u32 LE each, raw f32
// LE data. Saving the same state twice produces byte-identical files.
void save_checkpoint(const Checkpoint& ck, const std::string& path);

// Throws CheckpointError with a distinct message for bad magic, unsupported
// version, and truncated/corrupt files.
Checkpoint load_checkpoint(const std::string& path);

// Extracts the network parameters for cfg from a loaded checkpoint,
// validating names and shapes. Tensors outside the parameter table (optimizer
// slots) are ignored here; a missing parameter or a shape mismatch names the
// offending tensor.
Params extract_params(const Checkpoint& ck, const NetConfig& cfg);

}  // namespace mbd
