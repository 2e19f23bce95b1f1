#pragma once

// Binary model checkpoints. Layout (all integers little-endian):
//
//   8 bytes   magic "GC3CKPT1"
//   u32       format version (1)
//   u64       config length, then that many bytes of INI text
//   u64       tensor count
//   per tensor:
//     u32     name length, then the name bytes
//     u32     rank, then rank × u64 extents
//     f64     numel values, row-major, IEEE-754 little-endian
//
// Model tensors carry the names from SeparationModel::parameters(). Any other
// named tensors (optimizer moments, counters) ride along as extras.

#include <stdexcept>
#include <string>

#include "gc3/model.hpp"

namespace gc3 {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  SeparationModel model;
  NamedParams extras;
};

void save_checkpoint(const std::string& path, const SeparationModel& model, const NamedParams& extras = {});
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gc3
