#pragma once

#include <string>
#include <vector>

#include "wdualmine/tensor.hpp"

namespace wdualmine {

// Named-tensor container:
//   magic "WDLMCKPT" (8 bytes), version u32, entry count u32, then per
//   entry: name length u32 + UTF-8 name, rank u32, extents u32 x rank,
//   raw f32 data. All integers and floats little-endian.
// Optimizer moments ride along as "opt.adam.m.<param>" / "opt.adam.v.<param>"
// entries; a JSON sidecar next to the file carries configuration and
// training metadata.
struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint(const std::string& path);

}  // namespace wdualmine
