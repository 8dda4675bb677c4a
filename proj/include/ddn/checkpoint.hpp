#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddn/tensor.hpp"

namespace ddn {

// Flat binary container of named tensors ("DDNP"). Little-endian throughout.
//   magic "DDNP" | version u32 | entry count u32
//   per entry: name length u16 | name bytes | rank u8 | dims u32[rank] | payload
// The container version declares the payload precision: 1 = IEEE-754 binary64,
// 2 = binary32. Round-trips are bit-exact.
struct CheckpointEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<double> payload;

  std::size_t scalar_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

constexpr std::uint32_t kCheckpointVersionF64 = 1;
constexpr std::uint32_t kCheckpointVersionF32 = 2;

void write_checkpoint(const std::string& path,
                      const std::vector<CheckpointEntry>& entries,
                      std::uint32_t version = kCheckpointVersionF64);

std::vector<CheckpointEntry> read_checkpoint(const std::string& path);

inline CheckpointEntry entry_from_tensor(const std::string& name,
                                         const Tensor& t) {
  CheckpointEntry e;
  e.name = name;
  e.dims = {static_cast<std::uint32_t>(t.shape.n),
            static_cast<std::uint32_t>(t.shape.c),
            static_cast<std::uint32_t>(t.shape.h),
            static_cast<std::uint32_t>(t.shape.w)};
  e.payload = t.data;
  return e;
}

}  // namespace ddn
