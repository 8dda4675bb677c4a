#pragma once

#include <cstdint>
#include <vector>

namespace ddn {

// Per-pixel integer class map. `kVoidLabel` marks pixels excluded from loss
// and metrics.
constexpr int kVoidLabel = -1;

struct LabelMap {
  long height = 0, width = 0;
  std::vector<int> values;  // row-major, in [0, num_classes) or kVoidLabel

  LabelMap() = default;
  LabelMap(long h, long w, int fill = 0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  int& at(long i, long j) { return values[i * width + j]; }
  int at(long i, long j) const { return values[i * width + j]; }
};

}  // namespace ddn
