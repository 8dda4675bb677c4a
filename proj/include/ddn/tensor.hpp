#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddn {

// Dense 4-D tensor, batch-outermost row-major (N, C, H, W).
struct Shape4 {
  long n = 0, c = 0, h = 0, w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  bool operator==(const Shape4&) const = default;
  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" +
           std::to_string(h) + "x" + std::to_string(w);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape4 s, double fill = 0.0)
      : shape(s), data(s.size(), fill) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
      throw std::invalid_argument("Tensor: negative dimension");
  }

  Shape4 shape;
  std::vector<double> data;

  bool empty() const { return data.empty(); }
  std::size_t size() const { return data.size(); }

  double& at(long n, long c, long h, long w) {
    return data[((static_cast<std::size_t>(n) * shape.c + c) * shape.h + h) *
                    shape.w +
                w];
  }
  double at(long n, long c, long h, long w) const {
    return data[((static_cast<std::size_t>(n) * shape.c + c) * shape.h + h) *
                    shape.w +
                w];
  }

  static Tensor scalar(double v) {
    Tensor t(Shape4{1, 1, 1, 1});
    t.data[0] = v;
    return t;
  }
  double item() const {
    if (size() != 1) throw std::logic_error("Tensor::item: not a scalar");
    return data[0];
  }
};

}  // namespace ddn
