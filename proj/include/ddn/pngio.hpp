#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ddn {

struct ImageRGB8 {
  long height = 0, width = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel

  std::uint8_t* px(long i, long j) { return &pixels[(i * width + j) * 3]; }
  const std::uint8_t* px(long i, long j) const {
    return &pixels[(i * width + j) * 3];
  }
};

ImageRGB8 read_png_rgb8(const std::string& path);
void write_png_rgb8(const std::string& path, const ImageRGB8& img);

}  // namespace ddn
