#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/dtype.h"

namespace grf {

// RGB image, row-major, values in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;  // height*width*3

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, 0.0f) {}

  float& at(int x, int y, int c) { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  float at(int x, int y, int c) const { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
};

// 8-bit PNG round trip; quantization is the only loss. Writing is
// deterministic (fixed compression settings, no ancillary chunks).
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

}  // namespace grf
