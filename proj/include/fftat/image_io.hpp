#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fftat/common.hpp"

namespace fftat {

// RGB image, channel-major (C x H x W, C = 3), values in [0, 1].
// f32 regardless of the model precision; pixels get cast at embedding time.
struct Image {
  std::size_t h = 0, w = 0;
  std::vector<float> data;

  Image() = default;
  Image(std::size_t h_, std::size_t w_) : h(h_), w(w_), data(3 * h_ * w_, 0.0f) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * h + y) * w + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * h + y) * w + x];
  }
};

// binary PPM (P6, maxval 255)
Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

// 8-bit PNG of any color type, converted to RGB
Image read_png(const std::string& path);

// dispatch on extension (.ppm, .png); anything else is an error naming the file
Image load_image(const std::string& path);

// nearest-neighbor resample to side x side
Image resize_nearest(const Image& img, std::size_t side);

}  // namespace fftat
