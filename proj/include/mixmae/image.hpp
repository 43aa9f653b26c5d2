#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mixmae {

// Planar float image, channel-major (c, y, x), values nominally in [0, 1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), pixels(static_cast<std::size_t>(c) * h * w, fill) {}

  float& at(int c, int y, int x) { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  bool same_geometry(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

// Bilinear sample of the crop [y0, y0+ch) x [x0, x0+cw) resized to out_h x out_w
// (half-pixel centres, edge clamped).
Image resize_crop(const Image& src, double y0, double x0, double ch, double cw, int out_h, int out_w);
Image hflip(const Image& src);

}  // namespace mixmae
