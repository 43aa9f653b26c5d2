#include "mixmae/image.hpp"

#include <algorithm>
#include <cmath>

namespace mixmae {

Image resize_crop(const Image& src, double y0, double x0, double ch, double cw, int out_h,
                  int out_w) {
  Image out(src.channels, out_h, out_w);
  const double sy = ch / out_h, sx = cw / out_w;
  std::vector<int> xa(out_w), xb(out_w);
  std::vector<float> xt(out_w);
  for (int x = 0; x < out_w; ++x) {
    double fx = x0 + (x + 0.5) * sx - 0.5;
    fx = std::clamp(fx, 0.0, static_cast<double>(src.width - 1));
    xa[x] = static_cast<int>(std::floor(fx));
    xb[x] = std::min(xa[x] + 1, src.width - 1);
    xt[x] = static_cast<float>(fx - xa[x]);
  }
  for (int y = 0; y < out_h; ++y) {
    double fy = y0 + (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(src.height - 1));
    const int ya = static_cast<int>(std::floor(fy));
    const int yb = std::min(ya + 1, src.height - 1);
    const float ty = static_cast<float>(fy - ya);
    for (int c = 0; c < src.channels; ++c) {
      for (int x = 0; x < out_w; ++x) {
        const float top = src.at(c, ya, xa[x]) * (1 - xt[x]) + src.at(c, ya, xb[x]) * xt[x];
        const float bot = src.at(c, yb, xa[x]) * (1 - xt[x]) + src.at(c, yb, xb[x]) * xt[x];
        out.at(c, y, x) = top * (1 - ty) + bot * ty;
      }
    }
  }
  return out;
}

Image hflip(const Image& src) {
  Image out(src.channels, src.height, src.width);
  for (int c = 0; c < src.channels; ++c)
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x) out.at(c, y, x) = src.at(c, y, src.width - 1 - x);
  return out;
}

}  // namespace mixmae
