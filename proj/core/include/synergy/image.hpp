#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>

namespace synergy {

// Rotates one H x W plane counterclockwise about its center by `degrees`,
// bilinear interpolation, zero outside the frame. A 0-degree rotation is an
// exact copy. src and dst must not alias.
template <typename T>
void rotate_plane(std::span<const T> src, std::span<T> dst, int64_t h, int64_t w,
                  double degrees) {
  if (degrees == 0.0) {
    std::copy(src.begin(), src.end(), dst.begin());
    return;
  }
  const double rad = degrees * 0.017453292519943295;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = static_cast<double>(h - 1) / 2.0;
  const double cx = static_cast<double>(w - 1) / 2.0;
  for (int64_t r = 0; r < h; ++r) {
    const double dy = static_cast<double>(r) - cy;
    for (int64_t c = 0; c < w; ++c) {
      const double dx = static_cast<double>(c) - cx;
      // Inverse mapping: sample the source at the point that lands here.
      const double sy = cy + cs * dy + sn * dx;
      const double sx = cx - sn * dy + cs * dx;
      const int64_t y0 = static_cast<int64_t>(std::floor(sy));
      const int64_t x0 = static_cast<int64_t>(std::floor(sx));
      const double fy = sy - static_cast<double>(y0);
      const double fx = sx - static_cast<double>(x0);
      double acc = 0.0;
      const double wts[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
      const int64_t ys[4] = {y0, y0, y0 + 1, y0 + 1};
      const int64_t xs[4] = {x0, x0 + 1, x0, x0 + 1};
      for (int i = 0; i < 4; ++i)
        if (ys[i] >= 0 && ys[i] < h && xs[i] >= 0 && xs[i] < w)
          acc += wts[i] * static_cast<double>(src[ys[i] * w + xs[i]]);
      dst[r * w + c] = static_cast<T>(acc);
    }
  }
}

// Rotates a C x H x W sample plane by plane.
template <typename T>
void rotate_chw(std::span<const T> src, std::span<T> dst, int64_t channels, int64_t h, int64_t w,
                double degrees) {
  const size_t plane = static_cast<size_t>(h * w);
  for (int64_t c = 0; c < channels; ++c)
    rotate_plane(src.subspan(c * plane, plane), dst.subspan(c * plane, plane), h, w, degrees);
}

}  // namespace synergy
