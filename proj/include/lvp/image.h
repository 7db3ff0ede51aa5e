// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

namespace lvp {

// Row-major H x W x 3 float image, linear radiance.
struct Image3f {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // size height * width * 3, interleaved RGB

  Image3f() = default;
  Image3f(int h, int w) : height(h), width(w), pixels(size_t(h) * w * 3, 0.0f) {}

  float& at(int y, int x, int c) { return pixels[(size_t(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return pixels[(size_t(y) * width + x) * 3 + c]; }
};

// Row-major H x W unsigned 16-bit grid (object-ID masks).
struct ImageU16 {
  int height = 0;
  int width = 0;
  std::vector<uint16_t> pixels;

  ImageU16() = default;
  ImageU16(int h, int w) : height(h), width(w), pixels(size_t(h) * w, 0) {}

  uint16_t& at(int y, int x) { return pixels[size_t(y) * width + x]; }
  uint16_t at(int y, int x) const { return pixels[size_t(y) * width + x]; }
};

}  // namespace lvp
