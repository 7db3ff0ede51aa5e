// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lvp/image.h"

namespace lvp {

// 8-bit RGB PNG. `rgb` is row-major H*W*3, top row first.
void write_png_rgb8(const std::string& path, int width, int height,
                    const std::vector<uint8_t>& rgb);

// 16-bit grayscale PNG, used for object-ID masks. Round trips exactly.
void write_png_gray16(const std::string& path, const ImageU16& image);
ImageU16 read_png_gray16(const std::string& path);

// Reinhard tonemap x / (1 + x) followed by sRGB encoding, quantized to u8.
// `rgb` is linear radiance; negative inputs clamp to 0.
uint8_t tonemap_srgb_u8(float value);

}  // namespace lvp
