// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0
//
// Equirectangular HDR environment maps: Radiance RGBE and raw-float LENV
// containers, yaw rotation, tag-based catalog selection, and a procedural
// sky fallback. Maps are linear radiance, width = 2 * height, y-up with the
// top row at the zenith.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lvp/error.h"
#include "lvp/math.h"

namespace lvp {

struct EnvMap {
  int width = 0;   // W_e = 2 * H_e
  int height = 0;  // H_e
  std::vector<float> pixels;  // H_e x W_e x 3, row-major from the top row

  EnvMap() = default;
  EnvMap(int h, int w);  // throws DimensionMismatch unless w == 2h

  float& at(int v, int u, int c) { return pixels[(size_t(v) * width + u) * 3 + c]; }
  float at(int v, int u, int c) const { return pixels[(size_t(v) * width + u) * 3 + c]; }

  // Rejects negative or non-finite radiance.
  void validate() const;
};

// --- RGBE shared-exponent pixel codec ---------------------------------
// decode: e == 0 -> (0,0,0); else channel = (mantissa/256) * 2^(e-128)
// encode: shared exponent = ceil(log2(max channel)) + 128, mantissas
// rounded to nearest (clamped to 255).
void rgbe_encode(const float rgb[3], uint8_t out[4]);
void rgbe_decode(const uint8_t rgbe[4], float rgb[3]);

// --- containers --------------------------------------------------------
// ".hdr" selects the Radiance RGBE container (flat scanlines on write, flat
// and new-style RLE on read); ".lenv" the lossless raw-float32 container
// (magic "LENV", u32 version=1, u32 W_e, u32 H_e, float32 LE RGB planes
// interleaved, row-major from the top row).
EnvMap load_envmap(const std::string& path);
void save_envmap(const EnvMap& map, const std::string& path);

// --- rotation -----------------------------------------------------------
// Horizontal circular shift by yaw * W_e / 360 pixels; integer-pixel shifts
// are exact permutations, fractional shifts resample linearly. Yaw is
// reduced mod 360.
EnvMap rotate_envmap(const EnvMap& map, double yaw_degrees);

// Per-frame yaw in degrees: yaw_k = total * k / (F-1) (single frame -> {0}).
std::vector<double> rotation_schedule(double total_degrees, int frames);

// --- catalog ------------------------------------------------------------

struct EnvIndexEntry {
  std::string env_id;
  std::string file;  // relative to the index file's directory
  std::vector<std::string> tags;
};

std::vector<EnvIndexEntry> load_env_index(const std::string& path);

// Max tag overlap wins, ties broken by smallest env_id; zero overlap (or an
// empty index) returns nullopt, signalling the procedural fallback.
std::optional<std::string> select_envmap(const std::vector<std::string>& lighting_tags,
                                         const std::vector<EnvIndexEntry>& index);

// --- procedural sky -----------------------------------------------------
// Vertical zenith-to-horizon gradient plus a Gaussian sun disk (angular
// sigma 2 deg, peak 500x the sky mean). warmth in [0,1] shifts the sky
// chromaticity from (0.6,0.7,1.0) toward (1.0,0.7,0.4). All radiance > 0.
EnvMap procedural_sky(double sun_azimuth_deg, double sun_elevation_deg, double warmth,
                      int height);

// --- equirectangular mapping ---------------------------------------------
// phi = 2*pi*(u+0.5)/W - pi, theta = pi*(v+0.5)/H,
// direction = (sin(theta)sin(phi), cos(theta), -sin(theta)cos(phi)).
Vec3 envmap_direction(int u, int v, int width, int height);
// Inverse: texel containing `dir` (unit vector).
void direction_to_texel(Vec3 dir, int width, int height, int* u, int* v);

}  // namespace lvp
