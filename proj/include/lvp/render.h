// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "lvp/camera.h"
#include "lvp/envmap.h"
#include "lvp/image.h"
#include "lvp/scene_graph.h"

namespace lvp {

// The three proxy passes: Lambertian base, rough GGX, glossy GGX.
enum class PassKind { diff, ggx1, ggx2 };

const char* to_string(PassKind kind);

struct RenderSettings {
  int spp_diffuse = 64;
  int spp_glossy = 128;
  double roughness_rough = 0.34;   // GGX1
  double roughness_glossy = 0.05;  // GGX2, must stay below roughness_rough
  uint64_t seed = 0;
  double max_shadow_distance = std::numeric_limits<double>::infinity();
};

// Throws Error(BadParameter) on non-positive sample counts, roughness
// outside (0, 1], roughness_glossy >= roughness_rough, or a non-positive
// shadow distance.
void validate_settings(const RenderSettings& settings);

constexpr int kProxyChannels = 9;

// F x 9 x H x W radiance stack, channel-major per frame in the order
// DIFF.rgb, GGX1.rgb, GGX2.rgb.
struct ProxyStack {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  ProxyStack() = default;
  ProxyStack(int f, int h, int w)
      : frames(f), height(h), width(w),
        data(size_t(f) * kProxyChannels * h * w, 0.0f) {}

  size_t index(int f, int c, int y, int x) const {
    return ((size_t(f) * kProxyChannels + c) * height + y) * width + x;
  }
  float& at(int f, int c, int y, int x) { return data[index(f, c, y, x)]; }
  float at(int f, int c, int y, int x) const { return data[index(f, c, y, x)]; }
};

// Piecewise-constant 2D distribution over env-map texels, weighted by
// luminance (r + g + b) times texel solid angle. `pdf` is the per-steradian
// density of each texel; all entries are 0 when the map is black (total == 0)
// and env sampling is disabled.
struct EnvCdf {
  int width = 0;
  int height = 0;
  double total = 0.0;            // sum of luminance * solid-angle weights
  std::vector<double> row_cdf;   // height entries, normalized to end at 1
  std::vector<double> cell_cdf;  // height*width entries, normalized per row
  std::vector<double> pdf;       // height*width per-steradian densities
};

EnvCdf build_env_cdf(const EnvMap& env);

struct EnvDirSample {
  Vec3 dir;          // unit direction, uniform within the chosen texel
  double pdf = 0.0;  // per-steradian density
  int u = 0;         // chosen texel
  int v = 0;
};

// u1 picks the row, u2 the column, u3/u4 the position inside the texel.
// Requires cdf.total > 0.
EnvDirSample sample_env_cdf(const EnvCdf& cdf, double u1, double u2, double u3, double u4);

// Density of the texel containing `dir` (unit vector); 0 for a black map.
double env_pdf(const EnvCdf& cdf, const Vec3& dir);

// Renders one pass for one camera pose. Per pixel: a primary ray through the
// pixel center; misses write the env texel radiance along the ray, hits
// estimate direct lighting by multiple importance sampling (balance
// heuristic) between env-CDF and BRDF sampling with shadow rays. DIFF uses
// f = 1/pi, GGX passes use ggx_brdf with f0 = 1 and the corresponding
// roughness. Deterministic: each (pixel, sample) re-seeds a counter-based
// RNG from (seed, x, y, sample), so results are independent of scheduling.
// Throws Error(DegenerateCamera) for a non-finite pose or non-positive
// focal lengths, Error(BadParameter) for bad settings or dimensions.
Image3f render_pass(const SceneAssembly& assembly, const EnvMap& env, const CameraPose& pose,
                    PassKind kind, const RenderSettings& settings, int height, int width);

// Renders all frames and passes. Frame k uses trajectory.poses[k] and
// rotate_envmap(env, yaw_schedule[k]). `threads` workers split each image
// into row bands; the output is bit-identical for any thread count.
// Throws Error(LengthMismatch) when schedule and trajectory lengths differ.
ProxyStack render_proxy(const SceneAssembly& assembly, const EnvMap& env,
                        const CameraTrajectory& trajectory,
                        const std::vector<double>& yaw_schedule, const RenderSettings& settings,
                        int height, int width, int threads = 1);

// One frame of a proxy stack on disk ("LPXY"): magic, u32 version=1,
// u32 frame index, u32 height, u32 width, u32 channels=9, then channel-major
// float32 little-endian planes.
struct LpxyFrame {
  uint32_t frame_index = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;  // 9 * height * width

  float at(int c, int y, int x) const { return data[(size_t(c) * height + y) * width + x]; }
};

void save_lpxy(const ProxyStack& stack, int frame, const std::string& path);
LpxyFrame load_lpxy(const std::string& path);

// 8-bit RGB preview of one pass of one frame: Reinhard tonemap, then sRGB.
void write_pass_preview(const ProxyStack& stack, int frame, PassKind kind,
                        const std::string& path);

}  // namespace lvp
