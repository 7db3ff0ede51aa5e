// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#include "lvp/render.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include "lvp/bvh.h"
#include "lvp/error.h"
#include "lvp/ggx.h"
#include "lvp/png_io.h"
#include "lvp/rng.h"

namespace lvp {

const char* to_string(PassKind kind) {
  switch (kind) {
    case PassKind::diff: return "diff";
    case PassKind::ggx1: return "ggx1";
    case PassKind::ggx2: return "ggx2";
  }
  return "?";
}

void validate_settings(const RenderSettings& s) {
  if (s.spp_diffuse <= 0 || s.spp_glossy <= 0)
    throw Error(Errc::BadParameter, "sample counts must be positive");
  auto ok = [](double a) { return a > 0.0 && a <= 1.0; };
  if (!ok(s.roughness_rough) || !ok(s.roughness_glossy))
    throw Error(Errc::BadParameter, "roughness must lie in (0, 1]");
  if (!(s.roughness_glossy < s.roughness_rough))
    throw Error(Errc::BadParameter, "roughness_glossy must be below roughness_rough");
  if (!(s.max_shadow_distance > 0.0))
    throw Error(Errc::BadParameter, "max_shadow_distance must be positive");
}

EnvCdf build_env_cdf(const EnvMap& env) {
  EnvCdf cdf;
  cdf.width = env.width;
  cdf.height = env.height;
  cdf.row_cdf.assign(size_t(env.height), 0.0);
  cdf.cell_cdf.assign(size_t(env.height) * env.width, 0.0);
  cdf.pdf.assign(size_t(env.height) * env.width, 0.0);
  std::vector<double> row_weight(size_t(env.height), 0.0);
  std::vector<double> lum(size_t(env.height) * env.width, 0.0);
  for (int v = 0; v < env.height; ++v) {
    // Solid angle of a texel in row v is (2 pi / W) * band; band is the
    // cos-theta span of the row, so luminance * band weights by solid angle.
    double band = std::cos(kPi * v / env.height) - std::cos(kPi * (v + 1) / env.height);
    double acc = 0.0;
    for (int u = 0; u < env.width; ++u) {
      size_t i = size_t(v) * env.width + u;
      lum[i] = double(env.at(v, u, 0)) + env.at(v, u, 1) + env.at(v, u, 2);
      acc += lum[i] * band;
      cdf.cell_cdf[i] = acc;
    }
    row_weight[size_t(v)] = acc;
    cdf.total += acc;
  }
  if (cdf.total <= 0.0) {
    cdf.total = 0.0;
    return cdf;
  }
  double acc = 0.0;
  for (int v = 0; v < env.height; ++v) {
    acc += row_weight[size_t(v)];
    cdf.row_cdf[size_t(v)] = acc / cdf.total;
    double rw = row_weight[size_t(v)];
    for (int u = 0; u < env.width; ++u) {
      size_t i = size_t(v) * env.width + u;
      cdf.cell_cdf[i] = rw > 0.0 ? cdf.cell_cdf[i] / rw : 1.0;
      // P(texel) / Omega(texel): the band factor cancels.
      cdf.pdf[i] = lum[i] * env.width / (2.0 * kPi * cdf.total);
    }
    cdf.cell_cdf[size_t(v) * env.width + env.width - 1] = 1.0;
  }
  cdf.row_cdf[size_t(env.height) - 1] = 1.0;
  return cdf;
}

EnvDirSample sample_env_cdf(const EnvCdf& cdf, double u1, double u2, double u3, double u4) {
  EnvDirSample out;
  auto row_it = std::upper_bound(cdf.row_cdf.begin(), cdf.row_cdf.end(), u1);
  int v = int(std::min(size_t(row_it - cdf.row_cdf.begin()), size_t(cdf.height - 1)));
  auto row_begin = cdf.cell_cdf.begin() + size_t(v) * cdf.width;
  auto col_it = std::upper_bound(row_begin, row_begin + cdf.width, u2);
  int u = int(std::min(size_t(col_it - row_begin), size_t(cdf.width - 1)));
  double cos_top = std::cos(kPi * v / cdf.height);
  double cos_bot = std::cos(kPi * (v + 1) / cdf.height);
  double mu = cos_top - (cos_top - cos_bot) * u3;
  double sin_theta = std::sqrt(std::max(0.0, 1.0 - mu * mu));
  double phi = 2.0 * kPi * (u + u4) / cdf.width - kPi;
  out.dir = Vec3{sin_theta * std::sin(phi), mu, -sin_theta * std::cos(phi)};
  out.pdf = cdf.pdf[size_t(v) * cdf.width + u];
  out.u = u;
  out.v = v;
  return out;
}

double env_pdf(const EnvCdf& cdf, const Vec3& dir) {
  if (cdf.total <= 0.0) return 0.0;
  int u, v;
  direction_to_texel(dir, cdf.width, cdf.height, &u, &v);
  return cdf.pdf[size_t(v) * cdf.width + u];
}

namespace {

struct PassSpec {
  PassKind kind;
  int spp;
  double alpha;  // unused for diff
};

double eval_brdf(const PassSpec& pass, const Vec3& n, const Vec3& v, const Vec3& l) {
  if (pass.kind == PassKind::diff) return dot(n, l) > 0.0 && dot(n, v) > 0.0 ? 1.0 / kPi : 0.0;
  return ggx_brdf(n, v, l, pass.alpha, 1.0);
}

double eval_pdf(const PassSpec& pass, const Vec3& n, const Vec3& v, const Vec3& l) {
  if (pass.kind == PassKind::diff) return pdf_cosine(n, l);
  return pdf_ggx_reflect(n, v, l, pass.alpha);
}

struct FrameContext {
  const Bvh* bvh;  // null for an empty scene
  const EnvMap* env;
  const EnvCdf* cdf;
  const RenderSettings* settings;
  CameraPose pose;
  int height, width;
};

bool shadowed(const FrameContext& ctx, const Vec3& p, const Vec3& n_geom, const Vec3& l) {
  if (!ctx.bvh) return false;
  Ray ray;
  ray.origin = p + n_geom * (1e-6 * (1.0 + length(p)));
  ray.dir = l;
  ray.tmax = ctx.settings->max_shadow_distance;
  return occluded(*ctx.bvh, ray);
}

// Base-2 radical inverse; {(s/n, vdc2(s))} is a low-discrepancy point set.
double vdc2(uint32_t s) {
  s = (s << 16) | (s >> 16);
  s = ((s & 0x00ff00ffu) << 8) | ((s & 0xff00ff00u) >> 8);
  s = ((s & 0x0f0f0f0fu) << 4) | ((s & 0xf0f0f0f0u) >> 4);
  s = ((s & 0x33333333u) << 2) | ((s & 0xccccccccu) >> 2);
  s = ((s & 0x55555555u) << 1) | ((s & 0xaaaaaaaau) >> 1);
  return s * 0x1p-32;
}

double fract(double x) { return x - std::floor(x); }

// One pixel of one pass. Both MIS strategies place their primary 2D uniforms
// on a per-pixel randomly rotated lattice/radical-inverse net over the sample
// index; without this the per-pixel furnace noise at 64 spp is several
// percent instead of a few tenths. Draw order is fixed so the RNG stream
// layout never depends on control flow.
void shade_pixel(const FrameContext& ctx, const PassSpec& pass, int x, int y, float* out) {
  const EnvMap& env = *ctx.env;
  Vec3 dir_cam{(x + 0.5 - ctx.pose.intrinsics.cx) / ctx.pose.intrinsics.fx,
               -(y + 0.5 - ctx.pose.intrinsics.cy) / ctx.pose.intrinsics.fy, -1.0};
  Vec3 dir = normalize(rotate(ctx.pose.rotation, dir_cam));
  std::optional<TriHit> hit;
  if (ctx.bvh) {
    Ray ray;
    ray.origin = ctx.pose.translation;
    ray.dir = dir;
    hit = intersect(*ctx.bvh, ray);
  }
  if (!hit) {
    int u, v;
    direction_to_texel(dir, env.width, env.height, &u, &v);
    for (int c = 0; c < 3; ++c) out[c] = env.at(v, u, c);
    return;
  }
  Vec3 p = ctx.pose.translation + dir * hit->t;
  Vec3 n = triangle_normal(*ctx.bvh, hit->triangle);
  Vec3 view = dir * -1.0;
  if (dot(n, view) < 0.0) n = n * -1.0;
  double acc[3] = {0.0, 0.0, 0.0};
  int spp = pass.spp;
  uint64_t pixel_key = hash_combine(ctx.settings->seed, uint64_t(uint32_t(x)));
  pixel_key = hash_combine(pixel_key, uint64_t(uint32_t(y)));
  Pcg32 pixel_rng(pixel_key);
  // Cranley-Patterson rotations, one pair per strategy, shared by all samples
  // of this pixel.
  double rot_e1 = pixel_rng.next_double(), rot_e2 = pixel_rng.next_double();
  double rot_b1 = pixel_rng.next_double(), rot_b2 = pixel_rng.next_double();
  for (int s = 0; s < spp; ++s) {
    Pcg32 rng(hash_combine(pixel_key, uint64_t(uint32_t(s))));
    double j1 = rng.next_double(), j2 = rng.next_double();  // in-texel jitter
    // Env-map strategy.
    if (ctx.cdf->total > 0.0) {
      double u1 = fract(double(s) / spp + rot_e1);
      double u2 = fract(vdc2(uint32_t(s)) + rot_e2);
      EnvDirSample es = sample_env_cdf(*ctx.cdf, u1, u2, j1, j2);
      double nl = dot(n, es.dir);
      if (es.pdf > 0.0 && nl > 0.0) {
        double f = eval_brdf(pass, n, view, es.dir);
        if (f > 0.0 && !shadowed(ctx, p, n, es.dir)) {
          double w = es.pdf / (es.pdf + eval_pdf(pass, n, view, es.dir));
          double scale = w * f * nl / es.pdf;
          for (int c = 0; c < 3; ++c) acc[c] += scale * env.at(es.v, es.u, c);
        }
      }
    }
    // BRDF strategy.
    double u3 = fract(double(s) / spp + rot_b1);
    double u4 = fract(vdc2(uint32_t(s)) + rot_b2);
    Vec3 l;
    double pdf_b = 0.0;
    if (pass.kind == PassKind::diff) {
      l = sample_cosine(n, u3, u4);
      pdf_b = pdf_cosine(n, l);
    } else {
      Vec3 h = sample_ggx_half(n, pass.alpha, u3, u4);
      double vh = dot(view, h);
      if (vh > 0.0) {
        l = h * (2.0 * vh) - view;
        pdf_b = ggx_ndf(dot(n, h), pass.alpha) * dot(n, h) / (4.0 * vh);
      }
    }
    double nl = pdf_b > 0.0 ? dot(n, l) : 0.0;
    if (pdf_b > 0.0 && nl > 0.0) {
      double f = eval_brdf(pass, n, view, l);
      if (f > 0.0) {
        int u, v;
        direction_to_texel(l, env.width, env.height, &u, &v);
        float r = env.at(v, u, 0), g = env.at(v, u, 1), b = env.at(v, u, 2);
        if ((r > 0.0f || g > 0.0f || b > 0.0f) && !shadowed(ctx, p, n, l)) {
          double pdf_e = ctx.cdf->total > 0.0 ? ctx.cdf->pdf[size_t(v) * env.width + u] : 0.0;
          double w = pdf_b / (pdf_b + pdf_e);
          double scale = w * f * nl / pdf_b;
          acc[0] += scale * r;
          acc[1] += scale * g;
          acc[2] += scale * b;
        }
      }
    }
  }
  for (int c = 0; c < 3; ++c) out[c] = float(acc[c] / spp);
}

void validate_pose(const CameraPose& pose) {
  const Quat& q = pose.rotation;
  bool finite = is_finite(pose.translation) && std::isfinite(q.w) && std::isfinite(q.x) &&
                std::isfinite(q.y) && std::isfinite(q.z) &&
                std::isfinite(pose.intrinsics.fx) && std::isfinite(pose.intrinsics.fy) &&
                std::isfinite(pose.intrinsics.cx) && std::isfinite(pose.intrinsics.cy);
  if (!finite || pose.intrinsics.fx <= 0.0 || pose.intrinsics.fy <= 0.0)
    throw Error(Errc::DegenerateCamera, "camera pose is not finite or focal length is invalid");
}

PassSpec make_pass_spec(PassKind kind, const RenderSettings& s) {
  switch (kind) {
    case PassKind::diff: return {kind, s.spp_diffuse, 0.0};
    case PassKind::ggx1: return {kind, s.spp_glossy, s.roughness_rough};
    case PassKind::ggx2: return {kind, s.spp_glossy, s.roughness_glossy};
  }
  throw Error(Errc::BadParameter, "unknown pass kind");
}

// Runs fn(y) for every row, split into contiguous bands across workers.
template <typename Fn>
void parallel_rows(int height, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, height));
  if (threads == 1) {
    for (int y = 0; y < height; ++y) fn(y);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(size_t(threads));
  for (int t = 0; t < threads; ++t) {
    int y0 = height * t / threads;
    int y1 = height * (t + 1) / threads;
    pool.emplace_back([&fn, y0, y1] {
      for (int y = y0; y < y1; ++y) fn(y);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

Image3f render_pass(const SceneAssembly& assembly, const EnvMap& env, const CameraPose& pose,
                    PassKind kind, const RenderSettings& settings, int height, int width) {
  validate_settings(settings);
  validate_pose(pose);
  if (height <= 0 || width <= 0) throw Error(Errc::BadParameter, "image size must be positive");
  env.validate();
  TriangleSoup soup = flatten_assembly(assembly);
  Bvh bvh;
  if (!soup.triangles.empty()) bvh = build_bvh(std::move(soup.vertices), std::move(soup.triangles));
  EnvCdf cdf = build_env_cdf(env);
  FrameContext ctx{bvh.empty() ? nullptr : &bvh, &env, &cdf, &settings, pose, height, width};
  PassSpec pass = make_pass_spec(kind, settings);
  Image3f image(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) shade_pixel(ctx, pass, x, y, &image.at(y, x, 0));
  return image;
}

ProxyStack render_proxy(const SceneAssembly& assembly, const EnvMap& env,
                        const CameraTrajectory& trajectory,
                        const std::vector<double>& yaw_schedule, const RenderSettings& settings,
                        int height, int width, int threads) {
  validate_settings(settings);
  if (height <= 0 || width <= 0) throw Error(Errc::BadParameter, "image size must be positive");
  if (trajectory.poses.size() != yaw_schedule.size())
    throw Error(Errc::LengthMismatch,
                "trajectory has " + std::to_string(trajectory.poses.size()) +
                    " poses but the rotation schedule has " +
                    std::to_string(yaw_schedule.size()) + " entries");
  for (const CameraPose& pose : trajectory.poses) validate_pose(pose);
  env.validate();
  TriangleSoup soup = flatten_assembly(assembly);
  Bvh bvh;
  if (!soup.triangles.empty()) bvh = build_bvh(std::move(soup.vertices), std::move(soup.triangles));
  int frames = int(trajectory.poses.size());
  ProxyStack stack(frames, height, width);
  const PassKind kinds[3] = {PassKind::diff, PassKind::ggx1, PassKind::ggx2};
  for (int k = 0; k < frames; ++k) {
    EnvMap rotated = rotate_envmap(env, yaw_schedule[size_t(k)]);
    EnvCdf cdf = build_env_cdf(rotated);
    FrameContext ctx{bvh.empty() ? nullptr : &bvh, &rotated, &cdf, &settings,
                     trajectory.poses[size_t(k)], height, width};
    for (int pi = 0; pi < 3; ++pi) {
      PassSpec pass = make_pass_spec(kinds[pi], settings);
      parallel_rows(height, threads, [&, pi, k](int y) {
        for (int x = 0; x < width; ++x) {
          float rgb[3];
          shade_pixel(ctx, pass, x, y, rgb);
          for (int c = 0; c < 3; ++c) stack.at(k, 3 * pi + c, y, x) = rgb[c];
        }
      });
    }
  }
  return stack;
}

namespace {

constexpr char kLpxyMagic[4] = {'L', 'P', 'X', 'Y'};

void write_u32le(std::ostream& os, uint32_t v) {
  uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32le(std::istream& is, const char* what) {
  uint8_t b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw Error(Errc::TruncatedFile, std::string("truncated file while reading ") + what);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

}  // namespace

void save_lpxy(const ProxyStack& stack, int frame, const std::string& path) {
  if (frame < 0 || frame >= stack.frames)
    throw Error(Errc::BadParameter, "frame index out of range: " + std::to_string(frame));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::IoError, "cannot open for writing: " + path);
  os.write(kLpxyMagic, 4);
  write_u32le(os, 1);
  write_u32le(os, uint32_t(frame));
  write_u32le(os, uint32_t(stack.height));
  write_u32le(os, uint32_t(stack.width));
  write_u32le(os, uint32_t(kProxyChannels));
  static_assert(sizeof(float) == 4);
  // The per-frame slice is already channel-major; float32 little-endian,
  // matching the LENV convention (little-endian hosts).
  const float* plane = stack.data.data() + stack.index(frame, 0, 0, 0);
  os.write(reinterpret_cast<const char*>(plane),
           std::streamsize(size_t(kProxyChannels) * stack.height * stack.width * 4));
  if (!os) throw Error(Errc::IoError, "write failed: " + path);
}

LpxyFrame load_lpxy(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::IoError, "cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kLpxyMagic, 4) != 0)
    throw Error(Errc::BadMagic, "not an LPXY file: " + path);
  uint32_t version = read_u32le(is, "LPXY version");
  if (version != 1)
    throw Error(Errc::BadMagic, "unsupported LPXY version " + std::to_string(version));
  LpxyFrame frame;
  frame.frame_index = read_u32le(is, "LPXY frame index");
  uint32_t h = read_u32le(is, "LPXY height");
  uint32_t w = read_u32le(is, "LPXY width");
  uint32_t channels = read_u32le(is, "LPXY channel count");
  if (channels != uint32_t(kProxyChannels) || h == 0 || w == 0)
    throw Error(Errc::DimensionMismatch, "LPXY must hold 9 non-empty channels: " + path);
  frame.height = int(h);
  frame.width = int(w);
  frame.data.resize(size_t(kProxyChannels) * h * w);
  if (!is.read(reinterpret_cast<char*>(frame.data.data()),
               std::streamsize(frame.data.size() * 4)))
    throw Error(Errc::TruncatedFile, "truncated LPXY pixel data: " + path);
  return frame;
}

void write_pass_preview(const ProxyStack& stack, int frame, PassKind kind,
                        const std::string& path) {
  if (frame < 0 || frame >= stack.frames)
    throw Error(Errc::BadParameter, "frame index out of range: " + std::to_string(frame));
  int c0 = 3 * int(kind);
  std::vector<uint8_t> rgb(size_t(stack.height) * stack.width * 3);
  for (int y = 0; y < stack.height; ++y)
    for (int x = 0; x < stack.width; ++x)
      for (int c = 0; c < 3; ++c)
        rgb[(size_t(y) * stack.width + x) * 3 + c] = tonemap_srgb_u8(stack.at(frame, c0 + c, y, x));
  write_png_rgb8(path, stack.width, stack.height, rgb);
}

}  // namespace lvp
