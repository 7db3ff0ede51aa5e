// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#include "lvp/envmap.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace lvp {

EnvMap::EnvMap(int h, int w) : width(w), height(h) {
  if (h <= 0 || w != 2 * h)
    throw Error(Errc::DimensionMismatch, "environment map requires width = 2 * height, got " +
                                             std::to_string(w) + "x" + std::to_string(h));
  pixels.assign(size_t(h) * w * 3, 0.0f);
}

void EnvMap::validate() const {
  if (height <= 0 || width != 2 * height)
    throw Error(Errc::DimensionMismatch, "environment map requires width = 2 * height");
  if (pixels.size() != size_t(height) * width * 3)
    throw Error(Errc::DimensionMismatch, "environment map pixel buffer size mismatch");
  for (float v : pixels)
    if (!(v >= 0.0f) || !std::isfinite(v))
      throw Error(Errc::DimensionMismatch, "environment map radiance must be finite and >= 0");
}

// ----------------------------------------------------------------- RGBE

void rgbe_encode(const float rgb[3], uint8_t out[4]) {
  float m = std::max({rgb[0], rgb[1], rgb[2]});
  if (!(m > 0.0f)) {
    out[0] = out[1] = out[2] = out[3] = 0;
    return;
  }
  int e = static_cast<int>(std::ceil(std::log2(double(m)))) + 128;
  if (e < 1) {  // too dim to represent
    out[0] = out[1] = out[2] = out[3] = 0;
    return;
  }
  if (e > 255) e = 255;
  double scale = std::ldexp(256.0, -(e - 128));
  for (int c = 0; c < 3; ++c) {
    long v = std::lround(double(rgb[c]) * scale);
    out[c] = static_cast<uint8_t>(std::clamp(v, 0l, 255l));
  }
  out[3] = static_cast<uint8_t>(e);
}

void rgbe_decode(const uint8_t rgbe[4], float rgb[3]) {
  if (rgbe[3] == 0) {
    rgb[0] = rgb[1] = rgb[2] = 0.0f;
    return;
  }
  double f = std::ldexp(1.0 / 256.0, int(rgbe[3]) - 128);
  for (int c = 0; c < 3; ++c) rgb[c] = static_cast<float>(rgbe[c] * f);
}

namespace {

constexpr char kLenvMagic[4] = {'L', 'E', 'N', 'V'};

void write_u32(std::ostream& os, uint32_t v) {
  uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is, const char* what) {
  uint8_t b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw Error(Errc::TruncatedFile, std::string("truncated file while reading ") + what);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

void save_lenv(const EnvMap& map, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::IoError, "cannot open for writing: " + path);
  os.write(kLenvMagic, 4);
  write_u32(os, 1);
  write_u32(os, uint32_t(map.width));
  write_u32(os, uint32_t(map.height));
  static_assert(sizeof(float) == 4);
  // float32 little-endian; this targets little-endian hosts
  os.write(reinterpret_cast<const char*>(map.pixels.data()),
           std::streamsize(map.pixels.size() * 4));
  if (!os) throw Error(Errc::IoError, "write failed: " + path);
}

EnvMap load_lenv(std::istream& is, const std::string& path) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kLenvMagic, 4) != 0)
    throw Error(Errc::BadMagic, "not a LENV file: " + path);
  uint32_t version = read_u32(is, "LENV version");
  if (version != 1)
    throw Error(Errc::BadMagic, "unsupported LENV version " + std::to_string(version));
  uint32_t w = read_u32(is, "LENV width");
  uint32_t h = read_u32(is, "LENV height");
  if (h == 0 || w != 2 * h)
    throw Error(Errc::DimensionMismatch, "LENV width must be 2 * height: " + path);
  EnvMap map{int(h), int(w)};
  if (!is.read(reinterpret_cast<char*>(map.pixels.data()),
               std::streamsize(map.pixels.size() * 4)))
    throw Error(Errc::TruncatedFile, "truncated LENV pixel data: " + path);
  return map;
}

void save_hdr(const EnvMap& map, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::IoError, "cannot open for writing: " + path);
  os << "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y " << map.height << " +X " << map.width
     << "\n";
  std::vector<uint8_t> row(size_t(map.width) * 4);
  for (int v = 0; v < map.height; ++v) {
    for (int u = 0; u < map.width; ++u) {
      float rgb[3] = {map.at(v, u, 0), map.at(v, u, 1), map.at(v, u, 2)};
      rgbe_encode(rgb, &row[size_t(u) * 4]);
    }
    os.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
  }
  if (!os) throw Error(Errc::IoError, "write failed: " + path);
}

// Reads one scanline, handling both flat RGBE and new-style RLE.
void read_hdr_scanline(std::istream& is, int width, std::vector<uint8_t>& rgbe,
                       const std::string& path) {
  uint8_t head[4];
  if (!is.read(reinterpret_cast<char*>(head), 4))
    throw Error(Errc::TruncatedFile, "truncated scanline: " + path);
  bool rle = head[0] == 2 && head[1] == 2 && ((int(head[2]) << 8) | head[3]) == width &&
             width >= 8 && width <= 0x7fff;
  if (!rle) {
    std::memcpy(rgbe.data(), head, 4);
    if (width > 1 &&
        !is.read(reinterpret_cast<char*>(rgbe.data() + 4), std::streamsize(width - 1) * 4))
      throw Error(Errc::TruncatedFile, "truncated scanline: " + path);
    return;
  }
  // four separated component planes, run-length encoded
  for (int c = 0; c < 4; ++c) {
    int u = 0;
    while (u < width) {
      uint8_t count;
      if (!is.read(reinterpret_cast<char*>(&count), 1))
        throw Error(Errc::TruncatedFile, "truncated RLE scanline: " + path);
      if (count > 128) {  // run
        uint8_t value;
        if (!is.read(reinterpret_cast<char*>(&value), 1))
          throw Error(Errc::TruncatedFile, "truncated RLE run: " + path);
        int n = count - 128;
        if (u + n > width) throw Error(Errc::TruncatedFile, "RLE run overflow: " + path);
        for (int k = 0; k < n; ++k) rgbe[size_t(u + k) * 4 + c] = value;
        u += n;
      } else {  // literal span
        int n = count;
        if (n == 0 || u + n > width)
          throw Error(Errc::TruncatedFile, "bad RLE literal count: " + path);
        for (int k = 0; k < n; ++k)
          if (!is.read(reinterpret_cast<char*>(&rgbe[size_t(u + k) * 4 + c]), 1))
            throw Error(Errc::TruncatedFile, "truncated RLE literal: " + path);
        u += n;
      }
    }
  }
}

EnvMap load_hdr(std::istream& is, const std::string& path) {
  std::string line;
  if (!std::getline(is, line) || (line.rfind("#?RADIANCE", 0) != 0 && line.rfind("#?RGBE", 0) != 0))
    throw Error(Errc::BadMagic, "not a Radiance HDR file: " + path);
  // header ends at the first empty line
  while (std::getline(is, line) && !line.empty()) {
  }
  if (!std::getline(is, line))
    throw Error(Errc::TruncatedFile, "missing resolution line: " + path);
  int h = 0, w = 0;
  if (std::sscanf(line.c_str(), "-Y %d +X %d", &h, &w) != 2)
    throw Error(Errc::BadMagic, "unsupported HDR orientation: " + path);
  if (h <= 0 || w != 2 * h)
    throw Error(Errc::DimensionMismatch, "HDR width must be 2 * height: " + path);
  EnvMap map(h, w);
  std::vector<uint8_t> row(size_t(w) * 4);
  for (int v = 0; v < h; ++v) {
    read_hdr_scanline(is, w, row, path);
    for (int u = 0; u < w; ++u) {
      float rgb[3];
      rgbe_decode(&row[size_t(u) * 4], rgb);
      for (int c = 0; c < 3; ++c) map.at(v, u, c) = rgb[c];
    }
  }
  return map;
}

}  // namespace

EnvMap load_envmap(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::IoError, "cannot open: " + path);
  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  is.clear();
  is.seekg(0);
  EnvMap map;
  if (std::memcmp(magic, kLenvMagic, 4) == 0)
    map = load_lenv(is, path);
  else if (magic[0] == '#' && magic[1] == '?')
    map = load_hdr(is, path);
  else
    throw Error(Errc::BadMagic, "unrecognized environment map container: " + path);
  map.validate();
  return map;
}

void save_envmap(const EnvMap& map, const std::string& path) {
  map.validate();
  auto ext = std::filesystem::path(path).extension().string();
  for (char& c : ext) c = char(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".lenv")
    save_lenv(map, path);
  else if (ext == ".hdr")
    save_hdr(map, path);
  else
    throw Error(Errc::IoError, "unknown environment map extension '" + ext + "' (use .hdr or .lenv)");
}

// ------------------------------------------------------------- rotation

EnvMap rotate_envmap(const EnvMap& map, double yaw_degrees) {
  // Positive yaw rotates the light field by R_y(+yaw): a feature at
  // azimuth phi moves to phi - yaw, so texel u reads from u + shift.
  double yaw = std::fmod(yaw_degrees, 360.0);
  if (yaw < 0) yaw += 360.0;
  double shift = yaw * map.width / 360.0;
  double rounded = std::round(shift);
  bool integral = std::abs(shift - rounded) < 1e-9;

  EnvMap out(map.height, map.width);
  if (integral) {
    int s = int(rounded) % map.width;
    for (int v = 0; v < map.height; ++v)
      for (int u = 0; u < map.width; ++u) {
        int src = u + s;
        if (src >= map.width) src -= map.width;
        for (int c = 0; c < 3; ++c) out.at(v, u, c) = map.at(v, src, c);
      }
    return out;
  }
  int s0 = int(std::floor(shift));
  float f = float(shift - s0);
  for (int v = 0; v < map.height; ++v)
    for (int u = 0; u < map.width; ++u) {
      int a = (u + s0) % map.width;
      int b = (u + s0 + 1) % map.width;
      for (int c = 0; c < 3; ++c)
        out.at(v, u, c) = (1.0f - f) * map.at(v, a, c) + f * map.at(v, b, c);
    }
  return out;
}

std::vector<double> rotation_schedule(double total_degrees, int frames) {
  if (frames < 1) throw Error(Errc::BadParameter, "rotation_schedule requires frames >= 1");
  if (frames == 1) return {0.0};
  std::vector<double> yaw(frames);
  for (int k = 0; k < frames; ++k) yaw[k] = total_degrees * k / double(frames - 1);
  return yaw;
}

// -------------------------------------------------------------- catalog

std::vector<EnvIndexEntry> load_env_index(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::IoError, "cannot open: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadMagic, "invalid env index JSON: " + std::string(e.what()));
  }
  std::vector<EnvIndexEntry> index;
  for (auto it = j.begin(); it != j.end(); ++it) {
    EnvIndexEntry e;
    e.env_id = it.key();
    e.file = it.value().at("file").get<std::string>();
    for (const auto& t : it.value().at("tags")) e.tags.push_back(t.get<std::string>());
    index.push_back(std::move(e));
  }
  std::sort(index.begin(), index.end(),
            [](const EnvIndexEntry& a, const EnvIndexEntry& b) { return a.env_id < b.env_id; });
  return index;
}

std::optional<std::string> select_envmap(const std::vector<std::string>& lighting_tags,
                                         const std::vector<EnvIndexEntry>& index) {
  size_t best_score = 0;
  const EnvIndexEntry* best = nullptr;
  for (const EnvIndexEntry& e : index) {
    size_t score = 0;
    for (const std::string& t : e.tags)
      score += size_t(std::count(lighting_tags.begin(), lighting_tags.end(), t) > 0);
    if (score == 0) continue;
    if (!best || score > best_score || (score == best_score && e.env_id < best->env_id)) {
      best = &e;
      best_score = score;
    }
  }
  if (!best) return std::nullopt;
  return best->env_id;
}

// ------------------------------------------------------- procedural sky

EnvMap procedural_sky(double sun_azimuth_deg, double sun_elevation_deg, double warmth,
                      int height) {
  if (sun_elevation_deg < 0 || sun_elevation_deg > 90)
    throw Error(Errc::BadParameter, "sun elevation must be in [0, 90] degrees");
  if (warmth < 0 || warmth > 1)
    throw Error(Errc::BadParameter, "warmth must be in [0, 1]");
  if (height < 8) throw Error(Errc::BadParameter, "sky resolution height must be >= 8");

  int width = 2 * height;
  EnvMap map(height, width);

  double az = radians(sun_azimuth_deg);
  double el = radians(sun_elevation_deg);
  Vec3 sun_dir{std::cos(el) * std::sin(az), std::sin(el), -std::cos(el) * std::cos(az)};

  double cool[3] = {0.6, 0.7, 1.0};
  double warm[3] = {1.0, 0.7, 0.4};
  double chroma[3];
  for (int c = 0; c < 3; ++c) chroma[c] = (1.0 - warmth) * cool[c] + warmth * warm[c];

  // sky term first; the sun amplitude is expressed relative to its mean
  double sky_sum = 0;
  for (int v = 0; v < height; ++v) {
    double theta = kPi * (v + 0.5) / height;
    // 1 at the zenith fading to 0.25 at the nadir, never zero
    double grad = 0.25 + 0.75 * (std::cos(theta) + 1.0) * 0.5;
    for (int u = 0; u < width; ++u)
      for (int c = 0; c < 3; ++c) {
        float val = float(grad * chroma[c]);
        map.at(v, u, c) = val;
        sky_sum += val;
      }
  }
  double sky_mean = sky_sum / (double(height) * width * 3);

  const double sigma = radians(2.0);
  double sun_peak = 500.0 * sky_mean;
  for (int v = 0; v < height; ++v)
    for (int u = 0; u < width; ++u) {
      Vec3 d = envmap_direction(u, v, width, height);
      double psi = std::acos(std::clamp(dot(d, sun_dir), -1.0, 1.0));
      double disk = sun_peak * std::exp(-psi * psi / (2.0 * sigma * sigma));
      if (disk <= 0) continue;
      for (int c = 0; c < 3; ++c) map.at(v, u, c) += float(disk * chroma[c]);
    }
  return map;
}

// ---------------------------------------------------------- sphere map

Vec3 envmap_direction(int u, int v, int width, int height) {
  double phi = 2.0 * kPi * (u + 0.5) / width - kPi;
  double theta = kPi * (v + 0.5) / height;
  double st = std::sin(theta);
  return {st * std::sin(phi), std::cos(theta), -st * std::cos(phi)};
}

void direction_to_texel(Vec3 dir, int width, int height, int* u, int* v) {
  double theta = std::acos(std::clamp(dir.y, -1.0, 1.0));
  double phi = std::atan2(dir.x, -dir.z);
  int uu = int(std::floor((phi + kPi) / (2.0 * kPi) * width));
  int vv = int(std::floor(theta / kPi * height));
  *u = std::clamp(uu, 0, width - 1);
  *v = std::clamp(vv, 0, height - 1);
}

}  // namespace lvp
