// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#include "lvp/metrics.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "lvp/error.h"
#include "lvp/png_io.h"

namespace lvp {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<Vec3> camera_centers(const CameraTrajectory& traj) {
  std::vector<Vec3> centers;
  centers.reserve(traj.poses.size());
  for (const CameraPose& pose : traj.poses) centers.push_back(pose.translation);
  return centers;
}

// Rigid pose as (q, t) with p_world = rotate(q, p_local) + t.
struct Rigid {
  Quat q;
  Vec3 t;
};

// a^-1 composed with b.
Rigid relative(const Rigid& a, const Rigid& b) {
  Quat qi = conjugate(a.q);
  return {normalize(qi * b.q), rotate(qi, b.t - a.t)};
}

double rotation_angle_deg(Quat q) {
  double v = std::sqrt(q.x * q.x + q.y * q.y + q.z * q.z);
  return 2.0 * std::atan2(v, std::abs(q.w)) * 180.0 / kPi;
}

struct SiMoments {
  double wpg = 0;   // sum w p g
  double wpp = 0;   // sum w p^2
  double wsum = 0;  // sum w over (pixel, channel)
};

void accumulate_si(const EnvMap& pred, const EnvMap& gt, SiMoments& m) {
  if (pred.height != gt.height || pred.width != gt.width)
    throw Error(Errc::DimensionMismatch, "env map sizes differ");
  for (int v = 0; v < pred.height; ++v) {
    double w = std::sin(kPi * (v + 0.5) / pred.height);
    for (int u = 0; u < pred.width; ++u)
      for (int c = 0; c < 3; ++c) {
        double p = pred.at(v, u, c);
        double g = gt.at(v, u, c);
        m.wpg += w * p * g;
        m.wpp += w * p * p;
        m.wsum += w;
      }
  }
}

double clamp_scale(const SiMoments& m) {
  if (m.wpp <= 0.0) return 0.0;  // all-zero pred: any scale ties, pin at 0
  return std::max(0.0, m.wpg / m.wpp);
}

// Weighted mean of (s p - g)^2, evaluated directly so an exact fit gives
// exactly zero rather than a cancellation residue.
double weighted_residual(const EnvMap& pred, const EnvMap& gt, double s, double wsum) {
  double acc = 0;
  for (int v = 0; v < pred.height; ++v) {
    double w = std::sin(kPi * (v + 0.5) / pred.height);
    for (int u = 0; u < pred.width; ++u)
      for (int c = 0; c < 3; ++c) {
        double d = s * double(pred.at(v, u, c)) - double(gt.at(v, u, c));
        acc += w * d * d;
      }
  }
  return acc / wsum;
}

}  // namespace

Sim3Transform umeyama_sim3(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
  if (pred.size() != gt.size())
    throw Error(Errc::LengthMismatch, "point lists have different lengths");
  size_t n = pred.size();
  if (n < 3) throw Error(Errc::TooFewPoints, "need at least 3 point pairs");

  Vec3 mp{0, 0, 0}, mg{0, 0, 0};
  for (size_t i = 0; i < n; ++i) {
    mp = mp + pred[i];
    mg = mg + gt[i];
  }
  mp = mp * (1.0 / double(n));
  mg = mg * (1.0 / double(n));

  Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero();
  double var_p = 0, var_g = 0;
  for (size_t i = 0; i < n; ++i) {
    Vec3 dp = pred[i] - mp;
    Vec3 dg = gt[i] - mg;
    Eigen::Vector3d ep(dp.x, dp.y, dp.z), eg(dg.x, dg.y, dg.z);
    sigma += eg * ep.transpose();
    var_p += dot(dp, dp);
    var_g += dot(dg, dg);
  }
  sigma /= double(n);
  var_p /= double(n);
  var_g /= double(n);
  if (var_p <= 0.0 || var_g <= 0.0)
    throw Error(Errc::DegenerateConfiguration, "point cloud has zero variance");

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d v = svd.matrixV();
  Eigen::Vector3d d = svd.singularValues();
  Eigen::Vector3d flip(1, 1, (u.determinant() * v.determinant()) < 0 ? -1.0 : 1.0);
  Eigen::Matrix3d r = u * flip.asDiagonal() * v.transpose();

  double trace_ds = d(0) * flip(0) + d(1) * flip(1) + d(2) * flip(2);
  double s = trace_ds / var_p;
  if (s <= 0.0)
    throw Error(Errc::DegenerateConfiguration, "clouds are uncorrelated; no positive scale");

  Mat3 m;
  for (int j = 0; j < 3; ++j) m.col[j] = {r(0, j), r(1, j), r(2, j)};
  Sim3Transform out;
  out.scale = s;
  out.rotation = normalize(mat3_to_quat(m));
  out.translation = mg - s * rotate(out.rotation, mp);
  return out;
}

double compute_ate(const CameraTrajectory& pred, const CameraTrajectory& gt) {
  if (pred.frame_count() != gt.frame_count())
    throw Error(Errc::LengthMismatch, "trajectories have different frame counts");
  std::vector<Vec3> p = camera_centers(pred);
  std::vector<Vec3> g = camera_centers(gt);
  Sim3Transform T = umeyama_sim3(p, g);
  double acc = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    Vec3 r = apply(T, p[i]) - g[i];
    acc += dot(r, r);
  }
  return 100.0 * std::sqrt(acc / double(p.size()));
}

RpeResult compute_rpe(const CameraTrajectory& pred, const CameraTrajectory& gt, int step) {
  if (step < 1) throw Error(Errc::BadParameter, "rpe step must be >= 1");
  if (pred.frame_count() != gt.frame_count())
    throw Error(Errc::LengthMismatch, "trajectories have different frame counts");
  int n = pred.frame_count();
  if (n < step + 1) throw Error(Errc::LengthMismatch, "too few frames for the rpe step");

  double s = umeyama_sim3(camera_centers(pred), camera_centers(gt)).scale;

  double sum_t = 0, sum_r = 0;
  int count = n - step;
  for (int i = 0; i < count; ++i) {
    const CameraPose& pa = pred.poses[size_t(i)];
    const CameraPose& pb = pred.poses[size_t(i + step)];
    const CameraPose& ga = gt.poses[size_t(i)];
    const CameraPose& gb = gt.poses[size_t(i + step)];
    Rigid rel_p = relative({pa.rotation, s * pa.translation}, {pb.rotation, s * pb.translation});
    Rigid rel_g = relative({ga.rotation, ga.translation}, {gb.rotation, gb.translation});
    Rigid err = relative(rel_g, rel_p);
    sum_t += std::sqrt(dot(err.t, err.t));
    sum_r += rotation_angle_deg(err.q);
  }
  return {100.0 * sum_t / double(count), sum_r / double(count)};
}

TrajectoryMetrics trajectory_metrics(const CameraTrajectory& pred, const CameraTrajectory& gt,
                                     int step) {
  RpeResult rpe = compute_rpe(pred, gt, step);
  return {compute_ate(pred, gt), rpe.rpe_t, rpe.rpe_r};
}

double si_mse(const EnvMap& pred, const EnvMap& gt) {
  SiMoments m;
  accumulate_si(pred, gt, m);
  return weighted_residual(pred, gt, clamp_scale(m), m.wsum);
}

double lighting_instability(const std::vector<double>& per_frame_si_mse) {
  size_t n = per_frame_si_mse.size();
  if (n < 2) throw Error(Errc::TooFewFrames, "need at least 2 frames for instability");
  bool constant = true;
  for (double v : per_frame_si_mse) constant = constant && v == per_frame_si_mse[0];
  if (constant) return 0.0;  // exactly, regardless of summation rounding
  double mean = 0;
  for (double v : per_frame_si_mse) mean += v;
  mean /= double(n);
  double var = 0;
  for (double v : per_frame_si_mse) var += (v - mean) * (v - mean);
  return std::sqrt(var / double(n));
}

LightingEval evaluate_lighting(const std::vector<EnvMap>& pred, const std::vector<EnvMap>& gt,
                               bool per_sequence_scale) {
  if (pred.size() != gt.size())
    throw Error(Errc::LengthMismatch, "env sequences have different lengths");
  if (pred.empty()) throw Error(Errc::TooFewFrames, "empty env sequence");

  LightingEval out;
  out.per_frame.reserve(pred.size());
  if (per_sequence_scale) {
    SiMoments joint;
    for (size_t i = 0; i < pred.size(); ++i) accumulate_si(pred[i], gt[i], joint);
    double s = clamp_scale(joint);
    for (size_t i = 0; i < pred.size(); ++i) {
      SiMoments m;
      accumulate_si(pred[i], gt[i], m);
      out.per_frame.push_back(weighted_residual(pred[i], gt[i], s, m.wsum));
    }
  } else {
    for (size_t i = 0; i < pred.size(); ++i) out.per_frame.push_back(si_mse(pred[i], gt[i]));
  }

  double mean = 0;
  for (double v : out.per_frame) mean += v;
  out.error = mean / double(out.per_frame.size());
  out.instability = out.per_frame.size() >= 2 ? lighting_instability(out.per_frame) : 0.0;
  return out;
}

double compute_miou(const MaskSequence& pred, const MaskSequence& gt) {
  if (pred.size() != gt.size() || pred.empty())
    throw Error(Errc::DimensionMismatch, "mask sequences must be non-empty and equal length");

  struct Counts {
    int64_t inter = 0, in_pred = 0, in_gt = 0;
  };
  double acc = 0;
  int64_t pairs = 0;
  for (size_t f = 0; f < gt.size(); ++f) {
    const ImageU16& p = pred[f];
    const ImageU16& g = gt[f];
    if (p.height != g.height || p.width != g.width || p.height != gt[0].height ||
        p.width != gt[0].width)
      throw Error(Errc::DimensionMismatch, "mask frame sizes differ");
    std::unordered_map<uint16_t, Counts> counts;
    for (size_t i = 0; i < g.pixels.size(); ++i) {
      uint16_t pv = p.pixels[i];
      uint16_t gv = g.pixels[i];
      if (pv != 0) ++counts[pv].in_pred;
      if (gv != 0) ++counts[gv].in_gt;
      if (pv != 0 && pv == gv) ++counts[pv].inter;
    }
    // Accumulate in value order, not map order, so the result is identical
    // under any consistent relabeling of the IDs.
    std::vector<double> ious;
    for (const auto& [id, c] : counts) {
      if (c.in_gt == 0) continue;  // spurious prediction-only ID
      int64_t uni = c.in_pred + c.in_gt - c.inter;
      ious.push_back(double(c.inter) / double(uni));
    }
    std::sort(ious.begin(), ious.end());
    for (double iou : ious) acc += iou;
    pairs += int64_t(ious.size());
  }
  return pairs > 0 ? acc / double(pairs) : 1.0;
}

namespace {

std::string frame_name(const std::string& dir, int index, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05d%s", index, ext);
  return (std::filesystem::path(dir) / buf).string();
}

}  // namespace

MaskSequence load_mask_sequence(const std::string& dir) {
  MaskSequence seq;
  for (int k = 0;; ++k) {
    std::string path = frame_name(dir, k, ".png");
    if (!std::filesystem::exists(path)) break;
    seq.push_back(read_png_gray16(path));
  }
  if (seq.empty()) throw Error(Errc::IoError, "no mask frames under " + dir);
  return seq;
}

std::vector<EnvMap> load_env_sequence(const std::string& dir) {
  std::vector<EnvMap> seq;
  for (int k = 0;; ++k) {
    std::string lenv = frame_name(dir, k, ".lenv");
    std::string hdr = frame_name(dir, k, ".hdr");
    if (std::filesystem::exists(lenv))
      seq.push_back(load_envmap(lenv));
    else if (std::filesystem::exists(hdr))
      seq.push_back(load_envmap(hdr));
    else
      break;
  }
  if (seq.empty()) throw Error(Errc::IoError, "no env frames under " + dir);
  return seq;
}

void save_metrics_json(const std::map<std::string, double>& metrics, const std::string& path) {
  nlohmann::json obj = nlohmann::json::object();
  for (const auto& [key, value] : metrics) obj[key] = value;
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot open " + path + " for writing");
  out << obj.dump(2) << "\n";
  if (!out) throw Error(Errc::IoError, "short write to " + path);
}

void save_per_frame_csv(const std::string& path, const std::vector<std::string>& columns,
                        const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot open " + path + " for writing");
  for (size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << "\n";
  char cell[64];
  for (const std::vector<double>& row : rows) {
    if (row.size() != columns.size())
      throw Error(Errc::BadParameter, "csv row width disagrees with header");
    for (size_t c = 0; c < row.size(); ++c) {
      std::snprintf(cell, sizeof(cell), "%.17g", row[c]);
      out << (c ? "," : "") << cell;
    }
    out << "\n";
  }
  if (!out) throw Error(Errc::IoError, "short write to " + path);
}

}  // namespace lvp
