// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#include "lvp/camera.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "lvp/error.h"

namespace lvp {

CameraIntrinsics default_intrinsics(int width, int height) {
  CameraIntrinsics k;
  k.fx = 0.9 * width;
  k.fy = 0.9 * width;
  k.cx = 0.5 * width;
  k.cy = 0.5 * height;
  return k;
}

Quat look_at(const Vec3& pos, const Vec3& target, const Vec3& up) {
  Vec3 back = pos - target;  // camera +z points away from the target
  double len = length(back);
  if (len < 1e-12) throw Error(Errc::BadParameter, "camera position equals target");
  back = back / len;
  Vec3 right = cross(up, back);
  if (length(right) < 1e-9) right = cross(Vec3{1, 0, 0}, back);
  if (length(right) < 1e-9) right = cross(Vec3{0, 0, 1}, back);
  right = normalize(right);
  Vec3 cam_up = cross(back, right);
  Mat3 m{{right, cam_up, back}};
  return normalize(mat3_to_quat(m));
}

namespace {

struct ParamSet {
  std::map<std::string, double> values;

  double get(const std::string& name, double fallback) const {
    auto it = values.find(name);
    return it == values.end() ? fallback : it->second;
  }
};

ParamSet collect_params(const CameraClause& plan,
                        const std::vector<std::string>& allowed) {
  ParamSet ps;
  for (const CameraParam& p : plan.parameters) {
    if (std::find(allowed.begin(), allowed.end(), p.name) == allowed.end())
      throw Error(Errc::BadParameter,
                  "unknown parameter '" + p.name + "' for move " + to_string(plan.move));
    if (!std::isfinite(p.value))
      throw Error(Errc::BadParameter, "non-finite parameter " + p.name);
    ps.values[p.name] = p.value;  // later duplicates win
  }
  return ps;
}

// Flips quaternion signs in place so consecutive frames satisfy dot >= 0.
void align_hemispheres(std::vector<CameraPose>& poses) {
  for (size_t k = 1; k < poses.size(); ++k)
    if (dot(poses[k - 1].rotation, poses[k].rotation) < 0)
      poses[k].rotation = -poses[k].rotation;
}

}  // namespace

CameraTrajectory plan_camera(const CameraClause& plan, const Aabb& scene_bounds,
                             int frames, int width, int height) {
  if (frames < 2) throw Error(Errc::BadParameter, "frames must be >= 2");
  Vec3 center = scene_bounds.center();
  Vec3 half = scene_bounds.half_extents();
  double radius_scene = std::max(length(half), 0.5);
  CameraIntrinsics intr = default_intrinsics(width, height);

  CameraTrajectory traj;
  traj.poses.resize(frames);

  switch (plan.move) {
    case MoveKind::orbit: {
      ParamSet ps = collect_params(plan, {"span", "radius", "height"});
      double span = ps.get("span", 360.0);
      double radius = ps.get("radius", 2.5 * radius_scene);
      // Default orbit is in the horizontal plane through the center so the
      // camera-to-center distance equals the radius exactly.
      double height = ps.get("height", 0.0);
      if (radius <= 0) throw Error(Errc::BadParameter, "orbit radius must be > 0");
      for (int k = 0; k < frames; ++k) {
        double az = radians(span) * k / (frames - 1);
        Vec3 pos = center + Vec3{radius * std::sin(az), height, radius * std::cos(az)};
        traj.poses[k] = {look_at(pos, center), pos, intr};
      }
      break;
    }
    case MoveKind::dolly: {
      ParamSet ps = collect_params(plan, {"x0", "y0", "z0", "x1", "y1", "z1"});
      Vec3 p0 = {ps.get("x0", center.x), ps.get("y0", center.y + 0.5 * radius_scene),
                 ps.get("z0", center.z + 3.0 * radius_scene)};
      Vec3 p1 = {ps.get("x1", center.x), ps.get("y1", center.y + 0.5 * radius_scene),
                 ps.get("z1", center.z + 1.5 * radius_scene)};
      Quat q = look_at(p0, center);  // orientation fixed over the move
      for (int k = 0; k < frames; ++k) {
        double u = double(k) / (frames - 1);
        traj.poses[k] = {q, lerp(p0, p1, u), intr};
      }
      break;
    }
    case MoveKind::crane: {
      ParamSet ps = collect_params(plan, {"h0", "h1", "d0", "d1"});
      double h0 = ps.get("h0", 0.25 * radius_scene);
      double h1 = ps.get("h1", 1.5 * radius_scene);
      double d0 = ps.get("d0", 2.5 * radius_scene);
      double d1 = ps.get("d1", 1.5 * radius_scene);
      if (d0 <= 0 || d1 <= 0) throw Error(Errc::BadParameter, "crane distance must be > 0");
      for (int k = 0; k < frames; ++k) {
        double u = double(k) / (frames - 1);
        Vec3 pos = center + Vec3{0, h0 + (h1 - h0) * u, d0 + (d1 - d0) * u};
        traj.poses[k] = {look_at(pos, center), pos, intr};
      }
      break;
    }
    case MoveKind::dolly_zoom: {
      ParamSet ps = collect_params(plan, {"d0", "d1"});
      double d0 = ps.get("d0", 1.5 * radius_scene);
      double d1 = ps.get("d1", 3.0 * radius_scene);
      if (d0 <= 0 || d1 <= 0)
        throw Error(Errc::BadParameter, "dolly_zoom distance must be > 0");
      double d_mid = 0.5 * (d0 + d1);  // distance at the center frame
      for (int k = 0; k < frames; ++k) {
        double u = double(k) / (frames - 1);
        double d = d0 + (d1 - d0) * u;
        Vec3 pos = center + Vec3{0, 0.5 * radius_scene, d};
        CameraIntrinsics ki = intr;
        // Projected height ~ f / distance; hold it at the center frame value.
        ki.fx = intr.fx * d / d_mid;
        ki.fy = intr.fy * d / d_mid;
        traj.poses[k] = {look_at(pos, center), pos, ki};
      }
      break;
    }
    case MoveKind::static_: {
      ParamSet ps = collect_params(plan, {"x", "y", "z"});
      Vec3 pos = {ps.get("x", center.x), ps.get("y", center.y + 0.5 * radius_scene),
                  ps.get("z", center.z + 2.5 * radius_scene)};
      CameraPose pose = {look_at(pos, center), pos, intr};
      for (int k = 0; k < frames; ++k) traj.poses[k] = pose;
      break;
    }
  }

  align_hemispheres(traj.poses);
  return traj;
}

namespace {

// Hermite basis on [0, 1].
inline double h00(double u) { return (1 + 2 * u) * (1 - u) * (1 - u); }
inline double h10(double u) { return u * (1 - u) * (1 - u); }
inline double h01(double u) { return u * u * (3 - 2 * u); }
inline double h11(double u) { return u * u * (u - 1); }

}  // namespace

CameraTrajectory interpolate_keyframes(const std::vector<CameraKeyframe>& keys,
                                       int frames) {
  size_t n = keys.size();
  if (n < 2) throw Error(Errc::TooFewKeys, "need at least 2 keyframes");
  for (size_t i = 1; i < n; ++i)
    if (!(keys[i].time > keys[i - 1].time))
      throw Error(Errc::NonMonotoneTimes, "keyframe times must strictly increase");
  if (std::abs(keys.front().time) > 1e-12 || std::abs(keys.back().time - 1.0) > 1e-12)
    throw Error(Errc::BadParameter, "keyframe times must span [0, 1]");
  if (frames < 2) throw Error(Errc::BadParameter, "frames must be >= 2");

  // Centripetal knot spacing: d_i = ||P_{i+1} - P_i||^(1/2), floored so
  // coincident keys degenerate to constant segments instead of 0/0.
  std::vector<double> d(n - 1);
  for (size_t i = 0; i + 1 < n; ++i)
    d[i] = std::max(
        std::sqrt(length(keys[i + 1].pose.translation - keys[i].pose.translation)),
        1e-12);

  std::vector<Vec3> m(n);
  m[0] = (keys[1].pose.translation - keys[0].pose.translation) / d[0];
  m[n - 1] = (keys[n - 1].pose.translation - keys[n - 2].pose.translation) / d[n - 2];
  for (size_t i = 1; i + 1 < n; ++i) {
    Vec3 fwd = (keys[i + 1].pose.translation - keys[i].pose.translation) / d[i];
    Vec3 bwd = (keys[i].pose.translation - keys[i - 1].pose.translation) / d[i - 1];
    m[i] = (fwd * d[i - 1] + bwd * d[i]) / (d[i - 1] + d[i]);
  }

  // Key orientations aligned to one hemisphere chain before slerp.
  std::vector<Quat> q(n);
  q[0] = normalize(keys[0].pose.rotation);
  for (size_t i = 1; i < n; ++i) {
    q[i] = normalize(keys[i].pose.rotation);
    if (dot(q[i - 1], q[i]) < 0) q[i] = -q[i];
  }

  CameraTrajectory traj;
  traj.poses.resize(frames);
  for (int k = 0; k < frames; ++k) {
    double t = double(k) / (frames - 1);
    size_t seg = n - 2;
    for (size_t i = 0; i + 1 < n; ++i)
      if (t < keys[i + 1].time) {
        seg = i;
        break;
      }
    double u = (t - keys[seg].time) / (keys[seg + 1].time - keys[seg].time);
    u = std::clamp(u, 0.0, 1.0);

    const Vec3& p0 = keys[seg].pose.translation;
    const Vec3& p1 = keys[seg + 1].pose.translation;
    Vec3 pos = p0 * h00(u) + m[seg] * (d[seg] * h10(u)) + p1 * h01(u) +
               m[seg + 1] * (d[seg] * h11(u));

    CameraPose pose;
    pose.translation = pos;
    pose.rotation = slerp(q[seg], q[seg + 1], u);
    const CameraIntrinsics& a = keys[seg].pose.intrinsics;
    const CameraIntrinsics& b = keys[seg + 1].pose.intrinsics;
    pose.intrinsics = {a.fx + (b.fx - a.fx) * u, a.fy + (b.fy - a.fy) * u,
                       a.cx + (b.cx - a.cx) * u, a.cy + (b.cy - a.cy) * u};
    traj.poses[k] = pose;
  }

  align_hemispheres(traj.poses);
  return traj;
}

void save_trajectory(const CameraTrajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot open " + path + " for writing");
  out << "# k tx ty tz qw qx qy qz fx fy cx cy\n";
  char buf[512];
  for (int k = 0; k < traj.frame_count(); ++k) {
    const CameraPose& p = traj.poses[k];
    std::snprintf(buf, sizeof(buf),
                  "%d %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                  k, p.translation.x, p.translation.y, p.translation.z, p.rotation.w,
                  p.rotation.x, p.rotation.y, p.rotation.z, p.intrinsics.fx,
                  p.intrinsics.fy, p.intrinsics.cx, p.intrinsics.cy);
    out << buf;
  }
  if (!out) throw Error(Errc::IoError, "write failed: " + path);
}

CameraTrajectory load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  CameraTrajectory traj;
  std::string line;
  int expect = 0;
  while (std::getline(in, line)) {
    size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    int k;
    CameraPose p;
    if (!(ls >> k >> p.translation.x >> p.translation.y >> p.translation.z >>
          p.rotation.w >> p.rotation.x >> p.rotation.y >> p.rotation.z >>
          p.intrinsics.fx >> p.intrinsics.fy >> p.intrinsics.cx >> p.intrinsics.cy))
      throw Error(Errc::SyntaxError, path + ": malformed trajectory line: " + line);
    if (k != expect)
      throw Error(Errc::SyntaxError,
                  path + ": expected frame " + std::to_string(expect) + ", got " +
                      std::to_string(k));
    double qn = norm(p.rotation);
    if (!(qn > 0.5 && qn < 2.0) || !is_finite(p.translation))
      throw Error(Errc::SyntaxError, path + ": bad pose on frame " + std::to_string(k));
    if (!(p.intrinsics.fx > 0) || !(p.intrinsics.fy > 0))
      throw Error(Errc::SyntaxError, path + ": fx, fy must be > 0");
    p.rotation = normalize(p.rotation);
    traj.poses.push_back(p);
    ++expect;
  }
  if (traj.poses.empty()) throw Error(Errc::TruncatedFile, path + ": no frames");
  return traj;
}

}  // namespace lvp
