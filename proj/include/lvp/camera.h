// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0
//
// Camera trajectory generation: analytic parametric moves, keyframe
// interpolation, and the text trajectory format.

#pragma once

#include <string>
#include <vector>

#include "lvp/math.h"
#include "lvp/prompt.h"

namespace lvp {

struct CameraIntrinsics {
  double fx = 0;
  double fy = 0;
  double cx = 0;
  double cy = 0;
};

// Camera-to-world pose, right-handed, y-up; the camera looks along its -z.
struct CameraPose {
  Quat rotation;
  Vec3 translation{0, 0, 0};
  CameraIntrinsics intrinsics;
};

struct CameraTrajectory {
  std::vector<CameraPose> poses;
  int frame_count() const { return int(poses.size()); }
};

// fx = fy = 0.9 * width, principal point at the image center.
CameraIntrinsics default_intrinsics(int width, int height);

// Camera-to-world rotation looking from `pos` toward `target` with the
// world +y as up (falls back to +x/+z up when the view is vertical).
Quat look_at(const Vec3& pos, const Vec3& target, const Vec3& up = {0, 1, 0});

// Generates an F-frame trajectory for a parametric move around the scene
// bounds. Supported parameters (all optional, defaults derived from the
// scene radius R = max(half diagonal, 0.5) and center):
//   orbit:      span (deg, default 360), radius (default 2.5R), height (0)
//   dolly:      x0 y0 z0 x1 y1 z1 (default a straight pull-in along +z)
//   crane:      h0 h1 d0 d1 (heights and center distances, swept linearly)
//   dolly_zoom: d0 d1 (center distances; focal length scales with distance
//               so the projected scene height matches the center frame)
//   static:     x y z (default on the +z side looking at the center)
// Throws BadParameter for unknown parameter names, non-finite values,
// radius/d <= 0, or frames < 2.
CameraTrajectory plan_camera(const CameraClause& plan, const Aabb& scene_bounds,
                             int frames, int width, int height);

struct CameraKeyframe {
  double time = 0;  // in [0, 1]
  CameraPose pose;
};

// Interpolates >= 2 keyframes at strictly increasing times spanning [0, 1].
// Positions follow a centripetal Catmull-Rom spline (alpha = 0.5, one-sided
// endpoint tangents), orientations piecewise slerp on shortest arcs,
// intrinsics linear. Frame k samples time k/(F-1).
// Throws TooFewKeys, NonMonotoneTimes, or BadParameter (endpoint times).
CameraTrajectory interpolate_keyframes(const std::vector<CameraKeyframe>& keys,
                                       int frames);

// Text format, one line per frame: `k tx ty tz qw qx qy qz fx fy cx cy`.
// '#' lines are comments. Quaternions are renormalized on load.
void save_trajectory(const CameraTrajectory& traj, const std::string& path);
CameraTrajectory load_trajectory(const std::string& path);

}  // namespace lvp
