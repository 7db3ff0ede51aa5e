// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0
//
// Control-fidelity metrics: Sim(3)-aligned trajectory errors, lighting
// SI-MSE and instability, and layout mIoU. All functions are pure.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "lvp/camera.h"
#include "lvp/envmap.h"
#include "lvp/image.h"
#include "lvp/math.h"

namespace lvp {

// p -> scale * (rotation p) + translation, scale > 0.
struct Sim3Transform {
  double scale = 1.0;
  Quat rotation;
  Vec3 translation{0, 0, 0};
};

inline Vec3 apply(const Sim3Transform& T, Vec3 p) {
  return T.scale * rotate(T.rotation, p) + T.translation;
}

// Closed-form least-squares similarity aligning pred onto gt: the minimizer
// of sum ||s R p_i + t - g_i||^2, with the determinant-sign correction that
// keeps R a proper rotation. Throws LengthMismatch, TooFewPoints (< 3), or
// DegenerateConfiguration (either cloud has zero variance, or the clouds
// are exactly uncorrelated so no positive scale exists).
Sim3Transform umeyama_sim3(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt);

// 100 x RMSE of camera-center residuals after umeyama_sim3 alignment.
// Throws LengthMismatch; propagates umeyama_sim3 errors.
double compute_ate(const CameraTrajectory& pred, const CameraTrajectory& gt);

struct RpeResult {
  double rpe_t = 0;  // x100 units
  double rpe_r = 0;  // degrees
};

// Per-step relative-pose errors E_i = (G_i^-1 G_{i+step})^-1 (P_i^-1
// P_{i+step}); rpe_t is 100 x the mean translation norm of E_i, rpe_r the
// mean rotation angle in degrees. Pred translations are scale-corrected by
// the Umeyama s first, so rpe_t is in gt metric units. Throws BadParameter
// (step < 1) and LengthMismatch (unequal counts, or fewer than step + 1
// frames).
RpeResult compute_rpe(const CameraTrajectory& pred, const CameraTrajectory& gt, int step = 1);

struct TrajectoryMetrics {
  double ate = 0;    // x100 units
  double rpe_t = 0;  // x100 units
  double rpe_r = 0;  // degrees
};

TrajectoryMetrics trajectory_metrics(const CameraTrajectory& pred, const CameraTrajectory& gt,
                                     int step = 1);

// Scale-invariant MSE between two env maps: min over s >= 0 of the
// solid-angle-weighted mean of (s p - g)^2, weights proportional to
// sin(theta_row), closed-form s* = sum(w p g) / sum(w p^2) clamped at 0.
// Throws DimensionMismatch.
double si_mse(const EnvMap& pred, const EnvMap& gt);

// Population standard deviation of per-frame SI-MSE values.
// Throws TooFewFrames (< 2).
double lighting_instability(const std::vector<double>& per_frame_si_mse);

struct LightingEval {
  std::vector<double> per_frame;  // SI-MSE per frame
  double error = 0;        // mean over frames
  double instability = 0;  // population sigma; 0 for a single frame
};

// Per-frame SI-MSE over a sequence. With per_sequence_scale a single s* is
// fit across all frames jointly before the per-frame residuals are taken;
// the default refits s* per frame. Throws LengthMismatch (unequal counts),
// TooFewFrames (empty), DimensionMismatch (frame size mismatch).
LightingEval evaluate_lighting(const std::vector<EnvMap>& pred, const std::vector<EnvMap>& gt,
                               bool per_sequence_scale = false);

// Object-ID grids, 0 = background; IDs are consistent across frames.
using MaskSequence = std::vector<ImageU16>;

// Mean IoU over every (frame, object-ID) pair present in gt. Pairs are
// weighted equally regardless of object size. Two all-background sequences
// have no pairs and score 1. Throws DimensionMismatch (count or size
// mismatch, or empty sequences).
double compute_miou(const MaskSequence& pred, const MaskSequence& gt);

// Frame files named frame_%05d starting at 0; loading stops at the first
// missing index. Masks are 16-bit grayscale PNGs; env frames are .lenv
// (preferred) or .hdr. Throws IoError when index 0 is missing.
MaskSequence load_mask_sequence(const std::string& dir);
std::vector<EnvMap> load_env_sequence(const std::string& dir);

// {"ate": ..., ...} with stable key order; values as JSON numbers.
void save_metrics_json(const std::map<std::string, double>& metrics, const std::string& path);

// Header row then one line per entry, %.17g cells. Throws BadParameter when
// a row width disagrees with the column count.
void save_per_frame_csv(const std::string& path, const std::vector<std::string>& columns,
                        const std::vector<std::vector<double>>& rows);

}  // namespace lvp
