// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0
//
// Pose optimization for scene graphs: penalty energy over node translations
// plus a derivative-free random-restart coordinate-descent solver.

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "lvp/math.h"
#include "lvp/scene_graph.h"

namespace lvp {

// Penalty energy at the given translations. Boxes are the scaled local-space
// AABBs, so world box i = local_boxes[i] + translations[i]. Terms, with
// c = world AABB center and h = half extents:
//   left_of/right_of/behind/in_front_of: hinge² on the signed gap along
//     ±x/±z, gap = sign·(c_j − c_i)·axis − (h_i + h_j)·axis (+x is right,
//     +z is toward the default camera, so in_front_of means larger z).
//   on_top_of: (min_y(i) − max_y(j))² plus hinge² on the horizontal center
//     distance beyond min(h_j.x, h_j.z) (stay over the support).
//   next_to: hinge² on horizontal center distance outside [0.8, 1.5]·s,
//     s = (h_i.x + h_i.z + h_j.x + h_j.z) / 2.
//   non-overlap: squared AABB penetration depth for every unrelated pair.
double layout_energy(const SceneGraph& graph,
                     const std::vector<Aabb>& local_boxes,
                     const std::vector<Vec3>& translations);

// Scaled local-space AABBs, one per node.
std::vector<Aabb> scaled_local_boxes(const SceneGraph& graph,
                                     const std::vector<MeshAsset>& meshes);

// Minimizes layout_energy over node translations with node 0 anchored at
// the origin. 8 restarts (restart 0 starts at zero, the rest are seeded
// uniform in [-2, 2]³); each restart runs coordinate descent with a
// golden-section line search per axis over [c − 4, c + 4], at most 200
// sweeps, stopping when a sweep improves the energy by < 1e-9. Deterministic
// in (graph, meshes, seed). If `trace` is non-null, every accepted energy is
// appended as (restart, energy); within a restart the energies never rise.
SceneAssembly solve_layout(const SceneGraph& graph,
                           const std::vector<MeshAsset>& meshes,
                           uint64_t seed,
                           std::vector<std::pair<int, double>>* trace = nullptr);

}  // namespace lvp
