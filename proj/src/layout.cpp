// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#include "lvp/layout.h"

#include <algorithm>
#include <cmath>

#include "lvp/error.h"
#include "lvp/rng.h"

namespace lvp {

namespace {

inline double sq(double x) { return x * x; }
inline double hinge_sq(double violation) { return violation > 0 ? violation * violation : 0.0; }

struct BoxView {
  Vec3 center;
  Vec3 half;
  double min_y;
  double max_y;
};

BoxView world_box(const Aabb& local, const Vec3& t) {
  BoxView b;
  Vec3 c = local.center() + t;
  Vec3 h = local.half_extents();
  b.center = c;
  b.half = h;
  b.min_y = c.y - h.y;
  b.max_y = c.y + h.y;
  return b;
}

double relation_penalty(RelationKind rel, const BoxView& a, const BoxView& b) {
  switch (rel) {
    case RelationKind::left_of: {
      double gap = (b.center.x - a.center.x) - (a.half.x + b.half.x);
      return hinge_sq(-gap);
    }
    case RelationKind::right_of: {
      double gap = (a.center.x - b.center.x) - (a.half.x + b.half.x);
      return hinge_sq(-gap);
    }
    case RelationKind::behind: {
      double gap = (b.center.z - a.center.z) - (a.half.z + b.half.z);
      return hinge_sq(-gap);
    }
    case RelationKind::in_front_of: {
      double gap = (a.center.z - b.center.z) - (a.half.z + b.half.z);
      return hinge_sq(-gap);
    }
    case RelationKind::on_top_of: {
      double lift = a.min_y - b.max_y;
      double dh = std::hypot(a.center.x - b.center.x, a.center.z - b.center.z);
      double reach = std::min(b.half.x, b.half.z);
      return sq(lift) + hinge_sq(dh - reach);
    }
    case RelationKind::next_to: {
      double dh = std::hypot(a.center.x - b.center.x, a.center.z - b.center.z);
      double s = (a.half.x + a.half.z + b.half.x + b.half.z) / 2.0;
      return hinge_sq(0.8 * s - dh) + hinge_sq(dh - 1.5 * s);
    }
  }
  return 0.0;
}

double overlap_penalty(const BoxView& a, const BoxView& b) {
  double ox = (a.half.x + b.half.x) - std::abs(a.center.x - b.center.x);
  double oy = (a.half.y + b.half.y) - std::abs(a.center.y - b.center.y);
  double oz = (a.half.z + b.half.z) - std::abs(a.center.z - b.center.z);
  if (ox <= 0 || oy <= 0 || oz <= 0) return 0.0;
  return sq(std::min({ox, oy, oz}));
}

}  // namespace

std::vector<Aabb> scaled_local_boxes(const SceneGraph& graph,
                                     const std::vector<MeshAsset>& meshes) {
  if (graph.nodes.size() != meshes.size())
    throw Error(Errc::LengthMismatch, "one mesh per node required");
  std::vector<Aabb> boxes(graph.nodes.size());
  for (size_t i = 0; i < graph.nodes.size(); ++i) {
    Aabb local = mesh_aabb(meshes[i]);
    boxes[i].lo = local.lo * graph.nodes[i].scale;
    boxes[i].hi = local.hi * graph.nodes[i].scale;
  }
  return boxes;
}

double layout_energy(const SceneGraph& graph,
                     const std::vector<Aabb>& local_boxes,
                     const std::vector<Vec3>& translations) {
  size_t n = graph.nodes.size();
  std::vector<BoxView> boxes(n);
  for (size_t i = 0; i < n; ++i)
    boxes[i] = world_box(local_boxes[i], translations[i]);

  // Pairs connected by any edge (either direction) skip the overlap term.
  std::vector<std::vector<bool>> related(n, std::vector<bool>(n, false));
  double energy = 0.0;
  for (const SceneEdge& e : graph.edges) {
    related[e.i][e.j] = related[e.j][e.i] = true;
    energy += relation_penalty(e.relation, boxes[e.i], boxes[e.j]);
  }
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j)
      if (!related[i][j]) energy += overlap_penalty(boxes[i], boxes[j]);
  return energy;
}

namespace {

// Golden-section search for the minimizer of f over [lo, hi].
template <typename F>
double golden_min(F&& f, double lo, double hi) {
  constexpr double inv_phi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - (b - a) * inv_phi;
  double d = a + (b - a) * inv_phi;
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 90; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - (b - a) * inv_phi;
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + (b - a) * inv_phi;
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

SceneAssembly solve_layout(const SceneGraph& graph,
                           const std::vector<MeshAsset>& meshes,
                           uint64_t seed,
                           std::vector<std::pair<int, double>>* trace) {
  size_t n = graph.nodes.size();
  std::vector<Aabb> boxes = scaled_local_boxes(graph, meshes);

  constexpr int kRestarts = 8;
  constexpr int kMaxSweeps = 200;
  constexpr double kConvergence = 1e-9;
  constexpr double kBracket = 4.0;

  std::vector<Vec3> best_t(n, Vec3{0, 0, 0});
  double best_e = layout_energy(graph, boxes, best_t);
  if (trace) trace->push_back({0, best_e});

  for (int restart = 0; restart < kRestarts; ++restart) {
    std::vector<Vec3> t(n, Vec3{0, 0, 0});
    if (restart > 0) {
      Pcg32 rng(seed, uint64_t(restart));
      for (size_t i = 1; i < n; ++i)
        t[i] = {rng.next_double() * 4.0 - 2.0, rng.next_double() * 4.0 - 2.0,
                rng.next_double() * 4.0 - 2.0};
    }
    double energy = layout_energy(graph, boxes, t);
    if (trace) trace->push_back({restart, energy});

    for (int sweep = 0; sweep < kMaxSweeps && energy > 0; ++sweep) {
      double sweep_start = energy;
      // Node 0 stays anchored at the origin to fix the translation gauge.
      for (size_t i = 1; i < n; ++i) {
        for (int axis = 0; axis < 3; ++axis) {
          double* coord = axis == 0 ? &t[i].x : axis == 1 ? &t[i].y : &t[i].z;
          double cur = *coord;
          auto slice = [&](double v) {
            *coord = v;
            return layout_energy(graph, boxes, t);
          };
          double cand = golden_min(slice, cur - kBracket, cur + kBracket);
          *coord = cand;
          double cand_e = layout_energy(graph, boxes, t);
          if (cand_e < energy) {
            energy = cand_e;
            if (trace) trace->push_back({restart, energy});
          } else {
            *coord = cur;
          }
        }
      }
      if (sweep_start - energy < kConvergence) break;
    }

    if (energy < best_e) {
      best_e = energy;
      best_t = t;
    }
  }

  SceneAssembly assembly;
  assembly.graph = graph;
  assembly.meshes = meshes;
  for (size_t i = 0; i < n; ++i) assembly.graph.nodes[i].translation = best_t[i];
  assembly.residual_energy = best_e;
  return assembly;
}

}  // namespace lvp
