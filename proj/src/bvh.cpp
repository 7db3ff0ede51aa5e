// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#include "lvp/bvh.h"

#include <algorithm>
#include <cmath>

#include "lvp/error.h"

namespace lvp {

TriangleSoup flatten_assembly(const SceneAssembly& assembly) {
  TriangleSoup soup;
  for (size_t n = 0; n < assembly.graph.nodes.size(); ++n) {
    const SceneNode& node = assembly.graph.nodes[n];
    const MeshAsset& mesh = assembly.meshes[n];
    int base = int(soup.vertices.size());
    for (const Vec3& v : mesh.vertices)
      soup.vertices.push_back(rotate(node.rotation, v * node.scale) + node.translation);
    for (const auto& tri : mesh.triangles) {
      soup.triangles.push_back({tri[0] + base, tri[1] + base, tri[2] + base});
      soup.node_index.push_back(int(n));
    }
  }
  return soup;
}

namespace {

Aabb triangle_bounds(const std::vector<Vec3>& vertices, const std::array<int, 3>& tri) {
  Aabb box;
  for (int k = 0; k < 3; ++k) box.expand(vertices[size_t(tri[k])]);
  return box;
}

struct Builder {
  const std::vector<Vec3>& vertices;
  const std::vector<std::array<int, 3>>& triangles;
  std::vector<Vec3> centroids;
  std::vector<int>& order;
  std::vector<Bvh::Node>& nodes;

  int build(int first, int count) {
    Aabb box;
    for (int i = first; i < first + count; ++i)
      box.expand(triangle_bounds(vertices, triangles[size_t(order[size_t(i)])]));
    int index = int(nodes.size());
    nodes.push_back({});
    nodes[size_t(index)].box = box;
    if (count <= 4) {
      nodes[size_t(index)].first = first;
      nodes[size_t(index)].count = count;
      return index;
    }
    Vec3 extent = box.extents();
    int axis = 0;
    if (extent.y > extent.x) axis = 1;
    if (extent.z > extent[axis]) axis = 2;
    int mid = first + count / 2;
    std::nth_element(order.begin() + first, order.begin() + mid,
                     order.begin() + first + count, [&](int a, int b) {
                       return centroids[size_t(a)][axis] < centroids[size_t(b)][axis];
                     });
    int left = build(first, mid - first);
    int right = build(mid, first + count - mid);
    nodes[size_t(index)].left = left;
    nodes[size_t(index)].right = right;
    return index;
  }
};

// Watertight ray-triangle intersection (shear + 2D edge functions). Edge
// functions for an edge shared by two triangles are exact negations of each
// other, so a crossing ray cannot slip between them.
struct RayFrame {
  Vec3 origin;
  int kx, ky, kz;
  double sx, sy, sz;
  double tmin, tmax;

  explicit RayFrame(const Ray& ray) : origin(ray.origin), tmin(ray.tmin), tmax(ray.tmax) {
    kz = 0;
    if (std::abs(ray.dir.y) > std::abs(ray.dir[kz])) kz = 1;
    if (std::abs(ray.dir.z) > std::abs(ray.dir[kz])) kz = 2;
    kx = (kz + 1) % 3;
    ky = (kx + 1) % 3;
    if (ray.dir[kz] < 0.0) std::swap(kx, ky);
    sx = ray.dir[kx] / ray.dir[kz];
    sy = ray.dir[ky] / ray.dir[kz];
    sz = 1.0 / ray.dir[kz];
  }

  bool hit_triangle(const Vec3& a, const Vec3& b, const Vec3& c, double* t, double* b1,
                    double* b2) const {
    Vec3 pa = a - origin, pb = b - origin, pc = c - origin;
    double ax = pa[kx] - sx * pa[kz], ay = pa[ky] - sy * pa[kz];
    double bx = pb[kx] - sx * pb[kz], by = pb[ky] - sy * pb[kz];
    double cx = pc[kx] - sx * pc[kz], cy = pc[ky] - sy * pc[kz];
    double u = cx * by - cy * bx;
    double v = ax * cy - ay * cx;
    double w = bx * ay - by * ax;
    if ((u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0)) return false;
    double det = u + v + w;
    if (det == 0.0) return false;
    double az = sz * pa[kz], bz = sz * pb[kz], cz = sz * pc[kz];
    double tt = (u * az + v * bz + w * cz) / det;
    if (!(tt > tmin && tt < tmax)) return false;
    *t = tt;
    *b1 = v / det;
    *b2 = w / det;
    return true;
  }
};

// Slab test against [tmin, hit_t]. Zero direction components are handled
// explicitly to avoid 0 * inf when the origin lies on a slab plane.
bool hit_box(const Aabb& box, const Ray& ray, const Vec3& inv_dir, double hit_t) {
  double t0 = ray.tmin, t1 = hit_t;
  for (int i = 0; i < 3; ++i) {
    if (ray.dir[i] == 0.0) {
      if (ray.origin[i] < box.lo[i] || ray.origin[i] > box.hi[i]) return false;
      continue;
    }
    double ta = (box.lo[i] - ray.origin[i]) * inv_dir[i];
    double tb = (box.hi[i] - ray.origin[i]) * inv_dir[i];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace

Bvh build_bvh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> triangles) {
  if (triangles.empty()) throw Error(Errc::EmptyScene, "cannot build a BVH over zero triangles");
  Bvh bvh;
  bvh.vertices = std::move(vertices);
  bvh.triangles = std::move(triangles);
  bvh.order.resize(bvh.triangles.size());
  for (size_t i = 0; i < bvh.order.size(); ++i) bvh.order[i] = int(i);
  Builder builder{bvh.vertices, bvh.triangles, {}, bvh.order, bvh.nodes};
  builder.centroids.reserve(bvh.triangles.size());
  for (const auto& tri : bvh.triangles)
    builder.centroids.push_back((bvh.vertices[size_t(tri[0])] + bvh.vertices[size_t(tri[1])] +
                                 bvh.vertices[size_t(tri[2])]) /
                                3.0);
  bvh.nodes.reserve(2 * bvh.triangles.size());
  builder.build(0, int(bvh.triangles.size()));
  return bvh;
}

namespace {

template <bool AnyHit>
bool traverse(const Bvh& bvh, const Ray& ray, TriHit* nearest) {
  if (bvh.empty()) return false;
  RayFrame frame(ray);
  Vec3 inv_dir{1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z};
  double hit_t = ray.tmax;
  bool found = false;
  int stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Bvh::Node& node = bvh.nodes[size_t(stack[--top])];
    if (!hit_box(node.box, ray, inv_dir, hit_t)) continue;
    if (node.count > 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        int tri = bvh.order[size_t(i)];
        const auto& idx = bvh.triangles[size_t(tri)];
        double t, b1, b2;
        RayFrame local = frame;
        local.tmax = hit_t;
        if (local.hit_triangle(bvh.vertices[size_t(idx[0])], bvh.vertices[size_t(idx[1])],
                               bvh.vertices[size_t(idx[2])], &t, &b1, &b2)) {
          if constexpr (AnyHit) return true;
          hit_t = t;
          nearest->t = t;
          nearest->triangle = tri;
          nearest->b1 = b1;
          nearest->b2 = b2;
          found = true;
        }
      }
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return found;
}

}  // namespace

std::optional<TriHit> intersect(const Bvh& bvh, const Ray& ray) {
  TriHit hit;
  if (!traverse<false>(bvh, ray, &hit)) return std::nullopt;
  return hit;
}

bool occluded(const Bvh& bvh, const Ray& ray) { return traverse<true>(bvh, ray, nullptr); }

Vec3 triangle_normal(const Bvh& bvh, int index) {
  const auto& tri = bvh.triangles[size_t(index)];
  const Vec3& a = bvh.vertices[size_t(tri[0])];
  return normalize(cross(bvh.vertices[size_t(tri[1])] - a, bvh.vertices[size_t(tri[2])] - a));
}

}  // namespace lvp
