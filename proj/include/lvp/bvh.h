// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "lvp/math.h"
#include "lvp/scene_graph.h"

namespace lvp {

struct Ray {
  Vec3 origin;
  Vec3 dir;  // need not be unit length; hit.t is in units of dir
  double tmin = 0.0;
  double tmax = std::numeric_limits<double>::infinity();
};

struct TriHit {
  double t = 0.0;       // ray parameter of the hit
  int triangle = -1;    // index into the soup's triangle list
  double b1 = 0.0;      // barycentric of vertex 1; b0 = 1 - b1 - b2
  double b2 = 0.0;      // barycentric of vertex 2
};

// World-space triangle soup flattened from a scene assembly.
// node_index[i] records which scene node triangle i came from.
struct TriangleSoup {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<int> node_index;
};

// Applies each node's scale, rotation and translation to its mesh and
// concatenates the results. Assemblies with no nodes yield an empty soup.
TriangleSoup flatten_assembly(const SceneAssembly& assembly);

// Binary AABB tree. Interior nodes store child indices; leaves store a
// contiguous range of `order` (a permutation of triangle indices) with at
// most four triangles. Nodes are stored pre-order, root at index 0.
struct Bvh {
  struct Node {
    Aabb box;
    int left = -1;    // interior: child node indices
    int right = -1;
    int first = 0;    // leaf: range [first, first + count) in `order`
    int count = 0;    // 0 for interior nodes
  };

  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<int> order;
  std::vector<Node> nodes;

  bool empty() const { return triangles.empty(); }
};

// Median split along the longest axis of the node bounds, leaf size <= 4.
// Throws Error(EmptyScene) when the triangle list is empty.
Bvh build_bvh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> triangles);

// Nearest hit with t in (ray.tmin, ray.tmax), or nullopt. The ray-triangle
// test is watertight: rays crossing a shared edge or vertex hit at least one
// of the adjacent triangles.
std::optional<TriHit> intersect(const Bvh& bvh, const Ray& ray);

// True when any triangle intersects the ray; cheaper than `intersect`
// because traversal stops at the first hit.
bool occluded(const Bvh& bvh, const Ray& ray);

// Unit geometric normal of triangle `index`, oriented arbitrarily.
Vec3 triangle_normal(const Bvh& bvh, int index);

}  // namespace lvp
