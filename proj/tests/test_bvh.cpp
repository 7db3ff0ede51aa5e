// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "lvp/bvh.h"
#include "lvp/error.h"
#include "lvp/rng.h"

using namespace lvp;

namespace {

Vec3 random_in_cube(Pcg32& rng, double half) {
  return Vec3{(rng.next_double() * 2.0 - 1.0) * half, (rng.next_double() * 2.0 - 1.0) * half,
              (rng.next_double() * 2.0 - 1.0) * half};
}

// Independently written Moller-Trumbore test, used as the oracle.
bool oracle_hit(const Vec3& orig, const Vec3& dir, const Vec3& a, const Vec3& b, const Vec3& c,
                double* t_out) {
  Vec3 e1 = b - a, e2 = c - a;
  Vec3 pv = cross(dir, e2);
  double det = dot(e1, pv);
  if (std::abs(det) < 1e-14) return false;
  Vec3 tv = orig - a;
  double u = dot(tv, pv) / det;
  if (u < 0.0 || u > 1.0) return false;
  Vec3 qv = cross(tv, e1);
  double v = dot(dir, qv) / det;
  if (v < 0.0 || u + v > 1.0) return false;
  double t = dot(e2, qv) / det;
  if (t <= 0.0) return false;
  *t_out = t;
  return true;
}

struct Soup {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
};

Soup random_soup(int count, uint64_t seed) {
  Soup soup;
  Pcg32 rng(seed);
  for (int i = 0; i < count; ++i) {
    Vec3 base = random_in_cube(rng, 1.0);
    int k = int(soup.vertices.size());
    soup.vertices.push_back(base);
    soup.vertices.push_back(base + random_in_cube(rng, 0.3));
    soup.vertices.push_back(base + random_in_cube(rng, 0.3));
    soup.triangles.push_back({k, k + 1, k + 2});
  }
  return soup;
}

}  // namespace

TEST_CASE("single triangle centroid hit with unit barycentric sum") {
  std::vector<Vec3> verts = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  Bvh bvh = build_bvh(verts, {{0, 1, 2}});
  Vec3 centroid{1.0 / 3.0, 1.0 / 3.0, 0.0};
  Ray ray{Vec3{1.0 / 3.0, 1.0 / 3.0, 5.0}, Vec3{0, 0, -1}};
  auto hit = intersect(bvh, ray);
  REQUIRE(hit.has_value());
  CHECK(hit->t == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(hit->triangle == 0);
  double b0 = 1.0 - hit->b1 - hit->b2;
  CHECK(std::abs(b0 + hit->b1 + hit->b2 - 1.0) < 1e-9);
  Vec3 recon = verts[0] * b0 + verts[1] * hit->b1 + verts[2] * hit->b2;
  CHECK(length(recon - centroid) < 1e-9);
}

TEST_CASE("ray parallel to and outside the plane misses") {
  Bvh bvh = build_bvh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
  Ray ray{Vec3{-1.0, 0.2, 0.5}, Vec3{1, 0, 0}};  // z = 0.5 plane offset
  CHECK(!intersect(bvh, ray).has_value());
  CHECK(!occluded(bvh, ray));
}

TEST_CASE("empty triangle list is rejected") {
  try {
    build_bvh({}, {});
    FAIL("expected EmptyScene");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyScene);
  }
}

TEST_CASE("brute force oracle agrees on 1000 random rays") {
  Soup soup = random_soup(500, 99);
  Bvh bvh = build_bvh(soup.vertices, soup.triangles);
  Pcg32 rng(7);
  int hits = 0;
  for (int i = 0; i < 1000; ++i) {
    Vec3 orig = random_in_cube(rng, 2.0);
    Vec3 dir = normalize(random_in_cube(rng, 1.0) - orig);
    int best = -1;
    double best_t = 1e30;
    for (size_t tri = 0; tri < soup.triangles.size(); ++tri) {
      const auto& idx = soup.triangles[tri];
      double t;
      if (oracle_hit(orig, dir, soup.vertices[size_t(idx[0])], soup.vertices[size_t(idx[1])],
                     soup.vertices[size_t(idx[2])], &t) &&
          t < best_t) {
        best_t = t;
        best = int(tri);
      }
    }
    auto hit = intersect(bvh, {orig, dir});
    if (best < 0) {
      CHECK(!hit.has_value());
    } else {
      REQUIRE(hit.has_value());
      CHECK(hit->triangle == best);
      CHECK(hit->t == doctest::Approx(best_t).epsilon(1e-9));
      CHECK(occluded(bvh, {orig, dir}));
    }
    if (best >= 0) ++hits;
  }
  CHECK(hits > 200);  // the ray set must actually exercise the tree
}

TEST_CASE("rays crossing a shared edge never slip through") {
  // Unit quad split along its diagonal; aim at points on the diagonal.
  std::vector<Vec3> verts = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
  Bvh bvh = build_bvh(verts, {{0, 1, 2}, {0, 2, 3}});
  Pcg32 rng(3);
  for (int i = 0; i < 10000; ++i) {
    double s = rng.next_double();
    Vec3 target{s, s, 0.0};  // on the shared edge (0,0)-(1,1)
    Vec3 orig = target + Vec3{rng.next_double() - 0.5, rng.next_double() - 0.5, 1.0 + rng.next_double()};
    Ray ray{orig, normalize(target - orig)};
    CHECK(intersect(bvh, ray).has_value());
  }
}

TEST_CASE("axis aligned ray with origin on a slab plane") {
  // Triangle in the z=0 plane, so its box is flat in z. Rays with zero
  // direction components must take the explicit slab branch, not 0 * inf.
  std::vector<Vec3> verts = {{0, 0, 0}, {2, 0, 0}, {1, 1, 0}};
  Bvh bvh = build_bvh(verts, {{0, 1, 2}});
  Ray in_plane{Vec3{-1, 0.5, 0}, Vec3{1, 0, 0}};  // in the triangle's plane
  CHECK(!intersect(bvh, in_plane).has_value());   // det == 0 counts as a miss
  Ray down{Vec3{1, 0.5, 5}, Vec3{0, 0, -1}};      // d.x == d.y == 0
  CHECK(intersect(bvh, down).has_value());
  Ray outside{Vec3{3, 0.5, 5}, Vec3{0, 0, -1}};   // origin outside the x slab
  CHECK(!intersect(bvh, outside).has_value());
}

TEST_CASE("tree structure: leaves partition triangles, boxes nest") {
  Soup soup = random_soup(137, 4);
  Bvh bvh = build_bvh(soup.vertices, soup.triangles);
  std::vector<int> seen(soup.triangles.size(), 0);
  for (const auto& node : bvh.nodes) {
    if (node.count > 0) {
      CHECK(node.count <= 4);
      for (int i = node.first; i < node.first + node.count; ++i)
        seen[size_t(bvh.order[size_t(i)])] += 1;
    } else {
      for (int child : {node.left, node.right}) {
        REQUIRE(child > 0);
        const Aabb& inner = bvh.nodes[size_t(child)].box;
        for (int a = 0; a < 3; ++a) {
          CHECK(node.box.lo[a] <= inner.lo[a] + 1e-12);
          CHECK(node.box.hi[a] >= inner.hi[a] - 1e-12);
        }
      }
    }
  }
  for (int count : seen) CHECK(count == 1);
}

TEST_CASE("tmin and tmax clip hits") {
  Bvh bvh = build_bvh({{-1, -1, 0}, {1, -1, 0}, {0, 1, 0}}, {{0, 1, 2}});
  Ray ray{Vec3{0, 0, 3}, Vec3{0, 0, -1}};
  CHECK(intersect(bvh, ray).has_value());
  ray.tmax = 2.5;
  CHECK(!intersect(bvh, ray).has_value());
  ray.tmax = 1e30;
  ray.tmin = 3.5;
  CHECK(!intersect(bvh, ray).has_value());
}

TEST_CASE("flatten_assembly applies scale, rotation and translation") {
  MeshAsset mesh;
  mesh.asset_id = "tri";
  mesh.vertices = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  mesh.triangles = {{0, 1, 2}};
  SceneAssembly assembly;
  SceneNode node;
  node.id = "tri_0";
  node.scale = 2.0;
  node.rotation = quat_from_axis_angle(Vec3{0, 0, 1}, kPi / 2.0);  // +x -> +y
  node.translation = Vec3{10, 0, 0};
  assembly.graph.nodes.push_back(node);
  assembly.meshes.push_back(mesh);
  TriangleSoup soup = flatten_assembly(assembly);
  REQUIRE(soup.vertices.size() == 3);
  REQUIRE(soup.triangles.size() == 1);
  CHECK(soup.node_index[0] == 0);
  CHECK(length(soup.vertices[0] - Vec3{10, 2, 0}) < 1e-12);
  CHECK(length(soup.vertices[2] - Vec3{10, 0, 2}) < 1e-12);
}

TEST_CASE("triangle_normal is unit length and perpendicular") {
  Soup soup = random_soup(25, 11);
  Bvh bvh = build_bvh(soup.vertices, soup.triangles);
  for (int i = 0; i < 25; ++i) {
    Vec3 n = triangle_normal(bvh, i);
    CHECK(std::abs(length(n) - 1.0) < 1e-12);
    const auto& idx = bvh.triangles[size_t(i)];
    Vec3 e1 = bvh.vertices[size_t(idx[1])] - bvh.vertices[size_t(idx[0])];
    CHECK(std::abs(dot(n, e1)) < 1e-9 * length(e1));
  }
}
