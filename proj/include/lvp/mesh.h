// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0
//
// Triangle mesh assets loaded from OBJ files (v/f records only).

#pragma once

#include <array>
#include <string>
#include <vector>

#include "lvp/math.h"

namespace lvp {

struct MeshAsset {
  std::string asset_id;
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::string> tags;
};

// Local-space bounding box over all vertices. Requires a non-empty mesh.
Aabb mesh_aabb(const MeshAsset& mesh);

// Parses an OBJ file keeping only `v` and `f` records. Faces with more than
// three vertices are fan-triangulated; `i/j/k` vertex references keep the
// part before the first slash; negative indices count from the end.
// Throws IoError for unreadable files and SyntaxError for malformed records,
// out-of-range indices, or meshes that violate MeshAsset invariants.
MeshAsset load_obj(const std::string& path);

// Writes vertices and triangles as v/f records (1-based indices).
void save_obj(const MeshAsset& mesh, const std::string& path);

}  // namespace lvp
