// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#include "lvp/mesh.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "lvp/error.h"

namespace lvp {

Aabb mesh_aabb(const MeshAsset& mesh) {
  Aabb box;
  for (const Vec3& v : mesh.vertices) box.expand(v);
  return box;
}

namespace {

// OBJ indices are 1-based; negative values count back from the current
// vertex count. Returns a 0-based index.
int resolve_obj_index(long raw, size_t vertex_count, const std::string& path) {
  long idx = raw > 0 ? raw - 1 : long(vertex_count) + raw;
  if (idx < 0 || idx >= long(vertex_count))
    throw Error(Errc::SyntaxError,
                path + ": face index " + std::to_string(raw) + " out of range");
  return int(idx);
}

}  // namespace

MeshAsset load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);

  MeshAsset mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z))
        throw Error(Errc::SyntaxError, path + ": malformed vertex: " + line);
      mesh.vertices.push_back({x, y, z});
    } else if (tag == "f") {
      std::vector<int> face;
      std::string ref;
      while (ls >> ref) {
        // Keep the vertex index before any '/': "5/2/3" -> 5.
        size_t slash = ref.find('/');
        std::string head = slash == std::string::npos ? ref : ref.substr(0, slash);
        char* end = nullptr;
        long raw = std::strtol(head.c_str(), &end, 10);
        if (end == head.c_str() || *end != '\0' || raw == 0)
          throw Error(Errc::SyntaxError, path + ": malformed face ref: " + ref);
        face.push_back(resolve_obj_index(raw, mesh.vertices.size(), path));
      }
      if (face.size() < 3)
        throw Error(Errc::SyntaxError, path + ": face with fewer than 3 vertices");
      for (size_t k = 2; k < face.size(); ++k)
        mesh.triangles.push_back({face[0], face[k - 1], face[k]});
    }
    // All other record types (vn, vt, usemtl, ...) are ignored.
  }

  if (mesh.triangles.empty())
    throw Error(Errc::SyntaxError, path + ": no triangles");
  Aabb box = mesh_aabb(mesh);
  if (!is_finite(box.lo) || !is_finite(box.hi))
    throw Error(Errc::SyntaxError, path + ": non-finite vertex data");
  return mesh;
}

void save_obj(const MeshAsset& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot open " + path + " for writing");
  char buf[128];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
    out << buf;
  }
  for (const auto& t : mesh.triangles)
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw Error(Errc::IoError, "write failed: " + path);
}

}  // namespace lvp
