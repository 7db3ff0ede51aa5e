// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0
//
// Scene-graph data model, asset retrieval from a tagged library, and
// serialization of assembled scenes.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "lvp/math.h"
#include "lvp/mesh.h"
#include "lvp/prompt.h"

namespace lvp {

struct SceneNode {
  std::string id;
  std::string category;
  std::vector<std::string> tags;
  std::string asset_id;
  Quat rotation;                 // unit, identity unless set by a tool
  Vec3 translation{0, 0, 0};     // meters
  double scale = 1.0;            // uniform, > 0
};

struct SceneEdge {
  int i = 0;
  int j = 0;
  RelationKind relation = RelationKind::next_to;
};

struct SceneGraph {
  std::vector<SceneNode> nodes;
  std::vector<SceneEdge> edges;
};

struct SceneAssembly {
  SceneGraph graph;
  std::vector<MeshAsset> meshes;  // one per node, same order
  double residual_energy = 0.0;
};

struct AssetEntry {
  std::string file;
  std::vector<std::string> tags;
};

// Catalog keyed by asset_id; the map order gives lexicographic tie-breaks.
using AssetLibrary = std::map<std::string, AssetEntry>;

struct RetrievalResult {
  std::string asset_id;
  int score = 0;  // |library tags ∩ node tags|; 0 flags a blind fallback
};

// Reads `<dir>/index.json` mapping asset_id -> {file, tags[]}.
AssetLibrary load_asset_library(const std::string& dir);
void save_asset_library(const AssetLibrary& lib, const std::string& dir);

// Picks the entry maximizing tag overlap with node_tags; ties and the
// zero-overlap case resolve to the lexicographically smallest asset_id.
// Throws EmptyLibrary when the catalog has no entries.
RetrievalResult retrieve_asset(const std::vector<std::string>& node_tags,
                               const AssetLibrary& library);

// Builds nodes and edges from a parsed prompt. Node ids are
// "<category>_<index>"; tags collect category, adjectives, and material.
// Assets are left unresolved (empty asset_id, scale 1).
SceneGraph build_scene_graph(const PromptAst& ast);

// Resolves every node against the library: sets asset_id, loads the mesh
// from `asset_dir`, and sets node scale so the largest AABB extent is 1 m
// times the size-tag multiplier (tiny 0.25, small 0.5, large 2.0, huge 3.0).
// Returns the per-node meshes in node order.
std::vector<MeshAsset> resolve_assets(SceneGraph& graph,
                                      const AssetLibrary& library,
                                      const std::string& asset_dir);

// World-space AABB of a node given its mesh (identity-rotation poses).
Aabb node_world_aabb(const SceneNode& node, const MeshAsset& mesh);

// Union of all node AABBs.
Aabb assembly_aabb(const SceneAssembly& assembly);

// scene.json round-trip: nodes (id, category, asset_id, quaternion wxyz,
// translation xyz, scale), edges, residual_energy. Meshes are not embedded;
// reload them from the asset library via asset_id.
void save_scene_json(const SceneAssembly& assembly, const std::string& path);
struct SceneDescription {
  SceneGraph graph;
  double residual_energy = 0.0;
};
SceneDescription load_scene_json(const std::string& path);

}  // namespace lvp
