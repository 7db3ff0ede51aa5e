// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#include "lvp/scene_graph.h"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "lvp/error.h"

namespace lvp {

using nlohmann::json;

AssetLibrary load_asset_library(const std::string& dir) {
  std::string path = dir + "/index.json";
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::SyntaxError, path + ": " + e.what());
  }
  if (!doc.is_object()) throw Error(Errc::SyntaxError, path + ": expected object");
  AssetLibrary lib;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    AssetEntry entry;
    entry.file = it.value().at("file").get<std::string>();
    for (const auto& t : it.value().at("tags"))
      entry.tags.push_back(t.get<std::string>());
    lib[it.key()] = entry;
  }
  return lib;
}

void save_asset_library(const AssetLibrary& lib, const std::string& dir) {
  json doc = json::object();
  for (const auto& [id, entry] : lib)
    doc[id] = {{"file", entry.file}, {"tags", entry.tags}};
  std::string path = dir + "/index.json";
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot open " + path + " for writing");
  out << doc.dump(2) << '\n';
}

RetrievalResult retrieve_asset(const std::vector<std::string>& node_tags,
                               const AssetLibrary& library) {
  if (library.empty()) throw Error(Errc::EmptyLibrary, "asset library is empty");
  std::set<std::string> wanted(node_tags.begin(), node_tags.end());
  RetrievalResult best;
  int best_score = -1;
  for (const auto& [id, entry] : library) {
    std::set<std::string> entry_tags(entry.tags.begin(), entry.tags.end());
    int score = 0;
    for (const auto& t : entry_tags) score += wanted.count(t) ? 1 : 0;
    // Map iteration is id-ascending, so strict > keeps the smallest id on ties.
    if (score > best_score) {
      best_score = score;
      best = {id, score};
    }
  }
  return best;
}

SceneGraph build_scene_graph(const PromptAst& ast) {
  SceneGraph graph;
  for (size_t i = 0; i < ast.object_clauses.size(); ++i) {
    const ObjectClause& obj = ast.object_clauses[i];
    SceneNode node;
    node.id = obj.category + "_" + std::to_string(i);
    node.category = obj.category;
    node.tags.push_back(obj.category);
    for (const auto& adj : obj.adjectives) node.tags.push_back(adj);
    if (obj.material) node.tags.push_back(*obj.material);
    graph.nodes.push_back(std::move(node));
  }
  for (const RelationClause& rel : ast.relation_clauses)
    graph.edges.push_back({rel.subject_index, rel.object_index, rel.relation});
  return graph;
}

namespace {

double size_multiplier(const std::vector<std::string>& tags) {
  double m = 1.0;
  for (const auto& t : tags) {
    if (t == "tiny") m = 0.25;
    else if (t == "small") m = 0.5;
    else if (t == "large") m = 2.0;
    else if (t == "huge") m = 3.0;
  }
  return m;
}

}  // namespace

std::vector<MeshAsset> resolve_assets(SceneGraph& graph,
                                      const AssetLibrary& library,
                                      const std::string& asset_dir) {
  std::vector<MeshAsset> meshes;
  meshes.reserve(graph.nodes.size());
  for (SceneNode& node : graph.nodes) {
    RetrievalResult pick = retrieve_asset(node.tags, library);
    node.asset_id = pick.asset_id;
    MeshAsset mesh = load_obj(asset_dir + "/" + library.at(pick.asset_id).file);
    mesh.asset_id = pick.asset_id;
    mesh.tags = library.at(pick.asset_id).tags;
    Aabb box = mesh_aabb(mesh);
    double largest = box.max_extent();
    if (!(largest > 0))
      throw Error(Errc::SyntaxError, pick.asset_id + ": degenerate mesh extent");
    node.scale = size_multiplier(node.tags) / largest;
    meshes.push_back(std::move(mesh));
  }
  return meshes;
}

Aabb node_world_aabb(const SceneNode& node, const MeshAsset& mesh) {
  Aabb local = mesh_aabb(mesh);
  Aabb world;
  world.lo = local.lo * node.scale + node.translation;
  world.hi = local.hi * node.scale + node.translation;
  return world;
}

Aabb assembly_aabb(const SceneAssembly& assembly) {
  Aabb box;
  for (size_t i = 0; i < assembly.graph.nodes.size(); ++i)
    box.expand(node_world_aabb(assembly.graph.nodes[i], assembly.meshes[i]));
  return box;
}

void save_scene_json(const SceneAssembly& assembly, const std::string& path) {
  json nodes = json::array();
  for (const SceneNode& n : assembly.graph.nodes) {
    nodes.push_back({{"id", n.id},
                     {"category", n.category},
                     {"tags", n.tags},
                     {"asset_id", n.asset_id},
                     {"quaternion", {n.rotation.w, n.rotation.x, n.rotation.y, n.rotation.z}},
                     {"translation", {n.translation.x, n.translation.y, n.translation.z}},
                     {"scale", n.scale}});
  }
  json edges = json::array();
  for (const SceneEdge& e : assembly.graph.edges)
    edges.push_back({{"i", e.i}, {"j", e.j}, {"relation", to_string(e.relation)}});
  json doc = {{"nodes", nodes},
              {"edges", edges},
              {"residual_energy", assembly.residual_energy}};
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot open " + path + " for writing");
  out << doc.dump(2) << '\n';
}

SceneDescription load_scene_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::SyntaxError, path + ": " + e.what());
  }
  SceneDescription desc;
  try {
    for (const auto& jn : doc.at("nodes")) {
      SceneNode n;
      n.id = jn.at("id").get<std::string>();
      n.category = jn.at("category").get<std::string>();
      if (jn.contains("tags"))
        for (const auto& t : jn.at("tags")) n.tags.push_back(t.get<std::string>());
      n.asset_id = jn.at("asset_id").get<std::string>();
      const auto& q = jn.at("quaternion");
      n.rotation = {q.at(0).get<double>(), q.at(1).get<double>(),
                    q.at(2).get<double>(), q.at(3).get<double>()};
      const auto& t = jn.at("translation");
      n.translation = {t.at(0).get<double>(), t.at(1).get<double>(),
                       t.at(2).get<double>()};
      n.scale = jn.at("scale").get<double>();
      if (n.scale <= 0) throw Error(Errc::SyntaxError, path + ": scale must be > 0");
      desc.graph.nodes.push_back(std::move(n));
    }
    for (const auto& je : doc.at("edges")) {
      SceneEdge e;
      e.i = je.at("i").get<int>();
      e.j = je.at("j").get<int>();
      auto rel = relation_from_token(je.at("relation").get<std::string>());
      if (!rel) throw Error(Errc::UnknownRelation,
                            path + ": " + je.at("relation").get<std::string>());
      e.relation = *rel;
      int n = int(desc.graph.nodes.size());
      if (e.i < 0 || e.i >= n || e.j < 0 || e.j >= n || e.i == e.j)
        throw Error(Errc::SyntaxError, path + ": bad edge endpoints");
      desc.graph.edges.push_back(e);
    }
    desc.residual_energy = doc.at("residual_energy").get<double>();
  } catch (const json::exception& e) {
    throw Error(Errc::SyntaxError, path + ": " + e.what());
  }
  return desc;
}

}  // namespace lvp
