// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#include "lvp/pipeline.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "lvp/layout.h"
#include "lvp/rng.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace lvp {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Adds a "stage <name>: " prefix while preserving the error type, so prompt
// byte offsets survive to the caller.
template <typename F>
auto stage(const char* name, F&& body) {
  try {
    return body();
  } catch (const ParseError& e) {
    throw ParseError(e.code(), std::string("stage ") + name + ": " + e.what(),
                     e.offset(), e.token(), e.expected());
  } catch (const Error& e) {
    throw Error(e.code(), std::string("stage ") + name + ": " + e.what());
  }
}

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

json settings_to_json(const PipelineSettings& s) {
  json doc = {{"height", s.height},
              {"width", s.width},
              {"frames", s.frames},
              {"rotation_total_deg", s.rotation_total_deg},
              {"threads", s.threads},
              {"seed", s.seed},
              {"spp_diffuse", s.render.spp_diffuse},
              {"spp_glossy", s.render.spp_glossy},
              {"roughness_rough", s.render.roughness_rough},
              {"roughness_glossy", s.render.roughness_glossy}};
  // JSON has no infinity; an absent key on load restores the default.
  if (std::isfinite(s.render.max_shadow_distance))
    doc["max_shadow_distance"] = s.render.max_shadow_distance;
  return doc;
}

PipelineSettings settings_from_json(const json& doc, const std::string& where) {
  PipelineSettings s;
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "height") s.height = value.get<int>();
      else if (key == "width") s.width = value.get<int>();
      else if (key == "frames") s.frames = value.get<int>();
      else if (key == "rotation_total_deg") s.rotation_total_deg = value.get<double>();
      else if (key == "threads") s.threads = value.get<int>();
      else if (key == "seed") s.seed = value.get<uint64_t>();
      else if (key == "spp_diffuse") s.render.spp_diffuse = value.get<int>();
      else if (key == "spp_glossy") s.render.spp_glossy = value.get<int>();
      else if (key == "roughness_rough") s.render.roughness_rough = value.get<double>();
      else if (key == "roughness_glossy") s.render.roughness_glossy = value.get<double>();
      else if (key == "max_shadow_distance")
        s.render.max_shadow_distance = value.get<double>();
      else throw Error(Errc::BadParameter, where + ": unknown setting \"" + key + "\"");
    } catch (const json::exception& e) {
      throw Error(Errc::SyntaxError, where + ": " + key + ": " + e.what());
    }
  }
  if (s.height <= 0 || s.width <= 0)
    throw Error(Errc::BadParameter, where + ": resolution must be positive");
  if (s.threads < 1) throw Error(Errc::BadParameter, where + ": threads must be >= 1");
  s.render.seed = s.seed;
  return s;
}

bool ends_with(const std::string& text, const std::string& suffix) {
  return text.size() >= suffix.size() &&
         text.compare(text.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string frame_file(int frame, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05d%s", frame, ext);
  return buf;
}

}  // namespace

Library open_library(const std::string& dir) {
  return {load_asset_library(dir), dir};
}

EnvCatalog open_env_catalog(const std::string& index_path) {
  EnvCatalog cat;
  cat.entries = load_env_index(index_path);
  cat.dir = fs::path(index_path).parent_path().string();
  if (cat.dir.empty()) cat.dir = ".";
  cat.index_file = index_path;
  return cat;
}

EnvMap load_env_by_id(const EnvCatalog& envs, const std::string& env_id) {
  for (const EnvIndexEntry& entry : envs.entries)
    if (entry.env_id == env_id) return load_envmap(envs.dir + "/" + entry.file);
  throw Error(Errc::BadParameter, "unknown env_id \"" + env_id + "\"");
}

PipelineSettings load_settings(const std::string& path) {
  std::string text = read_file(path);
  if (ends_with(path, ".json")) {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      throw Error(Errc::SyntaxError, path + ": " + e.what());
    }
    if (!doc.is_object()) throw Error(Errc::SyntaxError, path + ": expected an object");
    return settings_from_json(doc, path);
  }
  // TOML subset: one flat `key = value` per line, values in JSON scalar
  // syntax, `#` starts a comment.
  json doc = json::object();
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    size_t eq = line.find('=');
    std::string where = path + ":" + std::to_string(lineno);
    if (eq == std::string::npos)
      throw Error(Errc::SyntaxError, where + ": expected key = value");
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw Error(Errc::SyntaxError, where + ": expected key = value");
    try {
      doc[key] = json::parse(value);
    } catch (const json::exception&) {
      throw Error(Errc::SyntaxError, where + ": bad value " + value);
    }
  }
  return settings_from_json(doc, path);
}

// ---------------------------------------------------------------------------
// Sampler

SynSampleSpec draw_syn_spec(const Library& library, const EnvCatalog& envs,
                            uint64_t seed) {
  if (library.catalog.empty()) throw Error(Errc::EmptyLibrary, "asset catalog is empty");
  if (envs.entries.empty()) throw Error(Errc::EmptyEnvIndex, "environment index is empty");

  Pcg32 rng(seed);
  SynSampleSpec spec;
  spec.seed = seed;
  spec.object_count = 2 + int(rng.next_below(5));

  std::vector<std::string> ids;
  ids.reserve(library.catalog.size());
  for (const auto& [id, entry] : library.catalog) ids.push_back(id);
  if (int(ids.size()) >= spec.object_count) {
    // Partial Fisher-Yates over the sorted ids: without replacement.
    for (int k = 0; k < spec.object_count; ++k) {
      uint32_t j = uint32_t(k) + rng.next_below(uint32_t(ids.size() - size_t(k)));
      std::swap(ids[size_t(k)], ids[j]);
      spec.asset_ids.push_back(ids[size_t(k)]);
    }
  } else {
    for (int k = 0; k < spec.object_count; ++k)
      spec.asset_ids.push_back(ids[rng.next_below(uint32_t(ids.size()))]);
  }

  spec.env_id = envs.entries[rng.next_below(uint32_t(envs.entries.size()))].env_id;
  spec.rotation_total_deg = 180.0 + 60.0 * rng.next_double();
  constexpr MoveKind kMoves[] = {MoveKind::orbit, MoveKind::dolly, MoveKind::crane,
                                 MoveKind::dolly_zoom};
  spec.camera_move = kMoves[rng.next_below(4)];
  return spec;
}

SynSample sample_synthetic_scene(const Library& library, const EnvCatalog& envs,
                                 uint64_t seed) {
  SynSampleSpec spec = draw_syn_spec(library, envs, seed);

  SceneGraph graph;
  std::vector<MeshAsset> meshes;
  for (int k = 0; k < spec.object_count; ++k) {
    const std::string& id = spec.asset_ids[size_t(k)];
    const AssetEntry& entry = library.catalog.at(id);
    MeshAsset mesh = load_obj(library.dir + "/" + entry.file);
    mesh.asset_id = id;
    mesh.tags = entry.tags;
    double largest = mesh_aabb(mesh).max_extent();
    if (!(largest > 0))
      throw Error(Errc::SyntaxError, id + ": degenerate mesh extent");

    SceneNode node;
    node.id = id + "_" + std::to_string(k);
    node.category = id;
    node.tags = entry.tags;
    node.asset_id = id;
    node.scale = size_multiplier(entry.tags) / largest;
    graph.nodes.push_back(std::move(node));
    meshes.push_back(std::move(mesh));
    if (k > 0) graph.edges.push_back({k, k - 1, RelationKind::next_to});
  }

  SynSample sample;
  sample.spec = std::move(spec);
  sample.assembly = solve_layout(graph, meshes, seed);
  return sample;
}

// ---------------------------------------------------------------------------
// Manifests

std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64 offset basis
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= uint8_t(buf[i]);
      h *= 0x100000001b3ull;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

void save_manifest(const RunManifest& manifest, const std::string& path) {
  json doc = {{"tool_version", manifest.tool_version},
              {"seed", manifest.seed},
              {"settings", settings_to_json(manifest.settings)},
              {"inputs", manifest.inputs},
              {"outputs", manifest.outputs}};
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot open " + path + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw Error(Errc::IoError, "failed writing " + path);
}

RunManifest load_manifest(const std::string& path) {
  std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::SyntaxError, path + ": " + e.what());
  }
  RunManifest m;
  try {
    m.tool_version = doc.at("tool_version").get<std::string>();
    m.seed = doc.at("seed").get<uint64_t>();
    m.settings = settings_from_json(doc.at("settings"), path);
    m.inputs = doc.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = doc.at("outputs").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw Error(Errc::SyntaxError, path + ": " + e.what());
  }
  return m;
}

bool verify_manifest(const RunManifest& manifest, const std::string& out_dir) {
  for (const auto& [rel, hash] : manifest.outputs) {
    fs::path p = fs::path(out_dir) / rel;
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) return false;
    if (file_hash_hex(p.string()) != hash) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Output writing

namespace {

// Writes one assembled sample to `out_dir` and fills the manifest's output
// table. Tracks everything it creates and removes it again on failure, so a
// failed run leaves no partial artifacts behind.
RunManifest write_outputs(const std::string& out_dir, const SceneAssembly& assembly,
                          const CameraTrajectory& traj, const EnvMap& env,
                          const ProxyStack& stack, const std::string& caption,
                          const json* rotation, std::map<std::string, std::string> inputs,
                          const PipelineSettings& settings, uint64_t seed) {
  RunManifest manifest;
  manifest.seed = seed;
  manifest.settings = settings;
  manifest.inputs = std::move(inputs);

  fs::path root(out_dir);
  std::vector<fs::path> new_files;
  std::vector<fs::path> new_dirs;
  auto ensure_dir = [&](const fs::path& dir) {
    std::vector<fs::path> chain;
    for (fs::path p = dir; !p.empty() && !fs::exists(p); p = p.parent_path())
      chain.push_back(p);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
      throw Error(Errc::IoError, "cannot create directory " + dir.string());
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) new_dirs.push_back(*it);
  };
  // Only paths that did not exist before are scheduled for rollback; a
  // pre-existing entity blocking a write is never deleted.
  auto track = [&](const fs::path& p) {
    if (!fs::exists(p)) new_files.push_back(p);
    return p.string();
  };

  try {
    ensure_dir(root);
    ensure_dir(root / "proxy");
    ensure_dir(root / "preview");

    save_scene_json(assembly, track(root / "scene.json"));
    {
      std::ofstream cap(track(root / "caption.txt"));
      if (!cap) throw Error(Errc::IoError, "cannot open caption.txt for writing");
      cap << caption << '\n';
    }
    save_trajectory(traj, track(root / "traj.txt"));
    save_envmap(env, track(root / "env.lenv"));
    if (rotation) {
      std::ofstream rot(track(root / "rotation.json"));
      if (!rot) throw Error(Errc::IoError, "cannot open rotation.json for writing");
      rot << rotation->dump(2) << '\n';
    }
    for (int f = 0; f < stack.frames; ++f) {
      save_lpxy(stack, f, track(root / "proxy" / frame_file(f, ".lpxy")));
      write_pass_preview(stack, f, PassKind::diff,
                         track(root / "preview" / frame_file(f, ".png")));
    }

    for (const fs::path& p : new_files)
      manifest.outputs[fs::relative(p, root).generic_string()] = file_hash_hex(p.string());
    save_manifest(manifest, track(root / "manifest.json"));
    return manifest;
  } catch (...) {
    std::error_code ec;
    for (const fs::path& p : new_files) fs::remove(p, ec);
    for (auto it = new_dirs.rbegin(); it != new_dirs.rend(); ++it) fs::remove(*it, ec);
    throw;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// End-to-end runs

RunManifest run_pipeline(const std::string& prompt_path, const Library& library,
                         const EnvCatalog& envs, const std::string& out_dir,
                         const PipelineSettings& settings) {
  std::string prompt_text = stage("parse", [&] { return read_file(prompt_path); });
  PromptAst ast = stage("parse", [&] { return parse_prompt(prompt_text); });

  SceneGraph graph = build_scene_graph(ast);
  std::vector<MeshAsset> meshes = stage("retrieve", [&] {
    return resolve_assets(graph, library.catalog, library.dir);
  });

  SceneAssembly assembly =
      stage("layout", [&] { return solve_layout(graph, meshes, settings.seed); });

  std::map<std::string, std::string> inputs;
  inputs[prompt_path] = file_hash_hex(prompt_path);
  inputs[library.dir + "/index.json"] = file_hash_hex(library.dir + "/index.json");
  inputs[envs.index_file] = file_hash_hex(envs.index_file);
  for (const SceneNode& node : graph.nodes) {
    std::string mesh_path = library.dir + "/" + library.catalog.at(node.asset_id).file;
    inputs[mesh_path] = file_hash_hex(mesh_path);
  }

  EnvMap env = stage("env", [&] {
    std::optional<std::string> env_id = select_envmap(ast.lighting_tags, envs.entries);
    if (env_id) {
      for (const EnvIndexEntry& entry : envs.entries)
        if (entry.env_id == *env_id) {
          std::string env_path = envs.dir + "/" + entry.file;
          inputs[env_path] = file_hash_hex(env_path);
        }
      return load_env_by_id(envs, *env_id);
    }
    // Procedural fallback; sun placement and warmth derive from the seed.
    Pcg32 rng(settings.seed, 7);
    double azimuth = 360.0 * rng.next_double();
    double elevation = 15.0 + 45.0 * rng.next_double();
    double warmth = rng.next_double();
    return procedural_sky(azimuth, elevation, warmth, 64);
  });

  CameraClause clause = ast.camera_clause.value_or(CameraClause{});
  CameraTrajectory traj = stage("camera", [&] {
    return plan_camera(clause, assembly_aabb(assembly), settings.frames,
                       settings.width, settings.height);
  });

  RenderSettings rs = settings.render;
  rs.seed = settings.seed;
  std::vector<double> schedule =
      rotation_schedule(settings.rotation_total_deg, settings.frames);
  ProxyStack stack = stage("render", [&] {
    return render_proxy(assembly, env, traj, schedule, rs, settings.height,
                        settings.width, settings.threads);
  });

  return stage("write", [&] {
    return write_outputs(out_dir, assembly, traj, env, stack, prompt_text, nullptr,
                         std::move(inputs), settings, settings.seed);
  });
}

RunManifest make_syn_sample(const Library& library, const EnvCatalog& envs,
                            uint64_t seed, const std::string& root,
                            const PipelineSettings& settings) {
  SynSample sample = stage("sample", [&] {
    return sample_synthetic_scene(library, envs, seed);
  });
  const SynSampleSpec& spec = sample.spec;

  std::map<std::string, std::string> inputs;
  inputs[library.dir + "/index.json"] = file_hash_hex(library.dir + "/index.json");
  inputs[envs.index_file] = file_hash_hex(envs.index_file);
  for (const std::string& id : spec.asset_ids) {
    std::string mesh_path = library.dir + "/" + library.catalog.at(id).file;
    inputs[mesh_path] = file_hash_hex(mesh_path);
  }

  EnvMap env = stage("env", [&] { return load_env_by_id(envs, spec.env_id); });
  for (const EnvIndexEntry& entry : envs.entries)
    if (entry.env_id == spec.env_id) {
      std::string env_path = envs.dir + "/" + entry.file;
      inputs[env_path] = file_hash_hex(env_path);
    }

  // Frames and resolution follow the settings (the spec's defaults are only
  // placeholders); the sampled randomness stays seed-determined.
  CameraClause clause;
  clause.move = spec.camera_move;
  CameraTrajectory traj = stage("camera", [&] {
    return plan_camera(clause, assembly_aabb(sample.assembly), settings.frames,
                       settings.width, settings.height);
  });

  RenderSettings rs = settings.render;
  rs.seed = seed;
  std::vector<double> schedule =
      rotation_schedule(spec.rotation_total_deg, settings.frames);
  ProxyStack stack = stage("render", [&] {
    return render_proxy(sample.assembly, env, traj, schedule, rs, settings.height,
                        settings.width, settings.threads);
  });

  // Template caption echoing the sample in prompt grammar.
  std::string caption = "scene: ";
  for (size_t k = 0; k < spec.asset_ids.size(); ++k) {
    if (k) caption += "; ";
    caption += spec.asset_ids[k];
  }
  std::vector<std::string> env_tags;
  for (const EnvIndexEntry& entry : envs.entries)
    if (entry.env_id == spec.env_id) env_tags = entry.tags;
  if (!env_tags.empty()) {
    caption += " | lighting:";
    for (const std::string& tag : env_tags) caption += " " + tag;
  }
  caption += " | camera: ";
  caption += to_string(spec.camera_move);

  json rotation = {{"total_degrees", spec.rotation_total_deg},
                   {"yaw_degrees", schedule}};

  PipelineSettings eff = settings;
  eff.seed = seed;
  eff.render.seed = seed;
  eff.rotation_total_deg = spec.rotation_total_deg;

  std::string out_dir = root + "/syn_" + std::to_string(seed);
  return stage("write", [&] {
    return write_outputs(out_dir, sample.assembly, traj, env, stack, caption,
                         &rotation, std::move(inputs), eff, seed);
  });
}

}  // namespace lvp
