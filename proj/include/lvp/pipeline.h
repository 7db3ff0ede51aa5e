// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration: prompt -> scene -> trajectory -> proxy stack,
// the procedural synthetic-sample generator, run manifests, and the shared
// settings file. Everything here is a thin, deterministic composition of
// the other modules; all randomness flows from a single u64 seed.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lvp/camera.h"
#include "lvp/envmap.h"
#include "lvp/prompt.h"
#include "lvp/render.h"
#include "lvp/scene_graph.h"

namespace lvp {

inline constexpr const char* kToolVersion = "lvproxy 0.1.0";

// Asset catalog plus the directory its mesh files resolve against.
struct Library {
  AssetLibrary catalog;
  std::string dir;
};

// Loads `<dir>/index.json` and remembers the directory.
Library open_library(const std::string& dir);

// Environment catalog plus the paths needed to resolve and fingerprint it.
struct EnvCatalog {
  std::vector<EnvIndexEntry> entries;
  std::string dir;         // base for EnvIndexEntry::file
  std::string index_file;  // the index path itself, recorded in manifests
};

EnvCatalog open_env_catalog(const std::string& index_path);

// Loads the map behind `env_id`. Throws Error(BadParameter) on unknown ids.
EnvMap load_env_by_id(const EnvCatalog& envs, const std::string& env_id);

// ---------------------------------------------------------------------------
// Settings

// Knobs shared by the orchestration commands. `seed` feeds every sampled
// quantity and replaces `render.seed`; `rotation_total_deg` is the
// environment yaw swept linearly over the clip.
struct PipelineSettings {
  int height = 128;
  int width = 128;
  int frames = 17;
  double rotation_total_deg = 0.0;
  int threads = 1;
  uint64_t seed = 0;
  RenderSettings render;
};

// Reads a settings file, JSON (flat object) or a flat TOML subset
// (`key = value` lines, `#` comments). Keys: height, width, frames,
// rotation_total_deg, threads, seed, spp_diffuse, spp_glossy,
// roughness_rough, roughness_glossy, max_shadow_distance. Unknown keys
// throw Error(BadParameter); unreadable files Error(IoError); malformed
// content Error(SyntaxError).
PipelineSettings load_settings(const std::string& path);

// ---------------------------------------------------------------------------
// Procedural synthetic samples

// One sampled synthetic clip: which assets, which environment, how far the
// environment rotates, and the camera move. Drawn uniformly per field; see
// sample_synthetic_scene for the exact order.
struct SynSampleSpec {
  uint64_t seed = 0;
  int object_count = 0;                // in [2, 6]
  std::vector<std::string> asset_ids;  // without replacement when possible
  std::string env_id;
  double rotation_total_deg = 0;       // uniform in [180, 240]
  MoveKind camera_move = MoveKind::orbit;
  int frames = 17;
  int height = 128;
  int width = 128;
};

struct SynSample {
  SynSampleSpec spec;
  SceneAssembly assembly;
};

// The random draw alone, fully determined by `seed`. Draw order:
// object_count uniform in [2, 6]; asset ids by partial shuffle of the
// sorted catalog (uniform with replacement only when the catalog is smaller
// than the count); env uniform over the index; rotation total uniform in
// [180, 240]; camera move uniform over {orbit, dolly, crane, dolly_zoom}.
// Throws Error(EmptyLibrary) / Error(EmptyEnvIndex).
SynSampleSpec draw_syn_spec(const Library& library, const EnvCatalog& envs,
                            uint64_t seed);

// draw_syn_spec plus meshes and a solved layout; nodes are chained with
// next_to edges so the arrangement stays compact.
SynSample sample_synthetic_scene(const Library& library, const EnvCatalog& envs,
                                 uint64_t seed);

// ---------------------------------------------------------------------------
// Manifests

// Reproducibility ledger of one run: tool version, seed, settings, FNV-1a 64
// content hashes of every input consumed and every file written (paths
// relative to the output directory; the manifest itself is not listed).
struct RunManifest {
  std::string tool_version = kToolVersion;
  uint64_t seed = 0;
  PipelineSettings settings;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
};

// FNV-1a 64 over the file bytes, as 16 hex digits. Throws Error(IoError).
std::string file_hash_hex(const std::string& path);

void save_manifest(const RunManifest& manifest, const std::string& path);
RunManifest load_manifest(const std::string& path);

// Recomputes the hash of every listed output under `out_dir`; true iff all
// files exist and match.
bool verify_manifest(const RunManifest& manifest, const std::string& out_dir);

// ---------------------------------------------------------------------------
// End-to-end runs

// prompt -> parse -> retrieve/layout -> env select (procedural sky when no
// tag matches) -> plan camera -> render proxy, then writes
//   scene.json, caption.txt, traj.txt, env.lenv,
//   proxy/frame_%05d.lpxy, preview/frame_%05d.png, manifest.json
// under out_dir. All rendering happens before the first file is written and
// any failure removes whatever was already on disk, so out_dir never holds
// partial results. Module errors propagate with a "stage <name>: " prefix
// (parse, retrieve, layout, env, camera, render, write).
RunManifest run_pipeline(const std::string& prompt_path, const Library& library,
                         const EnvCatalog& envs, const std::string& out_dir,
                         const PipelineSettings& settings);

// One synthetic dataset sample under `<root>/syn_<seed>/`: the run_pipeline
// layout plus rotation.json {total_degrees, yaw_degrees[]}; caption.txt
// holds a template caption echoing the sampled spec in prompt grammar.
// Frames, resolution, and rotation come from the sampled spec, not the
// settings.
RunManifest make_syn_sample(const Library& library, const EnvCatalog& envs,
                            uint64_t seed, const std::string& root,
                            const PipelineSettings& settings);

}  // namespace lvp
