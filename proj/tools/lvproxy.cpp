// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit codes: 0 success, 2 usage error, 3 input
// parse error, 4 runtime error. LIVER_THREADS, when set, overrides
// --threads.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lvp/camera.h"
#include "lvp/envmap.h"
#include "lvp/latent_lab.h"
#include "lvp/layout.h"
#include "lvp/metrics.h"
#include "lvp/pipeline.h"
#include "lvp/render.h"
#include "lvp/scene_graph.h"

namespace fs = std::filesystem;
using namespace lvp;

namespace {

struct GlobalArgs {
  uint64_t seed = 0;
  int threads = 1;
  std::string out = "out";
  std::string config;
};

// Settings resolution order: config file, then explicit flags, then the
// LIVER_THREADS environment variable.
PipelineSettings resolve_settings(const CLI::App& app, const GlobalArgs& args) {
  PipelineSettings settings;
  if (!args.config.empty()) settings = load_settings(args.config);
  if (app.count("--seed")) settings.seed = args.seed;
  if (app.count("--threads")) settings.threads = args.threads;
  if (const char* env = std::getenv("LIVER_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) settings.threads = n;
  }
  settings.render.seed = settings.seed;
  return settings;
}

void ensure_out(const std::string& out) { fs::create_directories(out); }

SceneAssembly load_assembly(const std::string& scene_path, const Library& library) {
  SceneDescription desc = load_scene_json(scene_path);
  SceneAssembly assembly;
  assembly.graph = desc.graph;
  assembly.residual_energy = desc.residual_energy;
  for (const SceneNode& node : assembly.graph.nodes) {
    auto it = library.catalog.find(node.asset_id);
    if (it == library.catalog.end())
      throw Error(Errc::DanglingReference,
                  scene_path + ": unknown asset_id \"" + node.asset_id + "\"");
    MeshAsset mesh = load_obj(library.dir + "/" + it->second.file);
    mesh.asset_id = node.asset_id;
    mesh.tags = it->second.tags;
    assembly.meshes.push_back(std::move(mesh));
  }
  return assembly;
}

void write_report(const std::string& out, const std::map<std::string, double>& metrics) {
  ensure_out(out);
  std::string path = out + "/report.json";
  save_metrics_json(metrics, path);
  for (const auto& [key, value] : metrics) std::printf("%s %.9g\n", key.c_str(), value);
  std::printf("wrote %s\n", path.c_str());
}

std::vector<CameraParam> parse_params(const std::vector<std::string>& raw) {
  std::vector<CameraParam> params;
  for (const std::string& kv : raw) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw Error(Errc::BadParameter, "--param expects name=value, got \"" + kv + "\"");
    CameraParam p;
    p.name = kv.substr(0, eq);
    try {
      p.value = std::stod(kv.substr(eq + 1));
    } catch (const std::exception&) {
      throw Error(Errc::BadParameter, "--param " + p.name + ": bad number");
    }
    params.push_back(std::move(p));
  }
  return params;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-proxy pipeline: prompt to scene, trajectory, environment, "
               "proxy renders, toy conditioning runs, and evaluation."};
  app.require_subcommand(1);
  GlobalArgs args;
  app.add_option("--seed", args.seed, "master RNG seed (default 0)");
  app.add_option("--threads", args.threads, "render worker threads (default 1)");
  app.add_option("--out", args.out, "output directory (default ./out)");
  app.add_option("--config", args.config, "settings file, .json or .toml");

  // build-scene
  std::string prompt_path, library_dir, env_index_path;
  CLI::App* build = app.add_subcommand("build-scene", "prompt file -> scene.json");
  build->fallthrough();
  build->add_option("prompt", prompt_path, "prompt text file")->required();
  build->add_option("--library", library_dir, "asset library directory")->required();

  // plan-camera
  std::string scene_path, move_token = "orbit";
  std::vector<std::string> raw_params;
  int frames_flag = 0;
  CLI::App* plan = app.add_subcommand("plan-camera", "scene.json -> traj.txt");
  plan->fallthrough();
  plan->add_option("--scene", scene_path, "scene.json path")->required();
  plan->add_option("--library", library_dir, "asset library directory")->required();
  plan->add_option("--move", move_token, "static|orbit|dolly|crane|dolly_zoom");
  plan->add_option("--param", raw_params, "move parameter name=value (repeatable)");
  plan->add_option("--frames", frames_flag, "frame count (default from settings)");

  // env rotate | sky | select
  CLI::App* env_cmd = app.add_subcommand("env", "environment map utilities");
  env_cmd->require_subcommand(1);
  env_cmd->fallthrough();
  std::string env_input, env_name = "env.lenv", tags_csv;
  double yaw = 0, azimuth = 0, elevation = 40, warmth = 0.5;
  int sky_height = 64;
  CLI::App* env_rotate = env_cmd->add_subcommand("rotate", "yaw-rotate a map");
  env_rotate->fallthrough();
  env_rotate->add_option("--input", env_input, ".hdr or .lenv map")->required();
  env_rotate->add_option("--yaw", yaw, "degrees")->required();
  env_rotate->add_option("--name", env_name, "output file name (default env.lenv)");
  CLI::App* env_sky = env_cmd->add_subcommand("sky", "procedural sky");
  env_sky->fallthrough();
  env_sky->add_option("--azimuth", azimuth, "sun azimuth degrees");
  env_sky->add_option("--elevation", elevation, "sun elevation degrees");
  env_sky->add_option("--warmth", warmth, "0 cold .. 1 warm");
  env_sky->add_option("--env-height", sky_height, "map rows (width is 2x)");
  env_sky->add_option("--name", env_name, "output file name (default env.lenv)");
  CLI::App* env_select = env_cmd->add_subcommand("select", "pick a map by tags");
  env_select->fallthrough();
  env_select->add_option("--index", env_index_path, "env_index.json")->required();
  env_select->add_option("--tags", tags_csv, "comma-separated lighting tags");

  // render-proxy
  std::string traj_path, env_path;
  double rotation_total = 0;
  CLI::App* render = app.add_subcommand("render-proxy", "scene + traj + env -> LPXY frames");
  render->fallthrough();
  render->add_option("--scene", scene_path, "scene.json path")->required();
  render->add_option("--library", library_dir, "asset library directory")->required();
  render->add_option("--traj", traj_path, "trajectory file")->required();
  render->add_option("--env", env_path, ".hdr or .lenv map")->required();
  render->add_option("--rotation-total", rotation_total, "env yaw sweep in degrees");

  // make-syn
  int syn_count = 1;
  CLI::App* make_syn = app.add_subcommand("make-syn", "sample synthetic clips");
  make_syn->fallthrough();
  make_syn->add_option("--library", library_dir, "asset library directory")->required();
  make_syn->add_option("--env-index", env_index_path, "env_index.json")->required();
  make_syn->add_option("--count", syn_count, "samples (seeds seed..seed+count-1)");

  // train-toy
  int toy_samples = 64, steps_a = 100, steps_b = 400, steps_c = 0;
  double lr = 1e-3;
  CLI::App* train = app.add_subcommand("train-toy", "three-stage toy conditioning run");
  train->fallthrough();
  train->add_option("--samples", toy_samples, "toy dataset size per source");
  train->add_option("--steps-a", steps_a, "stage A steps");
  train->add_option("--steps-b", steps_b, "stage B steps");
  train->add_option("--steps-c", steps_c, "stage C steps (even; needs both sources)");
  train->add_option("--lr", lr, "Adam learning rate");

  // eval traj | light | layout
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluation metrics");
  eval_cmd->require_subcommand(1);
  eval_cmd->fallthrough();
  std::string pred_path, gt_path;
  int rpe_step = 1;
  bool per_sequence = false;
  CLI::App* eval_traj = eval_cmd->add_subcommand("traj", "ATE and RPE");
  eval_traj->fallthrough();
  eval_traj->add_option("--pred", pred_path, "predicted trajectory")->required();
  eval_traj->add_option("--gt", gt_path, "ground-truth trajectory")->required();
  eval_traj->add_option("--step", rpe_step, "RPE frame step (default 1)");
  CLI::App* eval_light = eval_cmd->add_subcommand("light", "SI-MSE and instability");
  eval_light->fallthrough();
  eval_light->add_option("--pred", pred_path, "predicted env dir")->required();
  eval_light->add_option("--gt", gt_path, "ground-truth env dir")->required();
  eval_light->add_flag("--per-sequence", per_sequence, "fit one scale per sequence");
  CLI::App* eval_layout = eval_cmd->add_subcommand("layout", "mask mIoU");
  eval_layout->fallthrough();
  eval_layout->add_option("--pred", pred_path, "predicted mask dir")->required();
  eval_layout->add_option("--gt", gt_path, "ground-truth mask dir")->required();

  // run
  CLI::App* run = app.add_subcommand("run", "prompt -> full proxy sample");
  run->fallthrough();
  run->add_option("prompt", prompt_path, "prompt text file")->required();
  run->add_option("--library", library_dir, "asset library directory")->required();
  run->add_option("--env-index", env_index_path, "env_index.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    PipelineSettings settings = resolve_settings(app, args);

    if (*build) {
      std::ifstream in(prompt_path, std::ios::binary);
      if (!in) throw Error(Errc::IoError, "cannot open " + prompt_path);
      std::string text((std::istreambuf_iterator<char>(in)), {});
      PromptAst ast = parse_prompt(text);
      Library library = open_library(library_dir);
      SceneGraph graph = build_scene_graph(ast);
      std::vector<MeshAsset> meshes = resolve_assets(graph, library.catalog, library.dir);
      SceneAssembly assembly = solve_layout(graph, meshes, settings.seed);
      ensure_out(args.out);
      save_scene_json(assembly, args.out + "/scene.json");
      std::printf("wrote %s/scene.json (residual energy %.6g)\n", args.out.c_str(),
                  assembly.residual_energy);
    } else if (*plan) {
      Library library = open_library(library_dir);
      SceneAssembly assembly = load_assembly(scene_path, library);
      auto move = move_from_token(move_token);
      if (!move) throw Error(Errc::UnknownMove, "unknown move \"" + move_token + "\"");
      CameraClause clause{*move, parse_params(raw_params)};
      int frames = frames_flag > 0 ? frames_flag : settings.frames;
      CameraTrajectory traj = plan_camera(clause, assembly_aabb(assembly), frames,
                                          settings.width, settings.height);
      ensure_out(args.out);
      save_trajectory(traj, args.out + "/traj.txt");
      std::printf("wrote %s/traj.txt (%d frames)\n", args.out.c_str(), frames);
    } else if (*env_rotate) {
      EnvMap map = load_envmap(env_input);
      ensure_out(args.out);
      save_envmap(rotate_envmap(map, yaw), args.out + "/" + env_name);
      std::printf("wrote %s/%s\n", args.out.c_str(), env_name.c_str());
    } else if (*env_sky) {
      ensure_out(args.out);
      save_envmap(procedural_sky(azimuth, elevation, warmth, sky_height),
                  args.out + "/" + env_name);
      std::printf("wrote %s/%s\n", args.out.c_str(), env_name.c_str());
    } else if (*env_select) {
      std::vector<std::string> tags;
      std::string tag;
      std::istringstream tag_stream(tags_csv);
      while (std::getline(tag_stream, tag, ','))
        if (!tag.empty()) tags.push_back(tag);
      auto picked = select_envmap(tags, load_env_index(env_index_path));
      std::printf("%s\n", picked ? picked->c_str() : "procedural");
    } else if (*render) {
      Library library = open_library(library_dir);
      SceneAssembly assembly = load_assembly(scene_path, library);
      CameraTrajectory traj = load_trajectory(traj_path);
      EnvMap env = load_envmap(env_path);
      std::vector<double> schedule =
          rotation_schedule(rotation_total, traj.frame_count());
      ProxyStack stack =
          render_proxy(assembly, env, traj, schedule, settings.render,
                       settings.height, settings.width, settings.threads);
      ensure_out(args.out + "/proxy");
      ensure_out(args.out + "/preview");
      for (int f = 0; f < stack.frames; ++f) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%05d", f);
        save_lpxy(stack, f, args.out + "/proxy/" + name + ".lpxy");
        write_pass_preview(stack, f, PassKind::diff,
                           args.out + "/preview/" + name + ".png");
      }
      std::printf("wrote %d frames under %s\n", stack.frames, args.out.c_str());
    } else if (*make_syn) {
      Library library = open_library(library_dir);
      EnvCatalog envs = open_env_catalog(env_index_path);
      if (syn_count < 1) throw Error(Errc::BadParameter, "--count must be >= 1");
      for (int k = 0; k < syn_count; ++k) {
        uint64_t seed = settings.seed + uint64_t(k);
        make_syn_sample(library, envs, seed, args.out, settings);
        std::printf("wrote %s/syn_%llu\n", args.out.c_str(),
                    static_cast<unsigned long long>(seed));
      }
    } else if (*train) {
      Dataset syn = make_toy_dataset(toy_samples, settings.seed, ToySource::syn);
      Dataset real = make_toy_dataset(toy_samples, settings.seed + 1, ToySource::real);
      AdamSettings optim;
      optim.lr = lr;
      AdapterState adapter = make_adapter(settings.seed);
      ToyDenoiser denoiser = make_denoiser(settings.seed);
      ensure_out(args.out);

      auto report = [&](const char* name, const std::vector<double>& trace) {
        if (trace.empty()) return;
        std::printf("stage %s: %d steps, loss %.6f -> %.6f\n", name,
                    int(trace.size()), trace.front(), trace.back());
      };
      TrainResult a = run_stage({Stage::A}, syn, nullptr, steps_a, optim,
                                settings.seed, adapter, denoiser);
      save_loss_csv(args.out + "/loss_a.csv", a.loss_trace);
      report("A", a.loss_trace);
      TrainResult b = run_stage({Stage::B}, syn, nullptr, steps_b, optim,
                                settings.seed + 1, a.adapter, a.denoiser);
      save_loss_csv(args.out + "/loss_b.csv", b.loss_trace);
      report("B", b.loss_trace);
      TrainResult last = std::move(b);
      Stage final_stage = Stage::B;
      if (steps_c > 0) {
        TrainResult c = run_stage({Stage::C}, syn, &real, steps_c, optim,
                                  settings.seed + 2, last.adapter, last.denoiser);
        save_loss_csv(args.out + "/loss_c.csv", c.loss_trace);
        report("C", c.loss_trace);
        last = std::move(c);
        final_stage = Stage::C;
      }
      save_checkpoint(args.out + "/adapter.lvck", last.adapter, last.denoiser,
                      final_stage);
      std::printf("wrote %s/adapter.lvck\n", args.out.c_str());
    } else if (*eval_traj) {
      CameraTrajectory pred = load_trajectory(pred_path);
      CameraTrajectory gt = load_trajectory(gt_path);
      TrajectoryMetrics tm = trajectory_metrics(pred, gt, rpe_step);
      write_report(args.out, {{"ate", tm.ate}, {"rpe_t", tm.rpe_t}, {"rpe_r", tm.rpe_r}});
    } else if (*eval_light) {
      std::vector<EnvMap> pred = load_env_sequence(pred_path);
      std::vector<EnvMap> gt = load_env_sequence(gt_path);
      LightingEval eval = evaluate_lighting(pred, gt, per_sequence);
      ensure_out(args.out);
      std::vector<std::vector<double>> rows;
      for (size_t f = 0; f < eval.per_frame.size(); ++f)
        rows.push_back({double(f), eval.per_frame[f]});
      save_per_frame_csv(args.out + "/frames.csv", {"frame", "si_mse"}, rows);
      write_report(args.out, {{"lighting_error", eval.error},
                              {"lighting_instability", eval.instability}});
    } else if (*eval_layout) {
      MaskSequence pred = load_mask_sequence(pred_path);
      MaskSequence gt = load_mask_sequence(gt_path);
      write_report(args.out, {{"miou", compute_miou(pred, gt)}});
    } else if (*run) {
      Library library = open_library(library_dir);
      EnvCatalog envs = open_env_catalog(env_index_path);
      RunManifest manifest = run_pipeline(prompt_path, library, envs, args.out, settings);
      std::printf("wrote %zu files under %s (manifest.json)\n",
                  manifest.outputs.size() + 1, args.out.c_str());
    }
    return 0;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << " (byte " << e.offset() << ")\n";
    return 3;
  } catch (const Error& e) {
    bool parse_class = e.code() == Errc::SyntaxError || e.code() == Errc::BadMagic ||
                       e.code() == Errc::TruncatedFile;
    std::cerr << "error: " << e.what() << '\n';
    return parse_class ? 3 : 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}
