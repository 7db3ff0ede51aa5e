// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#include "lvp/latent_lab.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace lvp {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kPatchEntries = kPatch * kPatch * 3;

// The four orthonormal basis rows of the codec, in patch layout
// (y * 16 + x) * 3 + c. Orthogonality is by construction (separable modes
// with zero-sum factors); each row is normalized once at startup.
struct PatchBasis {
  std::array<std::array<double, kPatchEntries>, kLatentChannels> rows;

  PatchBasis() {
    for (int y = 0; y < kPatch; ++y)
      for (int x = 0; x < kPatch; ++x)
        for (int c = 0; c < 3; ++c) {
          size_t i = (size_t(y) * kPatch + x) * 3 + c;
          rows[0][i] = 1.0;
          rows[1][i] = std::cos(kPi * (x + 0.5) / kPatch);
          rows[2][i] = std::cos(kPi * (y + 0.5) / kPatch);
          rows[3][i] = (c == 0) ? 1.0 : (c == 2 ? -1.0 : 0.0);
        }
    for (auto& row : rows) {
      double norm = 0.0;
      for (double v : row) norm += v * v;
      norm = std::sqrt(norm);
      for (double& v : row) v /= norm;
    }
  }
};

const PatchBasis& patch_basis() {
  static const PatchBasis basis;
  return basis;
}

}  // namespace

Tensor encode_latent(const Image3f& frame) {
  if (frame.height <= 0 || frame.width <= 0 || frame.height % kPatch != 0 ||
      frame.width % kPatch != 0)
    throw Error(Errc::DimensionError, "frame size must be a positive multiple of 16");
  const PatchBasis& basis = patch_basis();
  int ph = frame.height / kPatch, pw = frame.width / kPatch;
  Tensor out({kLatentChannels, ph, pw});
  for (int py = 0; py < ph; ++py)
    for (int px = 0; px < pw; ++px) {
      std::array<double, kLatentChannels> q{};
      for (int y = 0; y < kPatch; ++y)
        for (int x = 0; x < kPatch; ++x)
          for (int c = 0; c < 3; ++c) {
            double v = frame.at(py * kPatch + y, px * kPatch + x, c);
            size_t i = (size_t(y) * kPatch + x) * 3 + c;
            for (int k = 0; k < kLatentChannels; ++k) q[k] += basis.rows[k][i] * v;
          }
      for (int k = 0; k < kLatentChannels; ++k) out.at(k, py, px) = q[k];
    }
  return out;
}

Image3f decode_latent(const Tensor& latent) {
  if (latent.shape.size() != 3 || latent.shape[0] != kLatentChannels)
    throw Error(Errc::DimensionError, "latent must be (4, H', W')");
  const PatchBasis& basis = patch_basis();
  int ph = latent.shape[1], pw = latent.shape[2];
  Image3f frame(ph * kPatch, pw * kPatch);
  for (int py = 0; py < ph; ++py)
    for (int px = 0; px < pw; ++px) {
      std::array<double, kLatentChannels> q;
      for (int k = 0; k < kLatentChannels; ++k) q[k] = latent.at(k, py, px);
      for (int y = 0; y < kPatch; ++y)
        for (int x = 0; x < kPatch; ++x)
          for (int c = 0; c < 3; ++c) {
            size_t i = (size_t(y) * kPatch + x) * 3 + c;
            double v = 0.0;
            for (int k = 0; k < kLatentChannels; ++k) v += q[k] * basis.rows[k][i];
            frame.at(py * kPatch + y, px * kPatch + x, c) = float(v);
          }
    }
  return frame;
}

// ---------------------------------------------------------------------------
// Flow matching

FlowSample sample_flow(const Tensor& z, uint64_t seed, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw Error(Errc::BadT, "t must lie in [0, 1]");
  FlowSample fs;
  fs.z = z;
  fs.t = t;
  fs.eps = Tensor(z.shape);
  for (size_t i = 0; i < fs.eps.numel(); ++i) {
    Pcg32 rng(hash_combine(seed, uint64_t(i)));
    fs.eps.data[i] = rng.next_normal();
  }
  fs.z_t = Tensor(z.shape);
  fs.v_t = Tensor(z.shape);
  for (size_t i = 0; i < z.numel(); ++i) {
    fs.z_t.data[i] = t * z.data[i] + (1.0 - t) * fs.eps.data[i];
    fs.v_t.data[i] = z.data[i] - fs.eps.data[i];
  }
  return fs;
}

double flow_loss(const Tensor& prediction, const Tensor& v_t) {
  if (!same_shape(prediction, v_t)) throw Error(Errc::ShapeMismatch, "flow_loss shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < prediction.numel(); ++i) {
    double d = prediction.data[i] - v_t.data[i];
    acc += d * d;
  }
  return acc / double(prediction.numel());
}

Tensor euler_sample(const std::function<Tensor(const Tensor&, double)>& velocity, Tensor z,
                    const std::vector<double>& t_grid) {
  for (size_t i = 0; i + 1 < t_grid.size(); ++i) {
    double dt = t_grid[i + 1] - t_grid[i];
    Tensor v = velocity(z, t_grid[i]);
    for (size_t j = 0; j < z.numel(); ++j) z.data[j] += dt * v.data[j];
  }
  return z;
}

// ---------------------------------------------------------------------------
// Models

namespace {

constexpr int kEncChannels[5] = {kProxyChannels, 16, 32, 32, 16};
constexpr int kDenIn[kDenoiserLayers] = {kLatentChannels + kTimeChannels, 32, 32};
constexpr int kDenOut[kDenoiserLayers] = {32, 32, kLatentChannels};

}  // namespace

ToyDenoiser make_denoiser(uint64_t seed) {
  ToyDenoiser den;
  for (int i = 0; i < kDenoiserLayers; ++i) {
    Pcg32 rng(hash_combine(seed, 100 + uint64_t(i)));
    den.layers[i] = make_conv(kDenIn[i], kDenOut[i], 3, 1, 1, rng);
  }
  return den;
}

AdapterState make_adapter(uint64_t seed) {
  AdapterState state;
  for (int i = 0; i < 4; ++i) {
    Pcg32 rng(hash_combine(seed, 200 + uint64_t(i)));
    state.encoder.blocks[i].conv = make_conv(kEncChannels[i], kEncChannels[i + 1], 3, 2, 1, rng);
    state.encoder.blocks[i].gn = make_group_norm(kEncChannels[i + 1], 4);
  }
  Pcg32 head_rng(hash_combine(seed, 250));
  state.encoder.head = make_conv(kEncChannels[4], kLatentChannels, 1, 1, 0, head_rng);
  state.alpha = Tensor({1});
  for (int i = 0; i < kDenoiserLayers; ++i) {
    Pcg32 rng(hash_combine(seed, 300 + uint64_t(i)));
    int fan_in = kDenIn[i] * 9;
    state.lora[i].a = randn({kLoraRank, fan_in}, rng, 1.0 / std::sqrt(double(fan_in)));
    state.lora[i].b = Tensor({kDenOut[i], kLoraRank});  // zero: inert at start
  }
  return state;
}

// ---------------------------------------------------------------------------
// Forward passes

namespace {

Tensor encoder_forward(const Tensor& x, const ProxyEncoder& enc,
                       TrainContext::FrameCache* cache) {
  Tensor h = x;
  for (int i = 0; i < 4; ++i) {
    const EncoderBlock& blk = enc.blocks[i];
    Tensor pre_gn = conv_forward(h, blk.conv, blk.conv.w);
    GnCache local;
    GnCache& gn_cache = cache ? cache->blocks[i].gn : local;
    Tensor pre_act = gn_forward(pre_gn, blk.gn, gn_cache);
    if (cache) {
      cache->blocks[i].x = h;
      cache->blocks[i].pre_gn = pre_gn;
      cache->blocks[i].pre_act = pre_act;
    }
    h = silu(pre_act);
  }
  if (cache) cache->head_in = h;
  return conv_forward(h, enc.head, enc.head.w);
}

Tensor frame_slice(const Tensor& t4, int f) {
  Tensor out({t4.shape[1], t4.shape[2], t4.shape[3]});
  size_t n = out.numel();
  std::copy_n(t4.data.begin() + size_t(f) * n, n, out.data.begin());
  return out;
}

void set_frame(Tensor& t4, int f, const Tensor& t3) {
  size_t n = t3.numel();
  std::copy_n(t3.data.begin(), n, t4.data.begin() + size_t(f) * n);
}

Tensor proxy_frame_tensor(const ProxyStack& y, int f) {
  Tensor x({kProxyChannels, y.height, y.width});
  size_t n = x.numel();
  const float* src = y.data.data() + y.index(f, 0, 0, 0);
  for (size_t i = 0; i < n; ++i) x.data[i] = double(src[i]);
  return x;
}

Tensor concat_time(const Tensor& x0, double t) {
  int h = x0.shape[1], w = x0.shape[2];
  Tensor xin({kLatentChannels + kTimeChannels, h, w});
  std::copy_n(x0.data.begin(), x0.numel(), xin.data.begin());
  Tensor tf = time_features(t, h, w);
  std::copy_n(tf.data.begin(), tf.numel(), xin.data.begin() + x0.numel());
  return xin;
}

// Denoiser conv stack on one injected frame; caches are optional.
Tensor denoiser_forward(const Tensor& xin, const ToyDenoiser& den,
                        const std::array<Tensor, kDenoiserLayers>& w_eff,
                        TrainContext::FrameCache* cache) {
  Tensor pre1 = conv_forward(xin, den.layers[0], w_eff[0]);
  Tensor act1 = silu(pre1);
  Tensor pre2 = conv_forward(act1, den.layers[1], w_eff[1]);
  Tensor act2 = silu(pre2);
  Tensor out = conv_forward(act2, den.layers[2], w_eff[2]);
  if (cache) {
    cache->pre1 = pre1;
    cache->act1 = act1;
    cache->pre2 = pre2;
    cache->act2 = act2;
  }
  return out;
}

void check_latent4(const Tensor& t4, const char* what) {
  if (t4.shape.size() != 4 || t4.shape[1] != kLatentChannels)
    throw Error(Errc::ShapeMismatch, std::string(what) + " must be (F, 4, H', W')");
}

}  // namespace

Tensor encode_proxy(const ProxyStack& y, const AdapterState& state) {
  if (y.frames <= 0 || y.height % kPatch != 0 || y.width % kPatch != 0 || y.height <= 0 ||
      y.width <= 0)
    throw Error(Errc::DimensionError, "proxy frame size must be a positive multiple of 16");
  Tensor out({y.frames, kLatentChannels, y.height / kPatch, y.width / kPatch});
  for (int f = 0; f < y.frames; ++f)
    set_frame(out, f, encoder_forward(proxy_frame_tensor(y, f), state.encoder, nullptr));
  return out;
}

Tensor inject_residual(const Tensor& z, const Tensor& z_y, double alpha) {
  if (!same_shape(z, z_y)) throw Error(Errc::ShapeMismatch, "inject_residual shape mismatch");
  if (alpha == 0.0) return z;  // exact: conditioning provably inert
  Tensor out(z.shape);
  for (size_t i = 0; i < z.numel(); ++i) out.data[i] = z.data[i] + alpha * z_y.data[i];
  return out;
}

Tensor forward_denoise(const Tensor& z_t, double t, const Tensor& z_y, const AdapterState& state,
                       const ToyDenoiser& denoiser) {
  check_latent4(z_t, "z_t");
  if (!same_shape(z_t, z_y)) throw Error(Errc::ShapeMismatch, "z_t and z_y shapes differ");
  std::array<Tensor, kDenoiserLayers> w_eff;
  for (int i = 0; i < kDenoiserLayers; ++i)
    w_eff[i] = effective_weight(denoiser.layers[i], &state.lora[i]);
  Tensor out(z_t.shape);
  for (int f = 0; f < z_t.shape[0]; ++f) {
    Tensor x0 = inject_residual(frame_slice(z_t, f), frame_slice(z_y, f), state.alpha_value());
    set_frame(out, f, denoiser_forward(concat_time(x0, t), denoiser, w_eff, nullptr));
  }
  return out;
}

Tensor forward_base(const Tensor& z_t, double t, const ToyDenoiser& denoiser) {
  check_latent4(z_t, "z_t");
  std::array<Tensor, kDenoiserLayers> w_eff;
  for (int i = 0; i < kDenoiserLayers; ++i) w_eff[i] = denoiser.layers[i].w;
  Tensor out(z_t.shape);
  for (int f = 0; f < z_t.shape[0]; ++f)
    set_frame(out, f, denoiser_forward(concat_time(frame_slice(z_t, f), t), denoiser, w_eff,
                                       nullptr));
  return out;
}

// ---------------------------------------------------------------------------
// Training

double loss_forward(const ToySample& sample, const FlowSample& fs, const AdapterState& state,
                    const ToyDenoiser& denoiser, TrainContext& ctx) {
  check_latent4(sample.latent, "sample latent");
  if (!same_shape(sample.latent, fs.z_t))
    throw Error(Errc::ShapeMismatch, "flow sample does not match the latent");
  if (sample.proxy.frames != sample.latent.shape[0] ||
      sample.proxy.height != sample.latent.shape[2] * kPatch ||
      sample.proxy.width != sample.latent.shape[3] * kPatch)
    throw Error(Errc::ShapeMismatch, "proxy stack does not match the latent grid");

  int frames = sample.latent.shape[0];
  ctx.frames.assign(size_t(frames), {});
  ctx.t = fs.t;
  ctx.v_t = fs.v_t;
  for (int i = 0; i < kDenoiserLayers; ++i)
    ctx.w_eff[i] = effective_weight(denoiser.layers[i], &state.lora[i]);

  ctx.z_y = Tensor(sample.latent.shape);
  ctx.prediction = Tensor(sample.latent.shape);
  double alpha = state.alpha_value();
  for (int f = 0; f < frames; ++f) {
    TrainContext::FrameCache& cache = ctx.frames[size_t(f)];
    Tensor z_y_f = encoder_forward(proxy_frame_tensor(sample.proxy, f), state.encoder, &cache);
    set_frame(ctx.z_y, f, z_y_f);
    Tensor z_t_f = frame_slice(fs.z_t, f);
    Tensor x0(z_t_f.shape);
    for (size_t i = 0; i < x0.numel(); ++i) x0.data[i] = z_t_f.data[i] + alpha * z_y_f.data[i];
    cache.x0 = x0;
    cache.xin = concat_time(x0, fs.t);
    set_frame(ctx.prediction, f, denoiser_forward(cache.xin, denoiser, ctx.w_eff, &cache));
  }
  return flow_loss(ctx.prediction, fs.v_t);
}

namespace {

void add_grad(std::map<std::string, Tensor>& grads, const std::string& name, const Tensor& g) {
  auto it = grads.find(name);
  if (it == grads.end()) {
    grads.emplace(name, g);
    return;
  }
  for (size_t i = 0; i < g.numel(); ++i) it->second.data[i] += g.data[i];
}

}  // namespace

std::map<std::string, Tensor> backward(const TrainContext& ctx, const AdapterState& state,
                                       const ToyDenoiser& denoiser, Stage stage) {
  std::map<std::string, Tensor> grads;
  bool train_lora = stage != Stage::A;
  int frames = int(ctx.frames.size());
  double alpha = state.alpha_value();
  double dalpha = 0.0;
  double scale = 2.0 / double(ctx.prediction.numel());

  for (int f = 0; f < frames; ++f) {
    const TrainContext::FrameCache& cache = ctx.frames[size_t(f)];
    // d loss / d prediction for this frame.
    Tensor dpred({ctx.prediction.shape[1], ctx.prediction.shape[2], ctx.prediction.shape[3]});
    size_t n = dpred.numel();
    size_t base = size_t(f) * n;
    for (size_t i = 0; i < n; ++i)
      dpred.data[i] = scale * (ctx.prediction.data[base + i] - ctx.v_t.data[base + i]);

    // Denoiser stack, last layer first.
    ConvGrads g2;
    Tensor dact2 = conv_backward(cache.act2, denoiser.layers[2], ctx.w_eff[2], dpred, g2);
    Tensor dpre2 = silu_backward(cache.pre2, dact2);
    ConvGrads g1;
    Tensor dact1 = conv_backward(cache.act1, denoiser.layers[1], ctx.w_eff[1], dpre2, g1);
    Tensor dpre1 = silu_backward(cache.pre1, dact1);
    ConvGrads g0;
    Tensor dxin = conv_backward(cache.xin, denoiser.layers[0], ctx.w_eff[0], dpre1, g0);
    if (train_lora) {
      const ConvGrads* layer_grads[kDenoiserLayers] = {&g0, &g1, &g2};
      for (int i = 0; i < kDenoiserLayers; ++i) {
        Tensor da, db;
        lora_grads(state.lora[i], *layer_grads[i], da, db);
        std::string prefix = "denoiser.layer" + std::to_string(i);
        add_grad(grads, prefix + ".lora_a", da);
        add_grad(grads, prefix + ".lora_b", db);
      }
    }

    // Split off the latent channels; time-feature gradients end here.
    Tensor dx0({kLatentChannels, dxin.shape[1], dxin.shape[2]});
    std::copy_n(dxin.data.begin(), dx0.numel(), dx0.data.begin());

    // x0 = z_t + alpha * z_y: accumulate dalpha and push into the encoder.
    Tensor dz_y(dx0.shape);
    for (size_t i = 0; i < dx0.numel(); ++i) {
      dalpha += dx0.data[i] * ctx.z_y.data[base + i];
      dz_y.data[i] = alpha * dx0.data[i];
    }

    // Encoder, head first.
    ConvGrads gh;
    Tensor dh = conv_backward(cache.head_in, state.encoder.head, state.encoder.head.w, dz_y, gh);
    add_grad(grads, "encoder.head.w", gh.dw);
    add_grad(grads, "encoder.head.b", gh.db);
    for (int i = 3; i >= 0; --i) {
      const TrainContext::BlockCache& blk = cache.blocks[i];
      const EncoderBlock& enc = state.encoder.blocks[size_t(i)];
      Tensor dpre_act = silu_backward(blk.pre_act, dh);
      Tensor dgamma, dbeta;
      Tensor dpre_gn = gn_backward(enc.gn, blk.gn, dpre_act, dgamma, dbeta);
      std::string prefix = "encoder.block" + std::to_string(i);
      add_grad(grads, prefix + ".gn.gamma", dgamma);
      add_grad(grads, prefix + ".gn.beta", dbeta);
      ConvGrads gc;
      dh = conv_backward(blk.x, enc.conv, enc.conv.w, dpre_gn, gc);
      add_grad(grads, prefix + ".conv.w", gc.dw);
      add_grad(grads, prefix + ".conv.b", gc.db);
    }
  }

  Tensor galpha({1});
  galpha.at(0) = dalpha;
  grads.emplace("alpha", std::move(galpha));
  return grads;
}

std::map<std::string, Tensor*> parameter_table(AdapterState& adapter, ToyDenoiser& denoiser) {
  std::map<std::string, Tensor*> table;
  table["alpha"] = &adapter.alpha;
  for (int i = 0; i < 4; ++i) {
    std::string prefix = "encoder.block" + std::to_string(i);
    table[prefix + ".conv.w"] = &adapter.encoder.blocks[size_t(i)].conv.w;
    table[prefix + ".conv.b"] = &adapter.encoder.blocks[size_t(i)].conv.b;
    table[prefix + ".gn.gamma"] = &adapter.encoder.blocks[size_t(i)].gn.gamma;
    table[prefix + ".gn.beta"] = &adapter.encoder.blocks[size_t(i)].gn.beta;
  }
  table["encoder.head.w"] = &adapter.encoder.head.w;
  table["encoder.head.b"] = &adapter.encoder.head.b;
  for (int i = 0; i < kDenoiserLayers; ++i) {
    std::string prefix = "denoiser.layer" + std::to_string(i);
    table[prefix + ".w"] = &denoiser.layers[size_t(i)].w;
    table[prefix + ".b"] = &denoiser.layers[size_t(i)].b;
    table[prefix + ".lora_a"] = &adapter.lora[size_t(i)].a;
    table[prefix + ".lora_b"] = &adapter.lora[size_t(i)].b;
  }
  return table;
}

std::map<std::string, Tensor*> trainable_table(AdapterState& adapter, ToyDenoiser& denoiser,
                                               Stage stage) {
  std::map<std::string, Tensor*> all = parameter_table(adapter, denoiser);
  std::map<std::string, Tensor*> table;
  for (const auto& [name, tensor] : all) {
    bool is_lora = name.find(".lora_") != std::string::npos;
    bool is_base = name.rfind("denoiser.", 0) == 0 && !is_lora;
    if (is_base) continue;  // the backbone is frozen for good
    if (is_lora && stage == Stage::A) continue;
    table[name] = tensor;
  }
  return table;
}

TrainResult run_stage(const StageConfig& config, const Dataset& primary, const Dataset* secondary,
                      int steps, const AdamSettings& optim, uint64_t seed, AdapterState adapter,
                      ToyDenoiser denoiser) {
  if (primary.empty()) throw Error(Errc::EmptyDataset, "stage dataset is empty");
  if (config.stage == Stage::C && (!secondary || secondary->empty()))
    throw Error(Errc::MissingSource, "stage C needs a second non-empty source");
  if (steps < 0) throw Error(Errc::BadParameter, "steps must be non-negative");

  TrainResult result{std::move(adapter), std::move(denoiser), {}};
  result.loss_trace.reserve(size_t(steps));
  auto params = trainable_table(result.adapter, result.denoiser, config.stage);
  Adam optimizer(optim);

  for (int step = 0; step < steps; ++step) {
    const Dataset& source =
        (config.stage == Stage::C && (step % 2 == 1)) ? *secondary : primary;
    Pcg32 pick(hash_combine(seed, uint64_t(step)));
    const ToySample& sample = source[pick.next_below(uint32_t(source.size()))];
    double t = pick.next_double();
    FlowSample fs =
        sample_flow(sample.latent, hash_combine(hash_combine(seed, uint64_t(step)), 0x5eed), t);
    TrainContext ctx;
    double loss = loss_forward(sample, fs, result.adapter, result.denoiser, ctx);
    auto grads = backward(ctx, result.adapter, result.denoiser, config.stage);
    optimizer.step(params, grads);
    result.loss_trace.push_back(loss);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Toy data

Dataset make_toy_dataset(int count, uint64_t seed, ToySource source) {
  if (count <= 0) throw Error(Errc::BadParameter, "dataset count must be positive");
  bool syn = source == ToySource::syn;
  uint64_t tag = syn ? 0xa11ce : 0xb0b5;
  // Latents are rank-1 in the channel axis: a fixed per-source direction u
  // times an iid normal spatial field g. The channel maps a learner needs
  // are then rank-1 too, which keeps the task inside what rank-2 LoRA can
  // express within a few hundred steps.
  std::array<double, kLatentChannels> u =
      syn ? std::array<double, kLatentChannels>{1.0, 0.5, -0.5, 0.25}
          : std::array<double, kLatentChannels>{0.25, -1.0, 0.5, 0.75};
  double norm = 0.0;
  for (double v : u) norm += v * v;
  norm = std::sqrt(norm);
  for (double& v : u) v /= norm;
  // Per-source mixing vector: how strongly the field shows in each proxy
  // channel. Fixed across samples so the map is learnable.
  Pcg32 mix_rng(hash_combine(tag, 0x31));
  std::array<double, kProxyChannels> mix;
  for (double& v : mix) v = mix_rng.next_normal();
  double sigma = syn ? 6.0 : 5.0;
  double noise = syn ? 0.02 : 0.04;
  const int size = 32, grid = size / kPatch;

  Dataset out;
  out.reserve(size_t(count));
  for (int s = 0; s < count; ++s) {
    Pcg32 rng(hash_combine(hash_combine(seed, tag), uint64_t(s)));
    ToySample sample;
    sample.latent = Tensor({1, kLatentChannels, grid, grid});
    Tensor field({grid, grid});
    for (double& v : field.data) v = rng.next_normal();
    for (int c = 0; c < kLatentChannels; ++c)
      for (int by = 0; by < grid; ++by)
        for (int bx = 0; bx < grid; ++bx)
          sample.latent.at(0, c, by, bx) = sigma * u[size_t(c)] * field.at(by, bx);
    sample.proxy = ProxyStack(1, size, size);
    for (int ch = 0; ch < kProxyChannels; ++ch)
      for (int by = 0; by < grid; ++by)
        for (int bx = 0; bx < grid; ++bx) {
          double base = mix[size_t(ch)] * field.at(by, bx);
          for (int y = 0; y < kPatch; ++y)
            for (int x = 0; x < kPatch; ++x) {
              double v = 1.5 + 0.5 * base + noise * rng.next_normal();
              sample.proxy.at(0, ch, by * kPatch + y, bx * kPatch + x) =
                  float(std::max(0.0, v));  // radiance stays non-negative
            }
        }
    out.push_back(std::move(sample));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints and traces

namespace {

void write_u32(std::ofstream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::ifstream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw Error(Errc::TruncatedFile, "checkpoint ends mid-field");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

char stage_label(Stage stage) {
  switch (stage) {
    case Stage::A: return 'A';
    case Stage::B: return 'B';
    default: return 'C';
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const AdapterState& adapter,
                     const ToyDenoiser& denoiser, Stage stage) {
  // parameter_table wants mutable refs; copies keep the API const.
  AdapterState a = adapter;
  ToyDenoiser d = denoiser;
  auto table = parameter_table(a, d);
  auto trainable = trainable_table(a, d, stage);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot open " + path + " for writing");
  out.write("LVCK", 4);
  write_u32(out, 1);
  char label = stage_label(stage);
  out.write(&label, 1);
  write_u32(out, uint32_t(table.size()));
  static_assert(sizeof(float) == 4, "float32 on-disk format");
  for (const auto& [name, tensor] : table) {
    write_u32(out, uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    char flag = trainable.count(name) ? 1 : 0;
    out.write(&flag, 1);
    write_u32(out, uint32_t(tensor->shape.size()));
    for (int dim : tensor->shape) write_u32(out, uint32_t(dim));
    std::vector<float> quantized(tensor->numel());
    for (size_t i = 0; i < quantized.size(); ++i) quantized[i] = float(tensor->data[i]);
    out.write(reinterpret_cast<const char*>(quantized.data()),
              std::streamsize(quantized.size() * sizeof(float)));
  }
  if (!out) throw Error(Errc::IoError, "short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "LVCK", 4) != 0)
    throw Error(Errc::BadMagic, "not a checkpoint file");
  if (read_u32(in) != 1) throw Error(Errc::BadMagic, "unsupported checkpoint version");
  char label;
  if (!in.read(&label, 1)) throw Error(Errc::TruncatedFile, "checkpoint ends mid-header");

  Checkpoint ck;
  ck.adapter = make_adapter(0);
  ck.denoiser = make_denoiser(0);
  switch (label) {
    case 'A': ck.stage = Stage::A; break;
    case 'B': ck.stage = Stage::B; break;
    case 'C': ck.stage = Stage::C; break;
    default: throw Error(Errc::BadMagic, "unknown stage label");
  }
  auto table = parameter_table(ck.adapter, ck.denoiser);

  uint32_t count = read_u32(in);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len))
      throw Error(Errc::TruncatedFile, "checkpoint ends mid-name");
    char flag;
    if (!in.read(&flag, 1)) throw Error(Errc::TruncatedFile, "checkpoint ends mid-entry");
    uint32_t rank = read_u32(in);
    std::vector<int> dims(rank);
    for (uint32_t d = 0; d < rank; ++d) dims[d] = int(read_u32(in));
    auto it = table.find(name);
    if (it == table.end())
      throw Error(Errc::DimensionMismatch, "unknown checkpoint tensor " + name);
    if (it->second->shape != dims)
      throw Error(Errc::DimensionMismatch, "shape mismatch for " + name);
    std::vector<float> quantized(it->second->numel());
    if (!in.read(reinterpret_cast<char*>(quantized.data()),
                 std::streamsize(quantized.size() * sizeof(float))))
      throw Error(Errc::TruncatedFile, "checkpoint ends mid-tensor");
    for (size_t j = 0; j < quantized.size(); ++j) it->second->data[j] = double(quantized[j]);
  }
  return ck;
}

void save_loss_csv(const std::string& path, const std::vector<double>& trace) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot open " + path + " for writing");
  out << "step,loss\n";
  char line[64];
  for (size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.17g\n", i, trace[i]);
    out << line;
  }
  if (!out) throw Error(Errc::IoError, "short write to " + path);
}

}  // namespace lvp
