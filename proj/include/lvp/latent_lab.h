// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lvp/image.h"
#include "lvp/nn.h"
#include "lvp/render.h"
#include "lvp/tensor.h"

namespace lvp {

// ---------------------------------------------------------------------------
// Fixed linear latent codec
//
// Stand-in for a pretrained VAE: every 16x16x3 patch projects onto 4 fixed
// orthonormal basis rows (luminance DC, horizontal and vertical first-mode
// DCT of luminance, R-B chroma DC), giving C=4 codes at 1/16 resolution.
// decode is the transpose map, so encode(decode(q)) = q up to rounding and
// both maps are exactly linear.

constexpr int kLatentChannels = 4;
constexpr int kPatch = 16;

// frame must have height and width divisible by 16; returns (4, H/16, W/16).
// Throws Error(DimensionError) otherwise.
Tensor encode_latent(const Image3f& frame);

// latent must be (4, H', W'); returns the (16 H', 16 W') image whose encoding
// is `latent`.
Image3f decode_latent(const Tensor& latent);

// ---------------------------------------------------------------------------
// Flow matching

// One training point on the linear noise-to-data path.
struct FlowSample {
  Tensor z;    // data latent
  Tensor eps;  // standard normal draw
  double t = 0.0;
  Tensor z_t;  // t*z + (1-t)*eps
  Tensor v_t;  // z - eps
};

// eps is drawn from a counter-based stream of `seed`, one normal per element
// in layout order. Throws Error(BadT) for t outside [0, 1].
FlowSample sample_flow(const Tensor& z, uint64_t seed, double t);

// Mean squared error over all elements. Throws Error(ShapeMismatch).
double flow_loss(const Tensor& prediction, const Tensor& v_t);

// Explicit Euler integration of dz/dt = velocity(z, t) across the given
// increasing t grid, starting from `z` at t_grid.front().
Tensor euler_sample(const std::function<Tensor(const Tensor&, double)>& velocity, Tensor z,
                    const std::vector<double>& t_grid);

// ---------------------------------------------------------------------------
// Models
//
// The proxy encoder downsamples a 9-channel proxy frame to the latent grid:
// four stride-2 blocks (conv 3x3 + GroupNorm(4) + SiLU) with channels
// 9 -> 16 -> 32 -> 32 -> 16, then a 1x1 conv to C=4. The toy denoiser is
// three 3x3 convs (C + 8 time channels -> 32 -> 32 -> C) with SiLU between;
// its base weights are frozen for good, and every layer carries a rank-2
// LoRA delta owned by the adapter.

constexpr int kLoraRank = 2;
constexpr int kDenoiserLayers = 3;

struct EncoderBlock {
  Conv2d conv;
  GroupNorm gn;
};

struct ProxyEncoder {
  std::array<EncoderBlock, 4> blocks;
  Conv2d head;  // 1x1, 16 -> 4
};

// Everything trainable lives here; the denoiser itself never changes.
// alpha is a 1-element tensor so the optimizer and checkpoint treat all
// parameters uniformly; it starts at zero, as do all LoRA b factors, so the
// adapter is exactly inert at initialization.
struct AdapterState {
  ProxyEncoder encoder;
  Tensor alpha;  // shape {1}
  std::array<LoraPair, kDenoiserLayers> lora;

  double alpha_value() const { return alpha.at(0); }
};

struct ToyDenoiser {
  std::array<Conv2d, kDenoiserLayers> layers;
};

ToyDenoiser make_denoiser(uint64_t seed);
AdapterState make_adapter(uint64_t seed);

// ---------------------------------------------------------------------------
// Conditioning ops

// Applies the encoder to each frame of the stack. Frame size must be
// divisible by 16; returns (F, 4, H/16, W/16). Throws Error(DimensionError).
Tensor encode_proxy(const ProxyStack& y, const AdapterState& state);

// z + alpha * z_y elementwise. Throws Error(ShapeMismatch).
Tensor inject_residual(const Tensor& z, const Tensor& z_y, double alpha);

// Velocity prediction: per frame, inject_residual at the input, concatenate
// Fourier time features, then run the conv stack with LoRA deltas applied.
// z_t and z_y are (F, C, H', W'); pass z_y with all zeros (or alpha = 0) for
// the unconditioned model. Throws Error(ShapeMismatch).
Tensor forward_denoise(const Tensor& z_t, double t, const Tensor& z_y, const AdapterState& state,
                       const ToyDenoiser& denoiser);

// The frozen backbone alone on (z_t, t): no injection, no LoRA deltas.
Tensor forward_base(const Tensor& z_t, double t, const ToyDenoiser& denoiser);

// ---------------------------------------------------------------------------
// Training

enum class Stage { A, B, C };

struct StageConfig {
  Stage stage = Stage::A;
};

// One training example: a 1-or-more-frame proxy stack and the matching
// latent (F, 4, H', W').
struct ToySample {
  ProxyStack proxy;
  Tensor latent;
};

using Dataset = std::vector<ToySample>;

enum class ToySource { syn, real };

// Procedural (latent, proxy) pairs at 32x32, F=1: each latent is a fixed
// per-source channel direction times an iid normal spatial field, and the
// proxy broadcasts a per-source 9-channel mix of that field over each 16x16
// block plus pixel noise, clamped to non-negative radiance. The two sources
// differ in direction, mix, scale, and noise so the 1:1 stage-C blend
// actually mixes distributions.
Dataset make_toy_dataset(int count, uint64_t seed, ToySource source);

// Name -> parameter map over adapter (and denoiser base weights, which exist
// in checkpoints but are never trainable).
std::map<std::string, Tensor*> parameter_table(AdapterState& adapter, ToyDenoiser& denoiser);

// The subset trainable in the given stage: encoder.* and alpha for stage A,
// plus denoiser.*.lora_* for stages B and C. Base weights are never present.
std::map<std::string, Tensor*> trainable_table(AdapterState& adapter, ToyDenoiser& denoiser,
                                               Stage stage);

// Intermediate activations of one full training forward, kept for backward.
struct TrainContext;

// Forward pass with caches: encodes the proxy, injects with the current
// alpha, predicts velocity, and returns flow_loss against fs.v_t.
double loss_forward(const ToySample& sample, const FlowSample& fs, const AdapterState& state,
                    const ToyDenoiser& denoiser, TrainContext& ctx);

// Reverse-mode gradients for the stage's trainable set, keyed like
// trainable_table. Frozen parameters have no entry.
std::map<std::string, Tensor> backward(const TrainContext& ctx, const AdapterState& state,
                                       const ToyDenoiser& denoiser, Stage stage);

struct TrainResult {
  AdapterState adapter;
  ToyDenoiser denoiser;  // returned unchanged; base weights are frozen
  std::vector<double> loss_trace;
};

// Runs `steps` single-sample Adam steps. Sample index, t, and eps for step
// k derive from counter-based streams of (seed, k), so traces are
// bit-identical across runs. Stage C alternates primary/secondary per step,
// starting with primary (exact 1:1 over any even step count). Throws
// Error(EmptyDataset) for an empty primary and Error(MissingSource) when
// stage C lacks a non-empty secondary.
TrainResult run_stage(const StageConfig& config, const Dataset& primary, const Dataset* secondary,
                      int steps, const AdamSettings& optim, uint64_t seed, AdapterState adapter,
                      ToyDenoiser denoiser);

// ---------------------------------------------------------------------------
// Checkpoints and traces
//
// Checkpoint file: magic "LVCK", u32 version = 1, u8 stage, u32 tensor
// count, then per tensor: u32 name length, name bytes, u8 trainable flag,
// u32 rank, u32 dims[rank], float32 little-endian data. Loss trace: CSV
// with a "step,loss" header.

struct Checkpoint {
  AdapterState adapter;
  ToyDenoiser denoiser;
  Stage stage = Stage::A;
};

void save_checkpoint(const std::string& path, const AdapterState& adapter,
                     const ToyDenoiser& denoiser, Stage stage);
Checkpoint load_checkpoint(const std::string& path);

void save_loss_csv(const std::string& path, const std::vector<double>& trace);

// Definition is public so tests can run forward/backward pieces in
// isolation; treat the fields as read-only outputs of loss_forward.
struct TrainContext {
  struct BlockCache {
    Tensor x;        // block input
    Tensor pre_gn;   // conv output
    GnCache gn;      // normalization cache
    Tensor pre_act;  // gn output (silu input)
  };
  struct FrameCache {
    std::array<BlockCache, 4> blocks;
    Tensor head_in;  // encoder head input
    Tensor x0;       // injected latent frame
    Tensor xin;      // x0 with time features appended
    Tensor pre1, pre2;  // denoiser pre-activations
    Tensor act1, act2;  // SiLU outputs
  };
  std::vector<FrameCache> frames;
  Tensor z_y;         // (F, C, H', W')
  Tensor prediction;  // (F, C, H', W')
  Tensor v_t;
  double t = 0.0;
  std::array<Tensor, kDenoiserLayers> w_eff;  // denoiser kernels with LoRA
};

}  // namespace lvp
