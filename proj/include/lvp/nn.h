// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "lvp/tensor.h"

namespace lvp {

// 2D convolution over a (C, H, W) tensor. Weights are (out_ch, in_ch, k, k),
// zero padding, no dilation.
struct Conv2d {
  int in_ch = 0;
  int out_ch = 0;
  int ksize = 3;
  int stride = 1;
  int pad = 1;
  Tensor w;  // (out_ch, in_ch, k, k)
  Tensor b;  // (out_ch)
};

// Weights ~ N(0, 1/fan_in) with fan_in = in_ch * k * k, biases zero.
Conv2d make_conv(int in_ch, int out_ch, int ksize, int stride, int pad, Pcg32& rng);

// Low-rank delta for a conv layer: the effective kernel is
// w + reshape(b_factor * a_factor) with the (in_ch, k, k) axes flattened as
// fan_in. b_factor starts at zero so the delta is initially inert.
struct LoraPair {
  Tensor a;  // (rank, in_ch * k * k)
  Tensor b;  // (out_ch, rank)
};

LoraPair make_lora(const Conv2d& conv, int rank, Pcg32& rng);

// w + reshape(B*A); returns a copy of w when lora is null.
Tensor effective_weight(const Conv2d& conv, const LoraPair* lora);

// x is (in_ch, H, W); returns (out_ch, H', W') with
// H' = (H + 2 pad - k) / stride + 1.
Tensor conv_forward(const Tensor& x, const Conv2d& conv, const Tensor& w_eff);

struct ConvGrads {
  Tensor dw;  // gradient of the *effective* kernel
  Tensor db;
};

// Returns dx; fills grads with the effective-kernel gradient, from which
// base and LoRA factor gradients both derive.
Tensor conv_backward(const Tensor& x, const Conv2d& conv, const Tensor& w_eff, const Tensor& dy,
                     ConvGrads& grads);

// dA = B^T * dW_flat, dB = dW_flat * A^T for dW_flat the effective-kernel
// gradient reshaped to (out_ch, fan_in).
void lora_grads(const LoraPair& lora, const ConvGrads& grads, Tensor& da, Tensor& db);

// Group normalization over a (C, H, W) tensor: per group, normalize by the
// group's mean/variance with eps inside the square root, then scale and
// shift per channel. With unit gains and zero shifts an all-zero input maps
// to all-zero output (0 / sqrt(eps) = 0).
struct GroupNorm {
  int channels = 0;
  int groups = 1;
  double eps = 1e-5;
  Tensor gamma;  // (channels), ones
  Tensor beta;   // (channels), zeros
};

GroupNorm make_group_norm(int channels, int groups);

struct GnCache {
  Tensor xhat;                  // normalized input, same shape as x
  std::vector<double> inv_std;  // per group
};

Tensor gn_forward(const Tensor& x, const GroupNorm& gn, GnCache& cache);
Tensor gn_backward(const GroupNorm& gn, const GnCache& cache, const Tensor& dy, Tensor& dgamma,
                   Tensor& dbeta);

// SiLU x * sigmoid(x), elementwise.
Tensor silu(const Tensor& x);
Tensor silu_backward(const Tensor& x, const Tensor& dy);

// Fourier features of a scalar time: channel 2k is sin(2^k pi t), channel
// 2k+1 is cos(2^k pi t), k = 0..3, each broadcast over the spatial grid.
constexpr int kTimeChannels = 8;
Tensor time_features(double t, int height, int width);

// Adam with bias correction. Slots are keyed by parameter name and sized on
// first use; iteration over std::map keeps update order deterministic.
struct AdamSettings {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(const AdamSettings& settings) : cfg_(settings) {}

  // Applies one update to every parameter that has a gradient entry.
  // Parameters without gradients are untouched.
  void step(const std::map<std::string, Tensor*>& params,
            const std::map<std::string, Tensor>& grads);

 private:
  struct Slot {
    Tensor m, v;
  };
  AdamSettings cfg_;
  std::map<std::string, Slot> slots_;
  long steps_ = 0;
};

}  // namespace lvp
