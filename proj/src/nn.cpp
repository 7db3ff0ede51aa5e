// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#include "lvp/nn.h"

#include <cmath>

namespace lvp {

Conv2d make_conv(int in_ch, int out_ch, int ksize, int stride, int pad, Pcg32& rng) {
  Conv2d conv;
  conv.in_ch = in_ch;
  conv.out_ch = out_ch;
  conv.ksize = ksize;
  conv.stride = stride;
  conv.pad = pad;
  double scale = 1.0 / std::sqrt(double(in_ch) * ksize * ksize);
  conv.w = randn({out_ch, in_ch, ksize, ksize}, rng, scale);
  conv.b = Tensor({out_ch});
  return conv;
}

LoraPair make_lora(const Conv2d& conv, int rank, Pcg32& rng) {
  int fan_in = conv.in_ch * conv.ksize * conv.ksize;
  LoraPair lora;
  lora.a = randn({rank, fan_in}, rng, 1.0 / std::sqrt(double(fan_in)));
  lora.b = Tensor({conv.out_ch, rank});  // zero: delta starts inert
  return lora;
}

Tensor effective_weight(const Conv2d& conv, const LoraPair* lora) {
  Tensor w = conv.w;
  if (!lora) return w;
  int rank = lora->a.shape[0];
  int fan_in = lora->a.shape[1];
  for (int o = 0; o < conv.out_ch; ++o)
    for (int f = 0; f < fan_in; ++f) {
      double delta = 0.0;
      for (int r = 0; r < rank; ++r) delta += lora->b.at(o, r) * lora->a.at(r, f);
      w.data[size_t(o) * fan_in + f] += delta;
    }
  return w;
}

static int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

Tensor conv_forward(const Tensor& x, const Conv2d& conv, const Tensor& w_eff) {
  if (x.shape.size() != 3 || x.shape[0] != conv.in_ch)
    throw Error(Errc::ShapeMismatch, "conv input channel mismatch");
  int h = x.shape[1], w = x.shape[2];
  int oh = conv_out_dim(h, conv.ksize, conv.stride, conv.pad);
  int ow = conv_out_dim(w, conv.ksize, conv.stride, conv.pad);
  Tensor y({conv.out_ch, oh, ow});
  for (int o = 0; o < conv.out_ch; ++o)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = conv.b.at(o);
        for (int i = 0; i < conv.in_ch; ++i)
          for (int ky = 0; ky < conv.ksize; ++ky) {
            int iy = oy * conv.stride + ky - conv.pad;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < conv.ksize; ++kx) {
              int ix = ox * conv.stride + kx - conv.pad;
              if (ix < 0 || ix >= w) continue;
              acc += w_eff.at(o, i, ky, kx) * x.at(i, iy, ix);
            }
          }
        y.at(o, oy, ox) = acc;
      }
  return y;
}

Tensor conv_backward(const Tensor& x, const Conv2d& conv, const Tensor& w_eff, const Tensor& dy,
                     ConvGrads& grads) {
  int h = x.shape[1], w = x.shape[2];
  int oh = dy.shape[1], ow = dy.shape[2];
  Tensor dx(x.shape);
  grads.dw = Tensor(w_eff.shape);
  grads.db = Tensor({conv.out_ch});
  for (int o = 0; o < conv.out_ch; ++o)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double g = dy.at(o, oy, ox);
        if (g == 0.0) continue;
        grads.db.at(o) += g;
        for (int i = 0; i < conv.in_ch; ++i)
          for (int ky = 0; ky < conv.ksize; ++ky) {
            int iy = oy * conv.stride + ky - conv.pad;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < conv.ksize; ++kx) {
              int ix = ox * conv.stride + kx - conv.pad;
              if (ix < 0 || ix >= w) continue;
              grads.dw.at(o, i, ky, kx) += g * x.at(i, iy, ix);
              dx.at(i, iy, ix) += g * w_eff.at(o, i, ky, kx);
            }
          }
      }
  return dx;
}

void lora_grads(const LoraPair& lora, const ConvGrads& grads, Tensor& da, Tensor& db) {
  int rank = lora.a.shape[0];
  int fan_in = lora.a.shape[1];
  int out_ch = lora.b.shape[0];
  da = Tensor(lora.a.shape);
  db = Tensor(lora.b.shape);
  for (int o = 0; o < out_ch; ++o)
    for (int f = 0; f < fan_in; ++f) {
      double g = grads.dw.data[size_t(o) * fan_in + f];
      for (int r = 0; r < rank; ++r) {
        da.at(r, f) += lora.b.at(o, r) * g;
        db.at(o, r) += g * lora.a.at(r, f);
      }
    }
}

GroupNorm make_group_norm(int channels, int groups) {
  GroupNorm gn;
  gn.channels = channels;
  gn.groups = groups;
  gn.gamma = Tensor({channels});
  gn.beta = Tensor({channels});
  for (double& v : gn.gamma.data) v = 1.0;
  return gn;
}

Tensor gn_forward(const Tensor& x, const GroupNorm& gn, GnCache& cache) {
  if (x.shape[0] != gn.channels) throw Error(Errc::ShapeMismatch, "group norm channel mismatch");
  int ch = x.shape[0], h = x.shape[1], w = x.shape[2];
  int per = ch / gn.groups;
  size_t plane = size_t(h) * w;
  cache.xhat = Tensor(x.shape);
  cache.inv_std.assign(gn.groups, 0.0);
  Tensor y(x.shape);
  for (int g = 0; g < gn.groups; ++g) {
    size_t lo = size_t(g) * per * plane;
    size_t n = size_t(per) * plane;
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += x.data[lo + i];
    mean /= double(n);
    double var = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double d = x.data[lo + i] - mean;
      var += d * d;
    }
    var /= double(n);
    double inv = 1.0 / std::sqrt(var + gn.eps);
    cache.inv_std[g] = inv;
    for (size_t i = 0; i < n; ++i) cache.xhat.data[lo + i] = (x.data[lo + i] - mean) * inv;
  }
  for (int c = 0; c < ch; ++c) {
    size_t lo = size_t(c) * plane;
    for (size_t i = 0; i < plane; ++i)
      y.data[lo + i] = gn.gamma.at(c) * cache.xhat.data[lo + i] + gn.beta.at(c);
  }
  return y;
}

Tensor gn_backward(const GroupNorm& gn, const GnCache& cache, const Tensor& dy, Tensor& dgamma,
                   Tensor& dbeta) {
  int ch = dy.shape[0], h = dy.shape[1], w = dy.shape[2];
  int per = ch / gn.groups;
  size_t plane = size_t(h) * w;
  dgamma = Tensor({ch});
  dbeta = Tensor({ch});
  for (int c = 0; c < ch; ++c) {
    size_t lo = size_t(c) * plane;
    for (size_t i = 0; i < plane; ++i) {
      dgamma.at(c) += dy.data[lo + i] * cache.xhat.data[lo + i];
      dbeta.at(c) += dy.data[lo + i];
    }
  }
  Tensor dx(dy.shape);
  for (int g = 0; g < gn.groups; ++g) {
    size_t lo = size_t(g) * per * plane;
    size_t n = size_t(per) * plane;
    // dxhat = dy * gamma; dx = inv_std/n * (n*dxhat - sum(dxhat)
    //                                       - xhat * sum(dxhat*xhat))
    double sum1 = 0.0, sum2 = 0.0;
    for (size_t i = 0; i < n; ++i) {
      int c = int((lo + i) / plane);
      double dxhat = dy.data[lo + i] * gn.gamma.at(c);
      sum1 += dxhat;
      sum2 += dxhat * cache.xhat.data[lo + i];
    }
    double inv = cache.inv_std[g] / double(n);
    for (size_t i = 0; i < n; ++i) {
      int c = int((lo + i) / plane);
      double dxhat = dy.data[lo + i] * gn.gamma.at(c);
      dx.data[lo + i] = inv * (double(n) * dxhat - sum1 - cache.xhat.data[lo + i] * sum2);
    }
  }
  return dx;
}

Tensor silu(const Tensor& x) {
  Tensor y(x.shape);
  for (size_t i = 0; i < x.numel(); ++i) {
    double s = 1.0 / (1.0 + std::exp(-x.data[i]));
    y.data[i] = x.data[i] * s;
  }
  return y;
}

Tensor silu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx(x.shape);
  for (size_t i = 0; i < x.numel(); ++i) {
    double s = 1.0 / (1.0 + std::exp(-x.data[i]));
    dx.data[i] = dy.data[i] * s * (1.0 + x.data[i] * (1.0 - s));
  }
  return dx;
}

Tensor time_features(double t, int height, int width) {
  Tensor f({kTimeChannels, height, width});
  for (int k = 0; k < kTimeChannels / 2; ++k) {
    double arg = std::ldexp(3.14159265358979323846 * t, k);  // 2^k * pi * t
    double sv = std::sin(arg), cv = std::cos(arg);
    size_t plane = size_t(height) * width;
    for (size_t i = 0; i < plane; ++i) {
      f.data[size_t(2 * k) * plane + i] = sv;
      f.data[size_t(2 * k + 1) * plane + i] = cv;
    }
  }
  return f;
}

void Adam::step(const std::map<std::string, Tensor*>& params,
                const std::map<std::string, Tensor>& grads) {
  ++steps_;
  double c1 = 1.0 - std::pow(cfg_.beta1, double(steps_));
  double c2 = 1.0 - std::pow(cfg_.beta2, double(steps_));
  for (const auto& [name, grad] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw Error(Errc::BadParameter, "gradient for unknown parameter " + name);
    Tensor& p = *it->second;
    if (!same_shape(p, grad)) throw Error(Errc::ShapeMismatch, "gradient shape mismatch for " + name);
    Slot& slot = slots_[name];
    if (slot.m.numel() != p.numel()) {
      slot.m = Tensor(p.shape);
      slot.v = Tensor(p.shape);
    }
    for (size_t i = 0; i < p.numel(); ++i) {
      double g = grad.data[i];
      slot.m.data[i] = cfg_.beta1 * slot.m.data[i] + (1.0 - cfg_.beta1) * g;
      slot.v.data[i] = cfg_.beta2 * slot.v.data[i] + (1.0 - cfg_.beta2) * g * g;
      double mhat = slot.m.data[i] / c1;
      double vhat = slot.v.data[i] / c2;
      p.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace lvp
