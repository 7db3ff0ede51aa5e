// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "lvp/latent_lab.h"
#include "test_util.h"

using namespace lvp;
using lvp_test::TempDir;

namespace {

Image3f random_image(int h, int w, uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  Image3f img(h, w);
  Pcg32 rng(seed);
  for (float& p : img.pixels) p = lo + float(rng.next_double()) * (hi - lo);
  return img;
}

ProxyStack random_proxy(int frames, int h, int w, uint64_t seed) {
  ProxyStack stack(frames, h, w);
  Pcg32 rng(seed);
  for (float& v : stack.data) v = float(std::abs(rng.next_normal()));
  return stack;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double rel_err(double a, double b, double floor = 1e-5) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// (F, C, H, W) -> frame f as (C, H, W).
Tensor frame_of(const Tensor& t, int f) {
  Tensor out({t.shape[1], t.shape[2], t.shape[3]});
  size_t n = out.numel();
  std::copy(t.data.begin() + size_t(f) * n, t.data.begin() + (size_t(f) + 1) * n,
            out.data.begin());
  return out;
}

Tensor with_time(const Tensor& x0, double t) {
  Tensor tf = time_features(t, x0.shape[1], x0.shape[2]);
  Tensor xin({x0.shape[0] + kTimeChannels, x0.shape[1], x0.shape[2]});
  std::copy(x0.data.begin(), x0.data.end(), xin.data.begin());
  std::copy(tf.data.begin(), tf.data.end(), xin.data.begin() + x0.numel());
  return xin;
}

// Recomputation levels for the finite-difference sweep: a perturbed
// parameter only invalidates the pipeline from its own stage onward, so the
// loss is re-evaluated from the deepest cache that is still valid.
//   0..3  encoder block N     (resume from blocks[N].x)
//   4     encoder head        (resume from head_in)
//   5     alpha               (reuse z_y)
//   6..8  denoiser LoRA N     (reuse xin / act1 / act2)
int resume_level(const std::string& name) {
  if (name == "alpha") return 5;
  if (name.rfind("encoder.head", 0) == 0) return 4;
  if (name.rfind("encoder.block", 0) == 0) return name[13] - '0';
  return 6 + (name[14] - '0');  // denoiser.layerN.lora_*
}

// Loss of the current parameter state, restarted from the caches of an
// earlier forward. With an unperturbed state this must reproduce that
// forward's loss exactly; the gradcheck relies on it only for speed.
double resume_loss(const TrainContext& ctx, const FlowSample& fs, const AdapterState& state,
                   const ToyDenoiser& den, int level) {
  std::array<Tensor, kDenoiserLayers> w_eff;
  for (int j = 0; j < kDenoiserLayers; ++j)
    w_eff[size_t(j)] = level >= 6 ? effective_weight(den.layers[size_t(j)], &state.lora[size_t(j)])
                                  : ctx.w_eff[size_t(j)];
  Tensor pred = ctx.prediction;
  for (int f = 0; f < int(ctx.frames.size()); ++f) {
    const TrainContext::FrameCache& fc = ctx.frames[size_t(f)];
    Tensor x;
    int first_layer = 0;
    if (level >= 6) {
      first_layer = level - 6;
      x = first_layer == 0 ? fc.xin : (first_layer == 1 ? fc.act1 : fc.act2);
    } else {
      Tensor zy_f;
      if (level == 5) {
        zy_f = frame_of(ctx.z_y, f);
      } else {
        Tensor e = level == 4 ? fc.head_in : fc.blocks[size_t(level)].x;
        if (level < 4) {
          for (int j = level; j < 4; ++j) {
            const EncoderBlock& blk = state.encoder.blocks[size_t(j)];
            GnCache c;
            e = silu(gn_forward(conv_forward(e, blk.conv, blk.conv.w), blk.gn, c));
          }
        }
        zy_f = conv_forward(e, state.encoder.head, state.encoder.head.w);
      }
      Tensor x0 = inject_residual(frame_of(fs.z_t, f), zy_f, state.alpha_value());
      x = with_time(x0, ctx.t);
    }
    for (int j = first_layer; j < kDenoiserLayers; ++j) {
      x = conv_forward(x, den.layers[size_t(j)], w_eff[size_t(j)]);
      if (j + 1 < kDenoiserLayers) x = silu(x);
    }
    std::copy(x.data.begin(), x.data.end(), pred.data.begin() + size_t(f) * x.numel());
  }
  return flow_loss(pred, ctx.v_t);
}

// Mean loss over a fixed (sample, t, eps) battery; stable yardstick for
// before/after training comparisons, unlike single-draw trace entries.
double battery_loss(const Dataset& ds, const AdapterState& adapter, const ToyDenoiser& den) {
  const double ts[] = {0.1, 0.3, 0.5, 0.7, 0.9};
  double acc = 0.0;
  int n = 0;
  for (size_t i = 0; i < ds.size(); ++i) {
    for (int k = 0; k < 5; ++k) {
      FlowSample fs =
          sample_flow(ds[i].latent, hash_combine(0xba77e51, uint64_t(i * 8 + size_t(k))), ts[k]);
      TrainContext ctx;
      acc += loss_forward(ds[i], fs, adapter, den, ctx);
      ++n;
    }
  }
  return acc / double(n);
}

}  // namespace

// ---------------------------------------------------------------------------
// Latent codec

TEST_CASE("constant gray image encodes to a pure DC code") {
  for (double c : {0.5, 0.25, 1.0}) {
    Image3f img(32, 48);
    std::fill(img.pixels.begin(), img.pixels.end(), float(c));
    Tensor q = encode_latent(img);
    REQUIRE(q.shape == std::vector<int>{4, 2, 3});
    double dc = c * std::sqrt(768.0);
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 3; ++x) {
        CHECK(std::abs(q.at(0, y, x) - dc) <= 1e-9);
        for (int ch = 1; ch < 4; ++ch) CHECK(std::abs(q.at(ch, y, x)) <= 1e-10);
      }
  }
}

TEST_CASE("decode then encode is the identity on codes") {
  Pcg32 rng(41);
  Tensor q = randn({4, 2, 3}, rng, 1.0);
  Image3f img = decode_latent(q);
  REQUIRE(img.height == 32);
  REQUIRE(img.width == 48);
  Tensor back = encode_latent(img);
  REQUIRE(same_shape(q, back));
  CHECK(max_abs_diff(q.data, back.data) <= 1e-6);
}

TEST_CASE("encode is linear") {
  // Pixels are multiples of 1/64 and the mix uses dyadic coefficients, so
  // the combined image is exact in float and any nonlinearity would be the
  // codec's own.
  Image3f a(32, 32), b(32, 32);
  Pcg32 rng(17);
  for (float& p : a.pixels) p = float(rng.next_below(64)) / 64.0f;
  for (float& p : b.pixels) p = float(rng.next_below(64)) / 64.0f;
  Image3f mix(32, 32);
  for (size_t i = 0; i < mix.pixels.size(); ++i)
    mix.pixels[i] = 0.75f * a.pixels[i] - 0.5f * b.pixels[i];

  Tensor qa = encode_latent(a);
  Tensor qb = encode_latent(b);
  Tensor qm = encode_latent(mix);
  for (size_t i = 0; i < qm.numel(); ++i)
    CHECK(std::abs(qm.data[i] - (0.75 * qa.data[i] - 0.5 * qb.data[i])) <= 1e-9);
}

TEST_CASE("codec basis separates luminance modes and chroma") {
  // Horizontal cosine ramp lights up channel 1 only (plus DC).
  Image3f ramp(16, 16);
  const double pi = 3.14159265358979323846;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      float v = float(0.5 + 0.25 * std::cos(pi * (x + 0.5) / 16.0));
      for (int ch = 0; ch < 3; ++ch) ramp.pixels[(size_t(y) * 16 + x) * 3 + ch] = v;
    }
  Tensor q = encode_latent(ramp);
  CHECK(std::abs(q.at(1, 0, 0)) > 1.0);
  CHECK(std::abs(q.at(2, 0, 0)) < 1e-6);
  CHECK(std::abs(q.at(3, 0, 0)) < 1e-6);

  // A red/blue split with equal luminance lights up chroma.
  Image3f rb(16, 16);
  for (size_t i = 0; i < rb.pixels.size(); i += 3) {
    rb.pixels[i] = 0.8f;
    rb.pixels[i + 1] = 0.5f;
    rb.pixels[i + 2] = 0.2f;
  }
  Tensor qc = encode_latent(rb);
  CHECK(std::abs(qc.at(3, 0, 0)) > 1.0);
  CHECK(std::abs(qc.at(1, 0, 0)) < 1e-6);
  CHECK(std::abs(qc.at(2, 0, 0)) < 1e-6);
}

TEST_CASE("codec rejects images not divisible by the patch size") {
  try {
    encode_latent(Image3f(20, 32));
    FAIL("expected DimensionError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DimensionError);
  }
  try {
    decode_latent(Tensor({3, 2, 2}));  // wrong channel count
    FAIL("expected DimensionError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DimensionError);
  }
}

// ---------------------------------------------------------------------------
// Flow matching

TEST_CASE("flow sample interpolates between noise and data") {
  Pcg32 rng(7);
  Tensor z = randn({1, 4, 2, 2}, rng, 2.0);

  FlowSample at0 = sample_flow(z, 99, 0.0);
  CHECK(at0.z_t.data == at0.eps.data);  // t = 0 is pure noise, bitwise
  FlowSample at1 = sample_flow(z, 99, 1.0);
  CHECK(at1.z_t.data == z.data);  // t = 1 is pure data, bitwise
  CHECK(at1.eps.data == at0.eps.data);

  FlowSample mid = sample_flow(z, 99, 0.5);
  for (size_t i = 0; i < z.numel(); ++i) {
    CHECK(mid.z_t.data[i] ==
          doctest::Approx(0.5 * (z.data[i] + mid.eps.data[i])).epsilon(1e-12));
    CHECK(mid.v_t.data[i] == z.data[i] - mid.eps.data[i]);
  }

  // Same seed reproduces eps bitwise; another seed does not.
  CHECK(sample_flow(z, 99, 0.3).eps.data == at0.eps.data);
  CHECK(sample_flow(z, 100, 0.3).eps.data != at0.eps.data);

  for (double bad : {-0.1, 1.1}) {
    try {
      sample_flow(z, 1, bad);
      FAIL("expected BadT");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::BadT);
    }
  }
}

TEST_CASE("flow loss equals the hand-rolled mean squared error") {
  Pcg32 rng(23);
  Tensor p = randn({2, 4, 3, 3}, rng, 1.5);
  Tensor v = randn({2, 4, 3, 3}, rng, 1.5);
  double acc = 0.0;
  for (size_t i = 0; i < p.numel(); ++i) {
    double d = p.data[i] - v.data[i];
    acc += d * d;
  }
  CHECK(std::abs(flow_loss(p, v) - acc / double(p.numel())) <= 1e-12);
  CHECK(flow_loss(p, p) == 0.0);

  try {
    flow_loss(p, Tensor({2, 4, 3, 2}));
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ShapeMismatch);
  }
}

TEST_CASE("euler sampler recovers the target under the exact velocity field") {
  Pcg32 rng(31);
  Tensor z = randn({1, 4, 2, 2}, rng, 3.0);
  FlowSample fs = sample_flow(z, 4, 0.0);

  // Along the linear path the true velocity is constant, z - eps, so Euler
  // is exact on any grid from t = 0 to t = 1.
  auto velocity = [&](const Tensor&, double) { return fs.v_t; };
  for (std::vector<double> grid :
       {std::vector<double>{0.0, 0.5, 1.0}, std::vector<double>{0.0, 0.25, 1.0},
        std::vector<double>{0.0, 0.1, 0.2, 0.9, 1.0}}) {
    Tensor out = euler_sample(velocity, fs.eps, grid);
    CHECK(max_abs_diff(out.data, z.data) <= 1e-6);
  }

  // A single grid point integrates nothing.
  Tensor still = euler_sample(velocity, fs.eps, {0.0});
  CHECK(still.data == fs.eps.data);
}

// ---------------------------------------------------------------------------
// Conditioning ops

TEST_CASE("inject residual") {
  Pcg32 rng(3);
  Tensor z = randn({1, 4, 2, 2}, rng, 1.0);
  Tensor zy = randn({1, 4, 2, 2}, rng, 100.0);

  SUBCASE("alpha zero returns the input bitwise") {
    Tensor out = inject_residual(z, zy, 0.0);
    CHECK(out.data == z.data);
  }
  SUBCASE("zero conditioning is inert up to rounding") {
    Tensor out = inject_residual(z, Tensor({1, 4, 2, 2}), 0.7);
    CHECK(out.data == z.data);  // z + 0.7 * 0.0 is exact
  }
  SUBCASE("elementwise oracle") {
    Tensor out = inject_residual(z, zy, -0.35);
    for (size_t i = 0; i < z.numel(); ++i)
      CHECK(out.data[i] == doctest::Approx(z.data[i] - 0.35 * zy.data[i]).epsilon(1e-12));
  }
  SUBCASE("shape mismatch") {
    try {
      inject_residual(z, Tensor({1, 4, 2, 3}), 0.5);
      FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::ShapeMismatch);
    }
  }
}

TEST_CASE("proxy encoder output grid and degenerate inputs") {
  AdapterState adapter = make_adapter(11);

  ProxyStack stack = random_proxy(2, 32, 32, 5);
  Tensor z = encode_proxy(stack, adapter);
  REQUIRE(z.shape == std::vector<int>{2, 4, 2, 2});

  // Doubling the frame edge doubles the latent grid.
  CHECK(encode_proxy(random_proxy(1, 64, 64, 6), adapter).shape ==
        std::vector<int>{1, 4, 4, 4});
  CHECK(encode_proxy(random_proxy(1, 32, 48, 6), adapter).shape ==
        std::vector<int>{1, 4, 2, 3});

  // A freshly initialized encoder maps zero radiance to exactly zero codes:
  // biases and GN shifts start at zero and GN fixes 0 / sqrt(eps) = 0.
  Tensor zero = encode_proxy(ProxyStack(1, 32, 32), adapter);
  for (double v : zero.data) CHECK(v == 0.0);

  // Frames encode independently.
  ProxyStack first(1, 32, 32);
  std::copy(stack.data.begin(), stack.data.begin() + std::ptrdiff_t(first.data.size()),
            first.data.begin());
  Tensor z1 = encode_proxy(first, adapter);
  CHECK(std::equal(z1.data.begin(), z1.data.end(), z.data.begin()));

  try {
    encode_proxy(random_proxy(1, 24, 32, 7), adapter);
    FAIL("expected DimensionError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DimensionError);
  }
}

TEST_CASE("fresh adapter leaves the frozen backbone's function unchanged") {
  AdapterState adapter = make_adapter(21);
  ToyDenoiser den = make_denoiser(22);
  Pcg32 rng(23);
  Tensor z_t = randn({2, 4, 2, 2}, rng, 1.0);
  Tensor z_y = randn({2, 4, 2, 2}, rng, 5.0);

  Tensor base = forward_base(z_t, 0.4, den);
  REQUIRE(base.shape == z_t.shape);

  // alpha = 0 and B = 0 make injection and LoRA deltas exactly inert.
  Tensor cond = forward_denoise(z_t, 0.4, z_y, adapter, den);
  CHECK(cond.data == base.data);

  // Perturbing A factors changes nothing while B stays zero.
  for (LoraPair& lp : adapter.lora)
    for (double& v : lp.a.data) v += 3.0;
  CHECK(forward_denoise(z_t, 0.4, z_y, adapter, den).data == base.data);

  // Turning alpha on finally moves the output.
  adapter.alpha.at(0) = 0.5;
  CHECK(forward_denoise(z_t, 0.4, z_y, adapter, den).data != base.data);

  try {
    forward_denoise(z_t, 0.4, Tensor({2, 4, 2, 3}), adapter, den);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ShapeMismatch);
  }
}

TEST_CASE("velocity output is affine in alpha") {
  // Shifting the hidden biases far into SiLU's saturated region makes the
  // activation exactly the identity in double precision, so the whole
  // denoiser becomes affine and the conditioning response must be exactly
  // linear in alpha. Layer 1 weights shrink so its pre-activations stay
  // within the regime.
  AdapterState adapter = make_adapter(31);
  ToyDenoiser den = make_denoiser(32);
  for (double& v : den.layers[0].b.data) v += 100.0;
  for (double& v : den.layers[1].w.data) v *= 0.01;
  for (double& v : den.layers[1].b.data) v += 100.0;

  Pcg32 rng(33);
  Tensor z_t = randn({1, 4, 2, 2}, rng, 1.0);
  Tensor z_y = randn({1, 4, 2, 2}, rng, 1.0);

  // Confirm the saturation argument actually holds for this seed.
  Dataset probe = make_toy_dataset(1, 34, ToySource::syn);
  FlowSample fs = sample_flow(probe[0].latent, 35, 0.5);
  TrainContext ctx;
  loss_forward(probe[0], fs, adapter, den, ctx);
  double min_pre = 1e30;
  for (const auto& fc : ctx.frames) {
    for (double v : fc.pre1.data) min_pre = std::min(min_pre, v);
    for (double v : fc.pre2.data) min_pre = std::min(min_pre, v);
  }
  CHECK(min_pre > 50.0);

  auto at_alpha = [&](double a) {
    adapter.alpha.at(0) = a;
    return forward_denoise(z_t, 0.3, z_y, adapter, den);
  };
  Tensor f0 = at_alpha(0.0);
  Tensor f1 = at_alpha(1.0);
  Tensor slope({1, 4, 2, 2});
  for (size_t i = 0; i < slope.numel(); ++i) slope.data[i] = f1.data[i] - f0.data[i];

  double slope_mag = 0.0;
  for (double v : slope.data) slope_mag = std::max(slope_mag, std::abs(v));
  CHECK(slope_mag > 1e-3);  // conditioning is actually live

  for (double a : {0.25, 0.5, 2.0}) {
    Tensor fa = at_alpha(a);
    for (size_t i = 0; i < fa.numel(); ++i)
      CHECK(std::abs(fa.data[i] - (f0.data[i] + a * slope.data[i])) <= 1e-6);
  }
}

// ---------------------------------------------------------------------------
// Gradients

TEST_CASE("alpha gradient matches finite differences at the stage entry point") {
  // The adapter starts with alpha = 0; the analytic gradient there must
  // agree with a central difference through the full public forward.
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    AdapterState adapter = make_adapter(seed);
    ToyDenoiser den = make_denoiser(seed + 40);
    Dataset ds = make_toy_dataset(1, seed + 80, ToySource::syn);
    FlowSample fs = sample_flow(ds[0].latent, seed + 120, 0.4);

    TrainContext ctx;
    loss_forward(ds[0], fs, adapter, den, ctx);
    double analytic = backward(ctx, adapter, den, Stage::A).at("alpha").at(0);

    const double h = 1e-4;
    auto loss_at = [&](double a) {
      adapter.alpha.at(0) = a;
      TrainContext scratch;
      return loss_forward(ds[0], fs, adapter, den, scratch);
    };
    double fd = (loss_at(h) - loss_at(-h)) / (2.0 * h);
    adapter.alpha.at(0) = 0.0;
    CHECK(std::abs(analytic) > 1e-8);
    CHECK(rel_err(analytic, fd, 1e-6) < 1e-4);
  }
}

TEST_CASE("every trainable gradient matches finite differences") {
  // Full-parameter sweep on seed 1; seeds 2 and 3 repeat biases, gains, and
  // a stride-7 sample of the big conv kernels. Proxies are 16x16 here (the
  // smallest legal frame) to keep the sweep fast; a 32x32 case below covers
  // the off-center LoRA taps that a 1x1 latent grid cannot reach.
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    const bool full = seed == 1;
    AdapterState adapter = make_adapter(seed);
    ToyDenoiser den = make_denoiser(seed + 10);
    adapter.alpha.at(0) = 0.7;  // all paths live
    Pcg32 rng(seed + 20);
    for (LoraPair& lp : adapter.lora)
      for (double& v : lp.b.data) v = 0.05 * rng.next_normal();

    ToySample sample;
    sample.proxy = random_proxy(1, 16, 16, seed + 30);
    sample.latent = randn({1, 4, 1, 1}, rng, 2.0);
    FlowSample fs = sample_flow(sample.latent, seed + 50, 0.35);

    TrainContext ctx;
    double base = loss_forward(sample, fs, adapter, den, ctx);
    REQUIRE(std::isfinite(base));

    // The resume shortcut must reproduce the cached forward exactly before
    // it is trusted for perturbed evaluations.
    for (int level = 0; level <= 8; ++level)
      REQUIRE(resume_loss(ctx, fs, adapter, den, level) ==
              doctest::Approx(base).epsilon(1e-12));

    auto grads = backward(ctx, adapter, den, Stage::C);
    auto table = trainable_table(adapter, den, Stage::C);
    REQUIRE(grads.size() == table.size());

    const double h = 1e-4;
    for (auto& [name, param] : table) {
      const Tensor& g = grads.at(name);
      REQUIRE(same_shape(g, *param));
      int level = resume_level(name);
      size_t stride = (!full && param->numel() > 200) ? 7 : 1;
      double worst = 0.0;
      for (size_t i = 0; i < param->numel(); i += stride) {
        double keep = param->data[i];
        param->data[i] = keep + h;
        double up = resume_loss(ctx, fs, adapter, den, level);
        param->data[i] = keep - h;
        double dn = resume_loss(ctx, fs, adapter, den, level);
        param->data[i] = keep;
        worst = std::max(worst, rel_err(g.data[i], (up - dn) / (2.0 * h)));
      }
      CHECK_MESSAGE(worst < 1e-4, name, " seed ", seed, " worst rel err ", worst);
    }
  }
}

TEST_CASE("lora gradients cover all kernel taps on a 2x2 latent grid") {
  AdapterState adapter = make_adapter(61);
  ToyDenoiser den = make_denoiser(62);
  adapter.alpha.at(0) = 0.4;
  Pcg32 rng(63);
  for (LoraPair& lp : adapter.lora)
    for (double& v : lp.b.data) v = 0.05 * rng.next_normal();

  Dataset ds = make_toy_dataset(1, 64, ToySource::real);
  FlowSample fs = sample_flow(ds[0].latent, 65, 0.6);
  TrainContext ctx;
  double base = loss_forward(ds[0], fs, adapter, den, ctx);
  REQUIRE(std::isfinite(base));
  auto grads = backward(ctx, adapter, den, Stage::B);

  const double h = 1e-4;
  for (int layer = 0; layer < kDenoiserLayers; ++layer) {
    std::string prefix = "denoiser.layer" + std::to_string(layer);
    for (const char* leaf : {".lora_a", ".lora_b"}) {
      Tensor& param =
          leaf[6] == 'a' ? adapter.lora[size_t(layer)].a : adapter.lora[size_t(layer)].b;
      const Tensor& g = grads.at(prefix + leaf);
      double worst = 0.0;
      for (size_t i = 0; i < param.numel(); ++i) {
        double keep = param.data[i];
        param.data[i] = keep + h;
        double up = resume_loss(ctx, fs, adapter, den, 6 + layer);
        param.data[i] = keep - h;
        double dn = resume_loss(ctx, fs, adapter, den, 6 + layer);
        param.data[i] = keep;
        worst = std::max(worst, rel_err(g.data[i], (up - dn) / (2.0 * h)));
      }
      CHECK_MESSAGE(worst < 1e-4, prefix, leaf, " worst rel err ", worst);
    }
  }
}

// ---------------------------------------------------------------------------
// Toy dataset

TEST_CASE("toy dataset layout and determinism") {
  Dataset ds = make_toy_dataset(3, 9, ToySource::syn);
  REQUIRE(ds.size() == 3);
  for (const ToySample& s : ds) {
    CHECK(s.proxy.frames == 1);
    CHECK(s.proxy.height == 32);
    CHECK(s.proxy.width == 32);
    CHECK(s.latent.shape == std::vector<int>{1, 4, 2, 2});
    for (float v : s.proxy.data) {
      CHECK(v >= 0.0f);  // clamped radiance
      CHECK(std::isfinite(v));
    }
  }

  Dataset again = make_toy_dataset(3, 9, ToySource::syn);
  CHECK(again[1].latent.data == ds[1].latent.data);
  CHECK(again[1].proxy.data == ds[1].proxy.data);
  CHECK(make_toy_dataset(3, 10, ToySource::syn)[1].latent.data != ds[1].latent.data);
  CHECK(make_toy_dataset(3, 9, ToySource::real)[1].latent.data != ds[1].latent.data);
}

// ---------------------------------------------------------------------------
// Stage runner

TEST_CASE("stage A trains only the adapter and leaves the backbone frozen") {
  Dataset ds = make_toy_dataset(4, 71, ToySource::syn);
  AdapterState adapter = make_adapter(72);
  ToyDenoiser den = make_denoiser(73);
  std::array<std::vector<double>, kDenoiserLayers> w_before;
  for (int j = 0; j < kDenoiserLayers; ++j) w_before[size_t(j)] = den.layers[size_t(j)].w.data;
  std::vector<double> lora_a_before = adapter.lora[0].a.data;
  std::vector<double> head_before = adapter.encoder.head.w.data;

  StageConfig cfg;
  cfg.stage = Stage::A;
  TrainResult res = run_stage(cfg, ds, nullptr, 5, AdamSettings{}, 74, adapter, den);

  REQUIRE(res.loss_trace.size() == 5);
  for (double l : res.loss_trace) CHECK(std::isfinite(l));

  for (int j = 0; j < kDenoiserLayers; ++j)
    CHECK(res.denoiser.layers[size_t(j)].w.data == w_before[size_t(j)]);  // frozen, bitwise
  CHECK(res.adapter.lora[0].a.data == lora_a_before);
  for (const LoraPair& lp : res.adapter.lora)
    for (double v : lp.b.data) CHECK(v == 0.0);  // untouched in stage A
  CHECK(res.adapter.alpha_value() != 0.0);
  CHECK(res.adapter.encoder.head.w.data != head_before);
}

TEST_CASE("stage B picks up exactly where stage A left off") {
  Dataset ds = make_toy_dataset(4, 81, ToySource::syn);
  StageConfig a_cfg, b_cfg;
  a_cfg.stage = Stage::A;
  b_cfg.stage = Stage::B;

  TrainResult after_a =
      run_stage(a_cfg, ds, nullptr, 8, AdamSettings{}, 82, make_adapter(83), make_denoiser(84));

  // Same seed, same data: the step-0 loss of a stage-B run equals the loss
  // stage A would see, because LoRA B is still zero and both stages draw the
  // same (sample, t, eps) stream.
  TrainResult b_run = run_stage(b_cfg, ds, nullptr, 3, AdamSettings{}, 85, after_a.adapter,
                                after_a.denoiser);
  TrainResult a_run = run_stage(a_cfg, ds, nullptr, 3, AdamSettings{}, 85, after_a.adapter,
                                after_a.denoiser);
  CHECK(b_run.loss_trace[0] == a_run.loss_trace[0]);

  // With lr = 0 the model never moves, so the full traces coincide bitwise.
  AdamSettings frozen;
  frozen.lr = 0.0;
  TrainResult b0 = run_stage(b_cfg, ds, nullptr, 4, frozen, 86, after_a.adapter, after_a.denoiser);
  TrainResult a0 = run_stage(a_cfg, ds, nullptr, 4, frozen, 86, after_a.adapter, after_a.denoiser);
  CHECK(b0.loss_trace == a0.loss_trace);
  CHECK(b0.adapter.alpha_value() == after_a.adapter.alpha_value());

  // Stage B actually starts moving the LoRA factors.
  bool lora_moved = false;
  for (const LoraPair& lp : b_run.adapter.lora)
    for (double v : lp.b.data) lora_moved = lora_moved || v != 0.0;
  CHECK(lora_moved);
}

TEST_CASE("stage C alternates sources one to one") {
  // lr = 0 keeps the model fixed, and the secondary set's latents are scaled
  // by 1000, so each trace entry reveals which source fed that step.
  Dataset prim = make_toy_dataset(2, 91, ToySource::syn);
  Dataset sec = make_toy_dataset(2, 92, ToySource::real);
  for (ToySample& s : sec)
    for (double& v : s.latent.data) v *= 1000.0;

  StageConfig cfg;
  cfg.stage = Stage::C;
  AdamSettings frozen;
  frozen.lr = 0.0;
  TrainResult res =
      run_stage(cfg, prim, &sec, 10, frozen, 93, make_adapter(94), make_denoiser(95));

  REQUIRE(res.loss_trace.size() == 10);
  int prim_steps = 0, sec_steps = 0;
  for (size_t k = 0; k < res.loss_trace.size(); ++k) {
    bool from_sec = res.loss_trace[k] > 1e4;
    if (from_sec)
      ++sec_steps;
    else
      ++prim_steps;
    CHECK(from_sec == (k % 2 == 1));  // primary first, then strict alternation
    if (!from_sec) CHECK(res.loss_trace[k] < 1e3);
  }
  CHECK(prim_steps == 5);
  CHECK(sec_steps == 5);
}

TEST_CASE("stage runner input validation") {
  Dataset ds = make_toy_dataset(2, 96, ToySource::syn);
  Dataset empty;
  StageConfig a_cfg, c_cfg;
  a_cfg.stage = Stage::A;
  c_cfg.stage = Stage::C;

  try {
    run_stage(a_cfg, empty, nullptr, 1, AdamSettings{}, 1, make_adapter(1), make_denoiser(1));
    FAIL("expected EmptyDataset");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyDataset);
  }
  try {
    run_stage(c_cfg, ds, nullptr, 2, AdamSettings{}, 1, make_adapter(1), make_denoiser(1));
    FAIL("expected MissingSource");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingSource);
  }
  try {
    run_stage(c_cfg, ds, &empty, 2, AdamSettings{}, 1, make_adapter(1), make_denoiser(1));
    FAIL("expected MissingSource");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingSource);
  }
  try {
    run_stage(a_cfg, ds, nullptr, -1, AdamSettings{}, 1, make_adapter(1), make_denoiser(1));
    FAIL("expected BadParameter");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BadParameter);
  }

  // Zero steps is a no-op, not an error.
  AdapterState adapter = make_adapter(2);
  TrainResult res = run_stage(a_cfg, ds, nullptr, 0, AdamSettings{}, 1, adapter, make_denoiser(2));
  CHECK(res.loss_trace.empty());
  CHECK(res.adapter.encoder.head.w.data == adapter.encoder.head.w.data);
}

TEST_CASE("training runs are bit-reproducible") {
  Dataset prim = make_toy_dataset(3, 97, ToySource::syn);
  Dataset sec = make_toy_dataset(3, 98, ToySource::real);
  StageConfig cfg;
  cfg.stage = Stage::C;

  auto run = [&](uint64_t seed) {
    return run_stage(cfg, prim, &sec, 6, AdamSettings{}, seed, make_adapter(99),
                     make_denoiser(100));
  };
  TrainResult r1 = run(7);
  TrainResult r2 = run(7);
  CHECK(r1.loss_trace == r2.loss_trace);
  CHECK(r1.adapter.alpha.data == r2.adapter.alpha.data);
  CHECK(r1.adapter.encoder.head.w.data == r2.adapter.encoder.head.w.data);
  for (int j = 0; j < kDenoiserLayers; ++j)
    CHECK(r1.adapter.lora[size_t(j)].b.data == r2.adapter.lora[size_t(j)].b.data);

  CHECK(run(8).loss_trace != r1.loss_trace);
}

TEST_CASE("adapter stages cut the flow loss on the toy task") {
  // Reduced-step sanity check; the acceptance gate runs the full budget.
  Dataset ds = make_toy_dataset(16, 101, ToySource::syn);
  AdapterState adapter = make_adapter(102);
  ToyDenoiser den = make_denoiser(103);
  double before = battery_loss(ds, adapter, den);

  StageConfig a_cfg, b_cfg;
  a_cfg.stage = Stage::A;
  b_cfg.stage = Stage::B;
  TrainResult after_a = run_stage(a_cfg, ds, nullptr, 60, AdamSettings{}, 104, adapter, den);
  TrainResult after_b = run_stage(b_cfg, ds, nullptr, 140, AdamSettings{}, 105, after_a.adapter,
                                  after_a.denoiser);
  double after = battery_loss(ds, after_b.adapter, after_b.denoiser);

  CHECK(after < 0.75 * before);
}

// ---------------------------------------------------------------------------
// Checkpoints and traces

TEST_CASE("checkpoint round trip preserves float-quantized parameters") {
  TempDir dir("ckpt");
  AdapterState adapter = make_adapter(111);
  ToyDenoiser den = make_denoiser(112);
  Pcg32 rng(113);
  adapter.alpha.at(0) = 0.625;
  for (LoraPair& lp : adapter.lora)
    for (double& v : lp.b.data) v = 0.25 * rng.next_normal();

  for (Stage stage : {Stage::A, Stage::B, Stage::C}) {
    std::string path = dir.file("model.ckpt");
    save_checkpoint(path, adapter, den, stage);
    Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.stage == stage);

    auto orig = parameter_table(adapter, den);
    auto back = parameter_table(loaded.adapter, loaded.denoiser);
    REQUIRE(orig.size() == back.size());
    for (auto& [name, tensor] : orig) {
      const Tensor& restored = *back.at(name);
      REQUIRE(same_shape(*tensor, restored));
      for (size_t i = 0; i < tensor->numel(); ++i)
        CHECK(restored.data[i] == double(float(tensor->data[i])));  // exact after quantization
    }
  }
}

TEST_CASE("checkpoint loader rejects malformed files") {
  TempDir dir("ckpt_bad");
  save_checkpoint(dir.file("good.ckpt"), make_adapter(1), make_denoiser(2), Stage::B);
  std::ifstream in(dir.file("good.ckpt"), std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  in.close();
  REQUIRE(bytes.size() > 64);

  {
    std::ofstream out(dir.file("magic.ckpt"), std::ios::binary);
    std::string bad = bytes;
    bad[0] = 'X';
    out.write(bad.data(), std::streamsize(bad.size()));
    out.close();
    try {
      load_checkpoint(dir.file("magic.ckpt"));
      FAIL("expected BadMagic");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::BadMagic);
    }
  }
  {
    std::ofstream out(dir.file("version.ckpt"), std::ios::binary);
    std::string bad = bytes;
    bad[4] = 2;  // little-endian version field
    out.write(bad.data(), std::streamsize(bad.size()));
    out.close();
    try {
      load_checkpoint(dir.file("version.ckpt"));
      FAIL("expected BadMagic");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::BadMagic);
    }
  }
  {
    std::ofstream out(dir.file("cut.ckpt"), std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size() / 3));
    out.close();
    try {
      load_checkpoint(dir.file("cut.ckpt"));
      FAIL("expected TruncatedFile");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::TruncatedFile);
    }
  }
  try {
    load_checkpoint(dir.file("absent.ckpt"));
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IoError);
  }
}

TEST_CASE("loss trace csv") {
  TempDir dir("csv");
  save_loss_csv(dir.file("trace.csv"), {0.5, 0.25, 2.0});
  std::ifstream in(dir.file("trace.csv"));
  std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text == "step,loss\n0,0.5\n1,0.25\n2,2\n");
}
