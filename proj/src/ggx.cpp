// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#include "lvp/ggx.h"

#include <algorithm>
#include <cmath>

namespace lvp {

double ggx_ndf(double cos_h, double alpha) {
  if (cos_h <= 0.0) return 0.0;
  double a2 = alpha * alpha;
  double d = cos_h * cos_h * (a2 - 1.0) + 1.0;
  return a2 / (kPi * d * d);
}

double ggx_brdf(const Vec3& n, const Vec3& v, const Vec3& l, double alpha, double f0) {
  double nv = dot(n, v);
  double nl = dot(n, l);
  if (nv <= 0.0 || nl <= 0.0) return 0.0;
  Vec3 h = v + l;
  double hn = length(h);
  if (hn < 1e-12) return 0.0;  // v and l exactly opposite
  h = h / hn;
  double nh = dot(n, h);
  double vh = dot(v, h);
  if (nh <= 0.0 || vh <= 0.0) return 0.0;
  double d = ggx_ndf(nh, alpha);
  double fresnel = f0 + (1.0 - f0) * std::pow(1.0 - vh, 5.0);
  // Height-correlated Smith visibility V = G / (4 nv nl).
  double a2 = alpha * alpha;
  double lv = nl * std::sqrt(nv * nv * (1.0 - a2) + a2);
  double ll = nv * std::sqrt(nl * nl * (1.0 - a2) + a2);
  double vis = 0.5 / (lv + ll);
  return d * fresnel * vis;
}

void make_onb(const Vec3& n, Vec3* t1, Vec3* t2) {
  double s = std::copysign(1.0, n.z);
  double a = -1.0 / (s + n.z);
  double b = n.x * n.y * a;
  *t1 = Vec3{1.0 + s * n.x * n.x * a, s * b, -s * n.x};
  *t2 = Vec3{b, s + n.y * n.y * a, -n.y};
}

Vec3 sample_cosine(const Vec3& n, double u1, double u2) {
  double mu = std::sqrt(u1);
  double r = std::sqrt(std::max(0.0, 1.0 - u1));
  double phi = 2.0 * kPi * u2;
  Vec3 t1, t2;
  make_onb(n, &t1, &t2);
  return n * mu + (t1 * std::cos(phi) + t2 * std::sin(phi)) * r;
}

double pdf_cosine(const Vec3& n, const Vec3& l) {
  double nl = dot(n, l);
  return nl > 0.0 ? nl / kPi : 0.0;
}

Vec3 sample_ggx_half(const Vec3& n, double alpha, double u1, double u2) {
  u1 = std::min(u1, 1.0 - 1e-12);  // keep tan^2 finite
  double tan2 = alpha * alpha * u1 / (1.0 - u1);
  double mu = 1.0 / std::sqrt(1.0 + tan2);
  double r = std::sqrt(std::max(0.0, 1.0 - mu * mu));
  double phi = 2.0 * kPi * u2;
  Vec3 t1, t2;
  make_onb(n, &t1, &t2);
  return n * mu + (t1 * std::cos(phi) + t2 * std::sin(phi)) * r;
}

double pdf_ggx_reflect(const Vec3& n, const Vec3& v, const Vec3& l, double alpha) {
  Vec3 h = v + l;
  double hn = length(h);
  if (hn < 1e-12) return 0.0;
  h = h / hn;
  double nh = dot(n, h);
  double vh = dot(v, h);
  if (nh <= 0.0 || vh <= 0.0) return 0.0;
  return ggx_ndf(nh, alpha) * nh / (4.0 * vh);
}

}  // namespace lvp
