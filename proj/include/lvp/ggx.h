// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "lvp/math.h"

namespace lvp {

// GGX normal distribution D(h) = a^2 / (pi ((n.h)^2 (a^2 - 1) + 1)^2),
// evaluated at cos_h = n.h. Zero for cos_h <= 0. Satisfies the projected-area
// normalization: integral of D(h) (n.h) over the hemisphere equals 1.
double ggx_ndf(double cos_h, double alpha);

// Cook-Torrance specular BRDF D * F * G / (4 (n.v)(n.l)) with GGX D, Smith
// height-correlated G and Schlick Fresnel from scalar f0. Inputs must be
// unit vectors; returns 0 when n.v <= 0 or n.l <= 0 (grazing and degenerate
// configurations are not errors). Symmetric in v and l.
double ggx_brdf(const Vec3& n, const Vec3& v, const Vec3& l, double alpha, double f0);

// Orthonormal tangent frame for unit vector n (Duff et al. construction).
void make_onb(const Vec3& n, Vec3* t1, Vec3* t2);

// Cosine-weighted unit direction around n from uniforms (u1, u2); u1 maps
// monotonically onto n.l, so stratifying u1 stratifies the elevation.
// pdf(l) = (n.l) / pi over the upper hemisphere.
Vec3 sample_cosine(const Vec3& n, double u1, double u2);
double pdf_cosine(const Vec3& n, const Vec3& l);

// GGX NDF-sampled half-vector around n; u1 maps monotonically onto n.h.
// pdf(h) = D(n.h) (n.h) over the upper hemisphere.
Vec3 sample_ggx_half(const Vec3& n, double alpha, double u1, double u2);

// Density of the reflected direction l = 2 (v.h) h - v under NDF half-vector
// sampling: D(n.h) (n.h) / (4 (v.h)). Zero when the half-vector is invalid.
double pdf_ggx_reflect(const Vec3& n, const Vec3& v, const Vec3& l, double alpha);

}  // namespace lvp
