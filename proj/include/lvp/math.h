// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace lvp {

inline constexpr double kPi = 3.14159265358979323846;

inline double radians(double deg) { return deg * kPi / 180.0; }
inline double degrees(double rad) { return rad * 180.0 / kPi; }

// ---------------------------------------------------------------- Vec3

struct Vec3 {
  double x = 0, y = 0, z = 0;

  double& operator[](int i) { return (&x)[i]; }
  double operator[](int i) const { return (&x)[i]; }
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
inline Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
inline Vec3 operator*(double s, Vec3 a) { return a * s; }
inline Vec3 operator/(Vec3 a, double s) { return {a.x / s, a.y / s, a.z / s}; }
inline Vec3& operator+=(Vec3& a, Vec3 b) { a = a + b; return a; }
inline Vec3& operator-=(Vec3& a, Vec3 b) { a = a - b; return a; }
inline Vec3& operator*=(Vec3& a, double s) { a = a * s; return a; }
inline bool operator==(Vec3 a, Vec3 b) { return a.x == b.x && a.y == b.y && a.z == b.z; }

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double length_squared(Vec3 a) { return dot(a, a); }
inline double length(Vec3 a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalize(Vec3 a) {
  double l = length(a);
  return l > 0 ? a / l : a;
}
inline Vec3 min(Vec3 a, Vec3 b) {
  return {std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)};
}
inline Vec3 max(Vec3 a, Vec3 b) {
  return {std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)};
}
inline bool is_finite(Vec3 a) {
  return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}
inline Vec3 lerp(Vec3 a, Vec3 b, double t) { return a * (1.0 - t) + b * t; }

// ---------------------------------------------------------------- Mat3
// Column-major 3x3, columns are the images of the basis vectors.

struct Mat3 {
  Vec3 col[3];  // col[j] = M * e_j

  static Mat3 identity() { return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }
};

inline Vec3 operator*(const Mat3& m, Vec3 v) {
  return m.col[0] * v.x + m.col[1] * v.y + m.col[2] * v.z;
}
inline Mat3 operator*(const Mat3& a, const Mat3& b) {
  return {{a * b.col[0], a * b.col[1], a * b.col[2]}};
}
inline Mat3 transpose(const Mat3& m) {
  return {{{m.col[0].x, m.col[1].x, m.col[2].x},
           {m.col[0].y, m.col[1].y, m.col[2].y},
           {m.col[0].z, m.col[1].z, m.col[2].z}}};
}

// ---------------------------------------------------------------- Quat
// Unit quaternion, (w, x, y, z), rotating world-frame vectors.

struct Quat {
  double w = 1, x = 0, y = 0, z = 0;
};

inline Quat operator*(Quat a, Quat b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}
inline Quat conjugate(Quat q) { return {q.w, -q.x, -q.y, -q.z}; }
inline double dot(Quat a, Quat b) { return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(Quat q) { return std::sqrt(dot(q, q)); }
inline Quat normalize(Quat q) {
  double n = norm(q);
  return n > 0 ? Quat{q.w / n, q.x / n, q.y / n, q.z / n} : Quat{};
}
inline Quat operator-(Quat q) { return {-q.w, -q.x, -q.y, -q.z}; }

inline Vec3 rotate(Quat q, Vec3 v) {
  // v' = q (0,v) q*
  Vec3 u{q.x, q.y, q.z};
  return 2.0 * dot(u, v) * u + (q.w * q.w - dot(u, u)) * v + 2.0 * q.w * cross(u, v);
}

inline Quat quat_from_axis_angle(Vec3 axis, double angle_rad) {
  Vec3 a = normalize(axis);
  double h = 0.5 * angle_rad;
  double s = std::sin(h);
  return {std::cos(h), a.x * s, a.y * s, a.z * s};
}

inline Mat3 quat_to_mat3(Quat q) {
  double w = q.w, x = q.x, y = q.y, z = q.z;
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y + w * z), 2 * (x * z - w * y)},
           {2 * (x * y - w * z), 1 - 2 * (x * x + z * z), 2 * (y * z + w * x)},
           {2 * (x * z + w * y), 2 * (y * z - w * x), 1 - 2 * (x * x + y * y)}}};
}

// Robust rotation-matrix to quaternion (Shepperd's method).
inline Quat mat3_to_quat(const Mat3& m) {
  double m00 = m.col[0].x, m01 = m.col[1].x, m02 = m.col[2].x;
  double m10 = m.col[0].y, m11 = m.col[1].y, m12 = m.col[2].y;
  double m20 = m.col[0].z, m21 = m.col[1].z, m22 = m.col[2].z;
  double tr = m00 + m11 + m22;
  Quat q;
  if (tr > 0) {
    double s = std::sqrt(tr + 1.0) * 2;
    q = {0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s};
  } else if (m00 > m11 && m00 > m22) {
    double s = std::sqrt(1.0 + m00 - m11 - m22) * 2;
    q = {(m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s};
  } else if (m11 > m22) {
    double s = std::sqrt(1.0 + m11 - m00 - m22) * 2;
    q = {(m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s};
  } else {
    double s = std::sqrt(1.0 + m22 - m00 - m11) * 2;
    q = {(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s};
  }
  return normalize(q);
}

// Shortest-arc spherical linear interpolation. Falls back to nlerp for
// nearly parallel inputs.
inline Quat slerp(Quat a, Quat b, double t) {
  double d = dot(a, b);
  if (d < 0) {
    b = -b;
    d = -d;
  }
  if (d > 1.0 - 1e-12) {
    Quat q{a.w + (b.w - a.w) * t, a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t,
           a.z + (b.z - a.z) * t};
    return normalize(q);
  }
  double theta = std::acos(std::clamp(d, -1.0, 1.0));
  double sa = std::sin((1.0 - t) * theta) / std::sin(theta);
  double sb = std::sin(t * theta) / std::sin(theta);
  return normalize(Quat{a.w * sa + b.w * sb, a.x * sa + b.x * sb, a.y * sa + b.y * sb,
                        a.z * sa + b.z * sb});
}

// Rotation angle in radians (smallest, in [0, pi]).
inline double rotation_angle(Quat q) {
  double w = std::clamp(std::abs(normalize(q).w), 0.0, 1.0);
  return 2.0 * std::acos(w);
}

// ---------------------------------------------------------------- Aabb

struct Aabb {
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};

  bool empty() const { return lo.x > hi.x; }
  Vec3 center() const { return (lo + hi) * 0.5; }
  Vec3 half_extents() const { return (hi - lo) * 0.5; }
  Vec3 extents() const { return hi - lo; }
  double max_extent() const {
    Vec3 e = extents();
    return std::max({e.x, e.y, e.z});
  }
  void expand(Vec3 p) {
    lo = min(lo, p);
    hi = max(hi, p);
  }
  void expand(const Aabb& b) {
    lo = min(lo, b.lo);
    hi = max(hi, b.hi);
  }
  Aabb translated(Vec3 t) const { return {lo + t, hi + t}; }
};

}  // namespace lvp
