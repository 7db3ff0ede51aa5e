// Copyright (c) 2026 lvproxy contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <initializer_list>
#include <vector>

#include "lvp/error.h"
#include "lvp/rng.h"

namespace lvp {

// Dense row-major double tensor of rank 1..4. Training math runs entirely in
// double so finite-difference gradient checks resolve to < 1e-4 relative
// error; checkpoints quantize to float32 on disk.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw Error(Errc::DimensionError, "tensor dimensions must be positive");
      n *= size_t(d);
    }
    data.assign(n, 0.0);
  }

  size_t numel() const { return data.size(); }

  double& at(int a) { return data[size_t(a)]; }
  double at(int a) const { return data[size_t(a)]; }
  double& at(int a, int b) { return data[size_t(a) * shape[1] + b]; }
  double at(int a, int b) const { return data[size_t(a) * shape[1] + b]; }
  double& at(int a, int b, int c) { return data[(size_t(a) * shape[1] + b) * shape[2] + c]; }
  double at(int a, int b, int c) const { return data[(size_t(a) * shape[1] + b) * shape[2] + c]; }
  double& at(int a, int b, int c, int d) {
    return data[((size_t(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
  }
  double at(int a, int b, int c, int d) const {
    return data[((size_t(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
  }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

inline Tensor randn(std::vector<int> shape, Pcg32& rng, double scale) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = scale * rng.next_normal();
  return t;
}

}  // namespace lvp
