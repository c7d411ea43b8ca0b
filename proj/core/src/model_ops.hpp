// Copyright 2026 The SimulMask Workbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Row-level building blocks shared by the full-sequence and incremental
// forward passes. Both paths must call exactly these routines so that a
// token's activations are bit-identical whichever path computes them.

#pragma once

#include <cmath>
#include <cstddef>

namespace simulmask::ops {

inline constexpr double kLayerNormEps = 1e-5;

/// out = gain * (x - mean) * rstd + bias; returns rstd, writes xhat if given.
template <typename T>
T layer_norm_row(const T* x, const T* gain, const T* bias, T* out, T* xhat,
                 std::size_t d) {
  T mean = T(0);
  for (std::size_t c = 0; c < d; ++c) mean += x[c];
  mean /= T(d);
  T var = T(0);
  for (std::size_t c = 0; c < d; ++c) {
    const T diff = x[c] - mean;
    var += diff * diff;
  }
  var /= T(d);
  const T rstd = T(1) / std::sqrt(var + T(kLayerNormEps));
  for (std::size_t c = 0; c < d; ++c) {
    const T n = (x[c] - mean) * rstd;
    if (xhat != nullptr) xhat[c] = n;
    out[c] = gain[c] * n + bias[c];
  }
  return rstd;
}

/// Backward of layer_norm_row. Accumulates into dx, dgain, dbias.
template <typename T>
void layer_norm_row_backward(const T* dy, const T* xhat, T rstd, const T* gain,
                             T* dx, T* dgain, T* dbias, std::size_t d) {
  T mean_dxhat = T(0);
  T mean_dxhat_xhat = T(0);
  for (std::size_t c = 0; c < d; ++c) {
    const T g = dy[c] * gain[c];
    mean_dxhat += g;
    mean_dxhat_xhat += g * xhat[c];
    dgain[c] += dy[c] * xhat[c];
    dbias[c] += dy[c];
  }
  mean_dxhat /= T(d);
  mean_dxhat_xhat /= T(d);
  for (std::size_t c = 0; c < d; ++c) {
    const T g = dy[c] * gain[c];
    dx[c] += rstd * (g - mean_dxhat - xhat[c] * mean_dxhat_xhat);
  }
}

template <typename T>
inline constexpr T kGeluC = T(0.7978845608028654);  // sqrt(2 / pi)
template <typename T>
inline constexpr T kGeluA = T(0.044715);

/// tanh approximation of GELU.
template <typename T>
T gelu(T x) {
  const T u = kGeluC<T> * (x + kGeluA<T> * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
T gelu_grad(T x) {
  const T u = kGeluC<T> * (x + kGeluA<T> * x * x * x);
  const T t = std::tanh(u);
  return T(0.5) * (T(1) + t) +
         T(0.5) * x * (T(1) - t * t) * kGeluC<T> * (T(1) + T(3) * kGeluA<T> * x * x);
}

}  // namespace simulmask::ops
