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

#include "simulmask/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace simulmask {

namespace {
thread_local FlopCounter* active_counter = nullptr;
}  // namespace

FlopScope::FlopScope(FlopCounter& counter) : previous_(active_counter) {
  active_counter = &counter;
}

FlopScope::~FlopScope() { active_counter = previous_; }

void count_flops(std::uint64_t n) {
  if (active_counter != nullptr) active_counter->add(n);
}

namespace kernel {

template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  count_flops(2ull * m * k * n);
}

template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  count_flops(2ull * m * k * n);
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      if (accumulate) {
        c[i * n + j] += acc;
      } else {
        c[i * n + j] = acc;
      }
    }
  }
  count_flops(2ull * m * k * n);
}

template <typename T>
void attend_row(std::span<const T> query, const T* keys, const T* values,
                std::size_t stride, std::span<const std::uint32_t> key_rows,
                std::span<const T> biases, T scale, std::span<T> probs,
                std::span<T> out) {
  const std::size_t n = key_rows.size();
  const std::size_t dh = query.size();
  require(n > 0, ErrorKind::kDegenerate, "attention row has no visible key");
  T max_score = -std::numeric_limits<T>::infinity();
  for (std::size_t r = 0; r < n; ++r) {
    const T* key = keys + std::size_t(key_rows[r]) * stride;
    T dot = T(0);
    for (std::size_t c = 0; c < dh; ++c) dot += query[c] * key[c];
    if (!biases.empty()) dot += biases[r];
    probs[r] = dot * scale;
    max_score = std::max(max_score, probs[r]);
  }
  T sum = T(0);
  for (std::size_t r = 0; r < n; ++r) {
    probs[r] = std::exp(probs[r] - max_score);
    sum += probs[r];
  }
  const T inv = T(1) / sum;
  std::fill(out.begin(), out.end(), T(0));
  for (std::size_t r = 0; r < n; ++r) {
    probs[r] *= inv;
    const T p = probs[r];
    const T* value = values + std::size_t(key_rows[r]) * stride;
    for (std::size_t c = 0; c < dh; ++c) out[c] += p * value[c];
  }
  count_flops(4ull * n * dh);
}

}  // namespace kernel

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require(a.cols() == b.rows(), ErrorKind::kShape,
          "matmul: a.cols (" + std::to_string(a.cols()) + ") != b.rows (" +
              std::to_string(b.rows()) + ")");
  BasicMatrix<T> c(a.rows(), b.cols());
  kernel::gemm(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

template <typename T>
std::vector<T> softmax_row(std::span<const T> x) {
  T max_value = -std::numeric_limits<T>::infinity();
  for (T v : x) {
    if (!is_masked(v)) max_value = std::max(max_value, v);
  }
  require(!is_masked(max_value) && !x.empty(), ErrorKind::kDegenerate,
          "softmax_row: every entry is masked");
  std::vector<T> out(x.size(), T(0));
  T sum = T(0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (is_masked(x[i])) continue;
    out[i] = std::exp(x[i] - max_value);
    sum += out[i];
  }
  for (T& v : out) v /= sum;
  return out;
}

template <typename T>
BasicMatrix<T> masked_attention(const BasicAttentionInputs<T>& in) {
  const std::size_t lq = in.queries.rows();
  const std::size_t lk = in.keys.rows();
  const std::size_t dh = in.queries.cols();
  require(dh > 0 && in.keys.cols() == dh && in.values.cols() == dh,
          ErrorKind::kShape, "attention: head dimensions disagree");
  require(in.values.rows() == lk, ErrorKind::kShape,
          "attention: keys and values differ in length");
  if (in.mask) {
    require(in.mask->rows() == lq && in.mask->cols() == lk, ErrorKind::kShape,
            "attention: mask is not L_q x L_k");
  }
  if (in.bias) {
    require(in.bias->rows() == lq && in.bias->cols() == lk, ErrorKind::kShape,
            "attention: bias is not L_q x L_k");
  }

  const T scale = T(1) / std::sqrt(T(dh));
  BasicMatrix<T> out(lq, dh);
  std::vector<std::uint32_t> rows;
  std::vector<T> biases;
  std::vector<T> probs(lk);
  for (std::size_t i = 0; i < lq; ++i) {
    rows.clear();
    biases.clear();
    for (std::size_t j = 0; j < lk; ++j) {
      T additive = T(0);
      if (in.mask) {
        const T m = (*in.mask)(i, j);
        if (is_masked(m)) continue;
        additive += m;
      }
      if (in.bias) additive += (*in.bias)(i, j);
      rows.push_back(static_cast<std::uint32_t>(j));
      biases.push_back(additive);
    }
    require(!rows.empty(), ErrorKind::kDegenerate,
            "attention: query row " + std::to_string(i) + " is fully masked");
    kernel::attend_row<T>(in.queries.row(i), in.keys.data(), in.values.data(),
                          dh, rows, biases, scale,
                          std::span<T>(probs.data(), rows.size()), out.row(i));
  }
  return out;
}

#define SIMULMASK_INSTANTIATE(T)                                              \
  template BasicMatrix<T> matmul(const BasicMatrix<T>&, const BasicMatrix<T>&); \
  template std::vector<T> softmax_row(std::span<const T>);                    \
  template BasicMatrix<T> masked_attention(const BasicAttentionInputs<T>&);   \
  template void kernel::gemm(const T*, const T*, T*, std::size_t, std::size_t, \
                             std::size_t, bool);                              \
  template void kernel::gemm_tn_acc(const T*, const T*, T*, std::size_t,      \
                                    std::size_t, std::size_t);                \
  template void kernel::gemm_nt(const T*, const T*, T*, std::size_t,          \
                                std::size_t, std::size_t, bool);              \
  template void kernel::attend_row(std::span<const T>, const T*, const T*,    \
                                   std::size_t, std::span<const std::uint32_t>, \
                                   std::span<const T>, T, std::span<T>,       \
                                   std::span<T>);

SIMULMASK_INSTANTIATE(float)
SIMULMASK_INSTANTIATE(double)

#undef SIMULMASK_INSTANTIATE

}  // namespace simulmask
