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

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "simulmask/error.hpp"

namespace simulmask {

/// Dense row-major matrix. Values are finite except in additive mask
/// payloads, where kMasked marks an absent entry.
template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, ErrorKind::kShape,
            "matrix data length does not match rows x cols");
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  template <typename U>
  BasicMatrix<U> cast() const {
    return BasicMatrix<U>(rows_, cols_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;

template <typename T>
inline constexpr T kMaskedValue = -std::numeric_limits<T>::infinity();
inline constexpr float kMasked = kMaskedValue<float>;

template <typename T>
bool is_masked(T v) {
  return v == kMaskedValue<T>;
}

// ---------------------------------------------------------------------------
// Floating-point operation accounting. Kernels report multiply-accumulates
// as two operations to whichever counter is installed on the calling thread.

class FlopCounter {
 public:
  void add(std::uint64_t n) { total_ += n; }
  std::uint64_t total() const { return total_; }
  void reset() { total_ = 0; }

 private:
  std::uint64_t total_ = 0;
};

/// Installs a counter on the current thread for the scope's lifetime.
class FlopScope {
 public:
  explicit FlopScope(FlopCounter& counter);
  ~FlopScope();
  FlopScope(const FlopScope&) = delete;
  FlopScope& operator=(const FlopScope&) = delete;

 private:
  FlopCounter* previous_;
};

void count_flops(std::uint64_t n);

// ---------------------------------------------------------------------------

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

/// Max-subtracted softmax. Masked inputs map to exactly zero.
template <typename T>
std::vector<T> softmax_row(std::span<const T> x);

template <typename T>
struct BasicAttentionInputs {
  BasicMatrix<T> queries;
  BasicMatrix<T> keys;
  BasicMatrix<T> values;
  std::optional<BasicMatrix<T>> mask;
  std::optional<BasicMatrix<T>> bias;
};
using AttentionInputs = BasicAttentionInputs<float>;

/// softmax((Q K^T + M + B) / sqrt(d_head)) V, row by row.
template <typename T>
BasicMatrix<T> masked_attention(const BasicAttentionInputs<T>& in);

namespace kernel {

/// c[m x n] (+)= a[m x k] * b[k x n]. Per output element the reduction runs
/// over k in ascending order regardless of m, so a single row computed alone
/// is bit-identical to the same row computed inside a larger product.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate = false);

/// c[k x n] += a[m x k]^T * b[m x n]
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                 std::size_t n);

/// c[m x n] (+)= a[m x k] * b[n x k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate = false);

/// Attention for one query over an explicit list of key rows. keys/values
/// point at row 0 of matrices with the given row stride; the head slice is
/// [0, query.size()). `biases` is empty or aligned with `key_rows`.
/// Writes the softmax weights to `probs` and the result to `out`.
template <typename T>
void attend_row(std::span<const T> query, const T* keys, const T* values,
                std::size_t stride, std::span<const std::uint32_t> key_rows,
                std::span<const T> biases, T scale, std::span<T> probs,
                std::span<T> out);

}  // namespace kernel

}  // namespace simulmask
