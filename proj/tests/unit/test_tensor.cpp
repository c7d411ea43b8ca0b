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

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "simulmask/error.hpp"
#include "simulmask/tensor.hpp"

using namespace simulmask;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::kIo;
}

}  // namespace

TEST_CASE("matmul: identity and hand arithmetic") {
  Matrix m(2, 2, {1.5f, -2.0f, 0.25f, 7.0f});
  CHECK(matmul(Matrix::identity(2), m) == m);
  const auto r = matmul(Matrix(2, 2, {1, 2, 3, 4}), Matrix(2, 1, {5, 6}));
  CHECK(r == Matrix(2, 1, {17, 39}));
}

TEST_CASE("matmul: random shapes match the triple loop exactly") {
  std::mt19937_64 rng(11);
  const auto a = oracle::random_matrix(4, 3, rng);
  const auto b = oracle::random_matrix(3, 5, rng);
  CHECK(matmul(a, b) == oracle::triple_loop(a, b));
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng() % 9, k = 1 + rng() % 9, n = 1 + rng() % 9;
    const auto x = oracle::random_matrix(m, k, rng);
    const auto y = oracle::random_matrix(k, n, rng);
    CHECK(matmul(x, y) == oracle::triple_loop(x, y));
  }
}

TEST_CASE("matmul: dimension mismatch is a shape error") {
  CHECK(kind_of([] { matmul(Matrix(2, 3), Matrix(2, 3)); }) == ErrorKind::kShape);
  CHECK(kind_of([] { Matrix(2, 2, std::vector<float>(3)); }) == ErrorKind::kShape);
}

TEST_CASE("matmul: counts 2mkn flops on the installed counter") {
  FlopCounter outer, inner;
  {
    FlopScope a(outer);
    matmul(Matrix(2, 3), Matrix(3, 4));
    {
      FlopScope b(inner);
      matmul(Matrix(1, 1), Matrix(1, 5));
    }
    matmul(Matrix(1, 2), Matrix(2, 1));
  }
  CHECK(outer.total() == 2 * 2 * 3 * 4 + 2 * 1 * 2 * 1);
  CHECK(inner.total() == 10);
  matmul(Matrix(1, 1), Matrix(1, 1));  // no counter installed: nothing recorded
  CHECK(outer.total() == 52);
}

TEST_CASE("gemm: a row computed alone is bit-identical to the same row in a batch") {
  std::mt19937_64 rng(5);
  const auto a = oracle::random_matrix(7, 13, rng);
  const auto b = oracle::random_matrix(13, 6, rng);
  const auto full = matmul(a, b);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::vector<float> out(6);
    kernel::gemm(a.row(r).data(), b.data(), out.data(), 1, 13, 6);
    for (std::size_t c = 0; c < 6; ++c) CHECK(out[c] == full(r, c));
  }
}

TEST_CASE("softmax_row: spec cases") {
  const std::vector<float> zeros{0, 0, 0};
  for (float p : softmax_row<float>(zeros)) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-7));
  const std::vector<float> masked{5.0f, kMasked};
  const auto p = softmax_row<float>(masked);
  CHECK(p[0] == 1.0f);
  CHECK(p[1] == 0.0f);
}

TEST_CASE("softmax_row: matches the extended-precision oracle") {
  const std::vector<float> x{1, 2, 3};
  const auto got = softmax_row<float>(x);
  const auto ref = oracle::softmax_ld({1, 2, 3});
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(got[i] - static_cast<double>(ref[i])) < 1e-7);

  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0.0f, 30.0f);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> v(1 + rng() % 20);
    std::vector<double> vd(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = (i > 0 && rng() % 3 == 0) ? kMasked : n(rng);
      vd[i] = v[i];
    }
    const auto s = softmax_row<float>(v);
    const auto r = oracle::softmax_ld(vd);
    double total = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      total += s[i];
      CHECK(std::abs(s[i] - static_cast<double>(r[i])) < 1e-6);
      if (is_masked(v[i])) CHECK(s[i] == 0.0f);
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("softmax_row: large inputs do not overflow") {
  const std::vector<float> x{1000.0f, 999.0f};
  const auto p = softmax_row<float>(x);
  CHECK(std::isfinite(p[0]));
  CHECK(p[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
}

TEST_CASE("softmax_row: all masked is a degenerate-row error") {
  const std::vector<float> x{kMasked, kMasked};
  CHECK(kind_of([&] { softmax_row<float>(x); }) == ErrorKind::kDegenerate);
}

TEST_CASE("masked_attention: singleton key returns the value row") {
  std::mt19937_64 rng(1);
  AttentionInputs in{oracle::random_matrix(3, 4, rng), oracle::random_matrix(1, 4, rng),
                     oracle::random_matrix(1, 4, rng), std::nullopt, std::nullopt};
  const auto out = masked_attention(in);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 4; ++c) CHECK(out(i, c) == doctest::Approx(in.values(0, c)));
}

TEST_CASE("masked_attention: diagonal-only mask returns value row i") {
  std::mt19937_64 rng(2);
  Matrix mask(4, 4, kMasked);
  for (std::size_t i = 0; i < 4; ++i) mask(i, i) = 0.0f;
  AttentionInputs in{oracle::random_matrix(4, 8, rng), oracle::random_matrix(4, 8, rng),
                     oracle::random_matrix(4, 8, rng), mask, std::nullopt};
  const auto out = masked_attention(in);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 8; ++c) CHECK(out(i, c) == in.values(i, c));
}

TEST_CASE("masked_attention: random cases match the scalar oracle") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t lq = 1 + rng() % 6, lk = 1 + rng() % 6, d = 1 + rng() % 8;
    AttentionInputs in{oracle::random_matrix(lq, d, rng), oracle::random_matrix(lk, d, rng),
                       oracle::random_matrix(lk, d, rng), std::nullopt, std::nullopt};
    std::vector<std::vector<bool>> vis(lq, std::vector<bool>(lk, true));
    std::vector<std::vector<double>> bias(lq, std::vector<double>(lk, 0.0));
    Matrix mask(lq, lk, 0.0f), b(lq, lk, 0.0f);
    for (std::size_t i = 0; i < lq; ++i) {
      const std::size_t keep = rng() % lk;
      for (std::size_t j = 0; j < lk; ++j) {
        if (j != keep && rng() % 3 == 0) {
          vis[i][j] = false;
          mask(i, j) = kMasked;
        }
        b(i, j) = -static_cast<float>(rng() % 5) * 0.5f;
        bias[i][j] = b(i, j);
      }
    }
    in.mask = mask;
    in.bias = b;
    const auto got = masked_attention(in);
    const auto ref = oracle::attention(oracle::to_rows(in.queries), oracle::to_rows(in.keys),
                                       oracle::to_rows(in.values), vis, bias);
    for (std::size_t i = 0; i < lq; ++i)
      for (std::size_t c = 0; c < d; ++c) CHECK(std::abs(got(i, c) - static_cast<double>(ref[i][c])) < 1e-5);
  }
}

TEST_CASE("masked_attention: key order independence") {
  std::mt19937_64 rng(4);
  const std::size_t lq = 3, lk = 6, d = 4;
  AttentionInputs in{oracle::random_matrix(lq, d, rng), oracle::random_matrix(lk, d, rng),
                     oracle::random_matrix(lk, d, rng), Matrix(lq, lk, 0.0f), Matrix(lq, lk, 0.0f)};
  for (std::size_t i = 0; i < lq; ++i)
    for (std::size_t j = 0; j < lk; ++j) {
      if ((i + j) % 4 == 3) (*in.mask)(i, j) = kMasked;
      (*in.bias)(i, j) = -0.25f * static_cast<float>(j);
    }
  std::vector<std::size_t> perm(lk);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  AttentionInputs p = in;
  for (std::size_t j = 0; j < lk; ++j) {
    for (std::size_t c = 0; c < d; ++c) {
      p.keys(j, c) = in.keys(perm[j], c);
      p.values(j, c) = in.values(perm[j], c);
    }
    for (std::size_t i = 0; i < lq; ++i) {
      (*p.mask)(i, j) = (*in.mask)(i, perm[j]);
      (*p.bias)(i, j) = (*in.bias)(i, perm[j]);
    }
  }
  const auto a = masked_attention(in);
  const auto b = masked_attention(p);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.values()[i] == doctest::Approx(b.values()[i]).epsilon(1e-6));
}

TEST_CASE("masked_attention: row shift invariance") {
  std::mt19937_64 rng(6);
  AttentionInputs in{oracle::random_matrix(2, 4, rng), oracle::random_matrix(5, 4, rng),
                     oracle::random_matrix(5, 4, rng), std::nullopt, Matrix(2, 5, -1.0f)};
  const auto a = masked_attention(in);
  for (std::size_t j = 0; j < 5; ++j) (*in.bias)(1, j) += 3.0f;
  const auto b = masked_attention(in);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(a(0, c) == b(0, c));
    CHECK(a(1, c) == doctest::Approx(b(1, c)).epsilon(1e-5));
  }
}

TEST_CASE("masked_attention: causal rows equal independent prefix attention") {
  std::mt19937_64 rng(8);
  const std::size_t n = 6, d = 4;
  Matrix mask(n, n, 0.0f);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) mask(i, j) = kMasked;
  AttentionInputs in{oracle::random_matrix(n, d, rng), oracle::random_matrix(n, d, rng),
                     oracle::random_matrix(n, d, rng), mask, std::nullopt};
  const auto full = masked_attention(in);
  for (std::size_t i = 0; i < n; ++i) {
    AttentionInputs prefix{Matrix(1, d), Matrix(i + 1, d), Matrix(i + 1, d), std::nullopt, std::nullopt};
    for (std::size_t c = 0; c < d; ++c) prefix.queries(0, c) = in.queries(i, c);
    for (std::size_t j = 0; j <= i; ++j)
      for (std::size_t c = 0; c < d; ++c) {
        prefix.keys(j, c) = in.keys(j, c);
        prefix.values(j, c) = in.values(j, c);
      }
    const auto row = masked_attention(prefix);
    for (std::size_t c = 0; c < d; ++c) CHECK(row(0, c) == doctest::Approx(full(i, c)).epsilon(1e-6));
  }
}

TEST_CASE("masked_attention: fully masked row and shape mismatches") {
  AttentionInputs in{Matrix(1, 2, 1.0f), Matrix(2, 2, 1.0f), Matrix(2, 2, 1.0f), Matrix(1, 2, kMasked),
                     std::nullopt};
  CHECK(kind_of([&] { masked_attention(in); }) == ErrorKind::kDegenerate);
  in.mask = Matrix(1, 3, 0.0f);
  CHECK(kind_of([&] { masked_attention(in); }) == ErrorKind::kShape);
  in.mask.reset();
  in.values = Matrix(3, 2);
  CHECK(kind_of([&] { masked_attention(in); }) == ErrorKind::kShape);
}

TEST_CASE("attend_row: matches masked_attention on the visible subset") {
  std::mt19937_64 rng(12);
  const auto q = oracle::random_matrix(1, 4, rng);
  const auto k = oracle::random_matrix(5, 4, rng);
  const auto v = oracle::random_matrix(5, 4, rng);
  const std::vector<std::uint32_t> rows{0, 2, 4};
  const std::vector<float> bias{-2.0f, -1.0f, 0.0f};
  std::vector<float> probs(3), out(4);
  kernel::attend_row<float>(q.row(0), k.data(), v.data(), 4, rows, bias, 0.5f, probs, out);
  Matrix mask(1, 5, kMasked), b(1, 5, 0.0f);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    mask(0, rows[i]) = 0.0f;
    b(0, rows[i]) = bias[i];
  }
  const auto ref = masked_attention(AttentionInputs{q, k, v, mask, b});
  for (std::size_t c = 0; c < 4; ++c) CHECK(out[c] == doctest::Approx(ref(0, c)).epsilon(1e-6));
  CHECK(std::accumulate(probs.begin(), probs.end(), 0.0) == doctest::Approx(1.0));
}
