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

#include <doctest.h>

#include "simulmask/error.hpp"
#include "simulmask/model.hpp"

namespace testutil {

inline simulmask::ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const simulmask::Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return simulmask::ErrorKind::kIo;
}

inline simulmask::ModelConfig small_config(std::uint64_t seed = 0) {
  simulmask::ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 4;
  c.d_model = 16;
  c.d_ff = 32;
  c.vocab_size = 13;
  c.seed = seed;
  return c;
}

inline float max_abs_diff(const simulmask::Matrix& a, const simulmask::Matrix& b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace testutil
