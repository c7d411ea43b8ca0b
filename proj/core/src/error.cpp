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

#include "simulmask/error.hpp"

namespace simulmask {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kDegenerate: return "numeric/degenerate error";
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kPolicy: return "policy error";
    case ErrorKind::kLayout: return "layout error";
    case ErrorKind::kSchedule: return "schedule error";
    case ErrorKind::kCacheCoherence: return "cache-coherence error";
    case ErrorKind::kInput: return "input error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kIo: return "I/O error";
  }
  return "error";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kPolicy:
    case ErrorKind::kLayout:
    case ErrorKind::kSchedule:
      return 2;
    case ErrorKind::kInput:
    case ErrorKind::kData:
    case ErrorKind::kIo:
      return 3;
    case ErrorKind::kShape:
    case ErrorKind::kDegenerate:
    case ErrorKind::kCacheCoherence:
      return 4;
  }
  return 1;
}

}  // namespace simulmask
