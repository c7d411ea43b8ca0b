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

#include "simulmask/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <regex>

#include "json.hpp"
#include "simulmask/error.hpp"

namespace simulmask {

PromptBuilder::Built PromptBuilder::build(const SentencePair& pair) const {
  require(!pair.source.empty() && !pair.target.empty(), ErrorKind::kData,
          "sentence pair with empty source or target");
  require(!pre_prompt.empty() && !mid_prompt.empty(), ErrorKind::kConfig,
          "prompt regions must be non-empty");
  Built built;
  built.layout.pre_prompt_len = pre_prompt.size();
  built.layout.source_len = pair.source.size();
  built.layout.mid_prompt_len = mid_prompt.size();
  built.layout.target_len = pair.target.size() + (eos ? 1 : 0);
  built.tokens.reserve(built.layout.total());
  built.tokens.insert(built.tokens.end(), pre_prompt.begin(), pre_prompt.end());
  built.tokens.insert(built.tokens.end(), pair.source.begin(), pair.source.end());
  built.tokens.insert(built.tokens.end(), mid_prompt.begin(), mid_prompt.end());
  built.tokens.insert(built.tokens.end(), pair.target.begin(), pair.target.end());
  if (eos) built.tokens.push_back(*eos);
  return built;
}

std::vector<LossTarget> PromptBuilder::loss_targets(const Built& built) {
  std::vector<LossTarget> targets;
  targets.reserve(built.layout.target_len);
  for (std::size_t t = 1; t <= built.layout.target_len; ++t) {
    targets.push_back({built.layout.predictor_row(t),
                       built.tokens[built.layout.target_begin() + t - 1]});
  }
  return targets;
}

SyntheticSpec parse_task(const std::string& text, SyntheticSpec base) {
  static const std::regex shift_re(R"(shift[(:](\d+)\)?)");
  std::smatch m;
  if (text == "copy") {
    base.task = SyntheticTask::kCopy;
  } else if (text == "reverse") {
    base.task = SyntheticTask::kReverse;
  } else if (std::regex_match(text, m, shift_re)) {
    base.task = SyntheticTask::kShift;
    base.shift = std::stoul(m[1].str());
  } else {
    fail(ErrorKind::kConfig, "unknown synthetic task '" + text + "'");
  }
  return base;
}

std::string describe_task(const SyntheticSpec& spec) {
  switch (spec.task) {
    case SyntheticTask::kCopy: return "copy";
    case SyntheticTask::kReverse: return "reverse";
    case SyntheticTask::kShift: return "shift(" + std::to_string(spec.shift) + ")";
  }
  return "?";
}

Corpus gen_synthetic(const SyntheticSpec& spec) {
  require(spec.sentences >= 1 && spec.min_len >= 1 && spec.max_len >= spec.min_len &&
              spec.vocab >= 1,
          ErrorKind::kConfig, "gen_synthetic: sizes must be >= 1 and min_len <= max_len");
  if (spec.task == SyntheticTask::kShift) {
    require(spec.min_len > spec.shift, ErrorKind::kConfig,
            "gen_synthetic: shift(n) needs sentences longer than n");
  }
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&](std::size_t lo, std::size_t hi) {  // inclusive
    return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
  };
  std::vector<Token> pool(spec.vocab);
  std::iota(pool.begin(), pool.end(), kFirstContentToken);

  Corpus corpus;
  corpus.reserve(spec.sentences);
  for (std::size_t s = 0; s < spec.sentences; ++s) {
    const std::size_t len = uniform(spec.min_len, spec.max_len);
    SentencePair pair;
    if (len <= spec.vocab) {
      // Partial Fisher-Yates: the first `len` entries become the sentence.
      for (std::size_t i = 0; i < len; ++i) std::swap(pool[i], pool[uniform(i, spec.vocab - 1)]);
      pair.source.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(len));
    } else {
      for (std::size_t i = 0; i < len; ++i) pair.source.push_back(pool[uniform(0, spec.vocab - 1)]);
    }
    switch (spec.task) {
      case SyntheticTask::kCopy:
        pair.target = pair.source;
        break;
      case SyntheticTask::kReverse:
        pair.target.assign(pair.source.rbegin(), pair.source.rend());
        break;
      case SyntheticTask::kShift:
        pair.target.assign(pair.source.begin() + static_cast<std::ptrdiff_t>(spec.shift),
                           pair.source.end());
        break;
    }
    corpus.push_back(std::move(pair));
  }
  return corpus;
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write corpus " + path.string());
  for (const auto& pair : corpus) {
    nlohmann::ordered_json line;
    line["source"] = pair.source;
    line["target"] = pair.target;
    out << line.dump() << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::kIo, "failed writing corpus " + path.string());
}

Corpus read_corpus(const std::filesystem::path& path, std::size_t vocab_size) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kData, "cannot open corpus " + path.string());
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    SentencePair pair;
    try {
      const auto j = nlohmann::json::parse(line);
      pair.source = j.at("source").get<std::vector<Token>>();
      pair.target = j.at("target").get<std::vector<Token>>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kData, where + ": " + e.what());
    }
    require(!pair.source.empty() && !pair.target.empty(), ErrorKind::kData,
            where + ": empty source or target");
    for (const auto* seq : {&pair.source, &pair.target}) {
      for (Token t : *seq) {
        require(t >= 0 && static_cast<std::size_t>(t) < vocab_size, ErrorKind::kData,
                where + ": token id " + std::to_string(t) + " outside vocabulary");
      }
    }
    corpus.push_back(std::move(pair));
  }
  require(!corpus.empty(), ErrorKind::kData, "corpus " + path.string() + " is empty");
  return corpus;
}

}  // namespace simulmask
