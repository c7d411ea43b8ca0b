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

// simulmask: command-line workbench over the core library.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "simulmask/alibi.hpp"
#include "simulmask/corpus.hpp"
#include "simulmask/engine.hpp"
#include "simulmask/error.hpp"
#include "simulmask/experiment.hpp"
#include "simulmask/masks.hpp"
#include "simulmask/metrics.hpp"
#include "simulmask/training.hpp"

namespace sm = simulmask;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> train_k;
  std::vector<std::size_t> eval_k;
  std::vector<std::string> modes;
  std::string mask;
  std::string bias;
  std::vector<std::string> settings;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key=value config file");
  cmd->add_option("--seed", f.seed, "seed for model init, data and shuffling");
  cmd->add_option("--out", f.out, "output directory (or file for gen-data)");
  cmd->add_option("--train-k", f.train_k, "wait-k used for fine-tuning");
  cmd->add_option("--eval-k", f.eval_k, "wait-k used for evaluation (repeatable)")
      ->take_last()
      ->allow_extra_args(false);
  cmd->add_option("--mode", f.modes, "generation mode: cached|recompute (repeatable)")
      ->allow_extra_args(false);
  cmd->add_option("--mask", f.mask, "attention mask: simulmask|causal");
  cmd->add_option("--bias", f.bias, "ALiBi variant: modified|standard");
  cmd->add_option("--set", f.settings, "extra config override key=value (repeatable)")
      ->allow_extra_args(false);
}

sm::ExperimentConfig build_config(const CommonFlags& f) {
  sm::ExperimentConfig cfg;
  if (!f.config.empty()) cfg = sm::load_experiment_config(f.config);
  for (const auto& s : f.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) sm::fail(sm::ErrorKind::kConfig, "--set expects key=value, got '" + s + "'");
    sm::apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (f.train_k) cfg.train.train_k = *f.train_k;
  if (!f.eval_k.empty()) cfg.eval_k = f.eval_k;
  if (!f.modes.empty()) {
    cfg.modes.clear();
    for (const auto& m : f.modes) cfg.modes.push_back(sm::parse_generation_mode(m));
  }
  if (!f.mask.empty()) cfg.train.mask = sm::parse_mask_mode(f.mask);
  if (!f.bias.empty()) cfg.train.bias = sm::parse_bias_mode(f.bias);
  return cfg;
}

void print_summary(const std::vector<sm::SummaryRow>& rows) {
  sm::write_summary_csv(std::cout, rows);
}

std::ofstream open_file(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  sm::require(static_cast<bool>(out), sm::ErrorKind::kIo, "cannot write " + path.string());
  return out;
}

// Runs `fn` with either stdout or the named file.
template <typename Fn>
void with_output(const std::string& path, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    return;
  }
  auto out = open_file(path);
  fn(out);
  out.flush();
  sm::require(static_cast<bool>(out), sm::ErrorKind::kIo, "write failed: " + path);
}

struct LayoutFlags {
  std::size_t source_len = 4;
  std::size_t target_len = 3;
  std::size_t pre_len = 1;
  std::size_t mid_len = 1;
  std::size_t k = 1;
  std::string policy_table;
};

void add_layout(CLI::App* cmd, LayoutFlags& f) {
  cmd->add_option("--source-len", f.source_len, "source tokens")->capture_default_str();
  cmd->add_option("--target-len", f.target_len, "target tokens")->capture_default_str();
  cmd->add_option("--pre-len", f.pre_len, "pre-prompt tokens")->capture_default_str();
  cmd->add_option("--mid-len", f.mid_len, "mid-prompt tokens")->capture_default_str();
  cmd->add_option("-k", f.k, "wait-k value (defaults to --train-k when given)")->capture_default_str();
  cmd->add_option("--policy", f.policy_table, "explicit reads per write, e.g. 1,3,4");
}

sm::DecisionPolicy layout_policy(const LayoutFlags& f, const CommonFlags& c) {
  if (!f.policy_table.empty()) {
    std::vector<std::size_t> reads;
    std::stringstream ss(f.policy_table);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        reads.push_back(std::stoul(item));
      } catch (const std::exception&) {
        sm::fail(sm::ErrorKind::kConfig, "--policy expects integers, got '" + item + "'");
      }
    }
    return sm::DecisionPolicy::table(reads, f.source_len);
  }
  return sm::DecisionPolicy::wait_k(c.train_k ? *c.train_k : f.k, f.source_len);
}

sm::PromptLayout make_layout(const LayoutFlags& f) {
  sm::PromptLayout layout{f.pre_len, f.source_len, f.mid_len, f.target_len};
  layout.validate();
  return layout;
}

// Splits a trace file on "begin" marker lines; plain single traces pass through.
std::vector<std::pair<std::string, std::string>> split_traces(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> chunks;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find("\"type\":\"begin\"") != std::string::npos) {
      chunks.emplace_back(line, "");
      continue;
    }
    if (chunks.empty()) chunks.emplace_back("", "");
    chunks.back().second += line + "\n";
  }
  return chunks;
}

int run(int argc, char** argv) {
  CLI::App app{"SimulMask workbench: attention masks, ALiBi variants and wait-k decoding"};
  app.require_subcommand(1);

  CommonFlags common;

  auto* gen = app.add_subcommand("gen-data", "write a synthetic JSONL corpus");
  add_common(gen, common);

  auto* train = app.add_subcommand("train", "fine-tune and write checkpoint.bin + loss.csv");
  add_common(train, common);

  auto* eval = app.add_subcommand("eval", "train or load, then sweep eval-k x mode and write reports");
  add_common(eval, common);

  auto* mask_cmd = app.add_subcommand("mask-dump", "ASCII attention mask for a layout and policy");
  add_common(mask_cmd, common);
  LayoutFlags mask_layout;
  add_layout(mask_cmd, mask_layout);

  auto* bias_cmd = app.add_subcommand("bias-dump", "row,col,bias CSV for one head");
  add_common(bias_cmd, common);
  LayoutFlags bias_layout;
  add_layout(bias_cmd, bias_layout);
  std::size_t head = 1;
  std::optional<double> slope;
  bias_cmd->add_option("--head", head, "1-based head index")->capture_default_str();
  bias_cmd->add_option("--slope", slope, "explicit slope (overrides --head)");

  auto* flops_cmd = app.add_subcommand("flops-report", "FLOPs of a trace under cached and recompute inference");
  add_common(flops_cmd, common);
  LayoutFlags flops_layout;
  add_layout(flops_cmd, flops_layout);
  std::string trace_path;
  flops_cmd->add_option("--trace", trace_path, "trace JSONL (default: scheduled wait-k trace)");

  auto* compare = app.add_subcommand("compare", "mask/bias ablations, each swept over eval-k and mode");
  add_common(compare, common);

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    auto cfg = build_config(common);
    const auto corpus = sm::gen_synthetic(sm::resolve(cfg).data);
    const std::filesystem::path out = common.out.empty() ? "corpus.jsonl" : common.out;
    if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
    sm::write_corpus(out, corpus);
    std::cout << "wrote " << corpus.size() << " pairs (" << sm::describe_task(cfg.data) << ") to "
              << out.string() << '\n';
    return 0;
  }

  if (train->parsed()) {
    auto cfg = sm::resolve(build_config(common));
    cfg.validate();
    const auto corpus = sm::load_or_generate_corpus(cfg);
    const sm::PromptBuilder builder;
    auto result = sm::fine_tune(sm::init_model(cfg.model), corpus, builder, cfg.train,
                                [](std::size_t epoch, double loss) {
                                  std::fprintf(stderr, "epoch %zu loss %.4f\n", epoch + 1, loss);
                                });
    std::filesystem::create_directories(cfg.out_dir);
    sm::save_checkpoint(cfg.out_dir / "checkpoint.bin", result.params);
    with_output((cfg.out_dir / "loss.csv").string(), [&](std::ostream& o) {
      o << "step,loss\n";
      for (const auto& p : result.loss_curve) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f", p.loss);
        o << p.step << ',' << buf << '\n';
      }
    });
    with_output((cfg.out_dir / "config.resolved").string(),
                [&](std::ostream& o) { o << sm::format_experiment_config(cfg); });
    std::cout << "trained " << result.steps << " steps, skipped " << result.skipped
              << " sentences; checkpoint in " << cfg.out_dir.string() << '\n';
    return 0;
  }

  if (eval->parsed()) {
    const auto report = sm::run_experiment(build_config(common));
    print_summary(report.summary);
    return 0;
  }

  if (mask_cmd->parsed()) {
    const auto layout = make_layout(mask_layout);
    const auto cfg = build_config(common);
    const bool causal = cfg.train.mask == sm::MaskMode::kCausal;
    const auto policy = layout_policy(mask_layout, common);
    const auto mask = causal ? sm::causal_mask(layout.total()) : sm::simul_mask(layout, policy);
    with_output(common.out, [&](std::ostream& o) {
      sm::write_mask_dump(o, mask, causal ? "causal" : policy.describe());
    });
    return 0;
  }

  if (bias_cmd->parsed()) {
    const auto layout = make_layout(bias_layout);
    const auto cfg = build_config(common);
    const auto policy = layout_policy(bias_layout, common);
    const auto mask = cfg.train.mask == sm::MaskMode::kCausal ? sm::causal_mask(layout.total())
                                                             : sm::simul_mask(layout, policy);
    float m = 0.0f;
    if (slope) {
      m = static_cast<float>(*slope);
    } else {
      const auto slopes = sm::alibi_slopes(cfg.model.n_heads);
      sm::require(head >= 1 && head <= slopes.slopes.size(), sm::ErrorKind::kConfig,
                  "--head must be in 1.." + std::to_string(slopes.slopes.size()));
      m = slopes.slopes[head - 1];
    }
    const auto bias = cfg.train.bias == sm::BiasMode::kModified
                          ? sm::modified_alibi(mask, m)
                          : sm::PositionalBias{mask, sm::standard_alibi(layout.total(), m).values};
    with_output(common.out, [&](std::ostream& o) { sm::write_bias_csv(o, bias); });
    return 0;
  }

  if (flops_cmd->parsed()) {
    auto cfg = sm::resolve(build_config(common));
    cfg.model.validate();
    const sm::FlopModel model{cfg.model};
    std::vector<std::pair<std::string, sm::TranslationTrace>> traces;
    if (trace_path.empty()) {
      const auto policy = layout_policy(flops_layout, common);
      traces.emplace_back("scheduled " + policy.describe(),
                          sm::schedule_trace(policy, flops_layout.source_len, flops_layout.target_len,
                                             flops_layout.pre_len, flops_layout.mid_len));
    } else {
      std::ifstream in(trace_path);
      sm::require(static_cast<bool>(in), sm::ErrorKind::kIo, "cannot read " + trace_path);
      for (auto& [header, body] : split_traces(in)) {
        std::istringstream chunk(body);
        traces.emplace_back(header, sm::read_trace_jsonl(chunk, flops_layout.pre_len, flops_layout.mid_len));
      }
    }
    with_output(common.out, [&](std::ostream& o) {
      o << "trace,source_read,writes,cached_initial,cached_recompute,recompute_initial,recompute_recompute\n";
      for (std::size_t i = 0; i < traces.size(); ++i) {
        const auto& t = traces[i].second;
        const auto cached = sm::flops_generate(t, model, sm::GenerationMode::kCached);
        const auto recompute = sm::flops_generate(t, model, sm::GenerationMode::kRecompute, cfg.train.mask);
        o << i << ',' << t.source_read() << ',' << t.writes() << ',' << cached.initial << ','
          << cached.recompute << ',' << recompute.initial << ',' << recompute.recompute << '\n';
      }
    });
    return 0;
  }

  if (compare->parsed()) {
    const auto base = build_config(common);
    struct Variant {
      const char* name;
      sm::MaskMode mask;
      sm::BiasMode bias;
    };
    const Variant variants[] = {
        {"simulmask_modified", sm::MaskMode::kSimulMask, sm::BiasMode::kModified},
        {"simulmask_standard", sm::MaskMode::kSimulMask, sm::BiasMode::kStandard},
        {"causal_modified", sm::MaskMode::kCausal, sm::BiasMode::kModified},
        {"causal_standard", sm::MaskMode::kCausal, sm::BiasMode::kStandard},
    };
    auto cfg = base;
    cfg.modes = {sm::GenerationMode::kCached, sm::GenerationMode::kRecompute};
    if (!common.modes.empty()) cfg.modes = base.modes;
    std::ostringstream table;
    table << "variant,eval_k,mode,sentences,laal,token_acc,exact_match,flops_initial,flops_recompute\n";
    for (const auto& v : variants) {
      auto run_cfg = cfg;
      run_cfg.train.mask = v.mask;
      run_cfg.train.bias = v.bias;
      run_cfg.out_dir = base.out_dir / v.name;
      const auto report = sm::run_experiment(run_cfg);
      std::ostringstream rows;
      sm::write_summary_csv(rows, report.summary);
      std::string line;
      std::istringstream in(rows.str());
      std::getline(in, line);  // header
      while (std::getline(in, line)) table << v.name << ',' << line << '\n';
    }
    with_output((base.out_dir / "compare.csv").string(), [&](std::ostream& o) { o << table.str(); });
    std::cout << table.str();
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const sm::Error& e) {
    std::cerr << "error (" << sm::to_string(e.kind()) << "): " << e.what() << '\n';
    return sm::exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error (io): " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}
