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

#include "simulmask/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "simulmask/alibi.hpp"
#include "simulmask/error.hpp"
#include "simulmask/masks.hpp"
#include "simulmask/metrics.hpp"

namespace simulmask {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    fail(ErrorKind::kConfig, "config: '" + key + "' expects a number, got '" + value + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kConfig, "config: '" + key + "' expects a real number, got '" + value + "'");
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  fail(ErrorKind::kConfig, "config: '" + key + "' expects true/false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& items, auto&& show) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += show(items[i]);
  }
  return out;
}

const char* to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

// Tracks files written by a run so a failure can remove them.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path root) : root_(std::move(root)) {}

  std::ofstream open(const std::filesystem::path& rel) {
    const auto path = root_ / rel;
    const auto parent = path.parent_path();
    if (!std::filesystem::exists(parent)) {
      // Record the outermost directory we create.
      auto top = parent;
      while (!top.parent_path().empty() && !std::filesystem::exists(top.parent_path())) {
        top = top.parent_path();
      }
      std::error_code ec;
      std::filesystem::create_directories(parent, ec);
      require(!ec, ErrorKind::kIo, "cannot create directory " + parent.string());
      dirs_.push_back(top);
    }
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
    files_.push_back(path);
    return out;
  }

  void record(const std::filesystem::path& rel) { files_.push_back(root_ / rel); }

  void close(std::ofstream& out, const std::filesystem::path& rel) {
    out.flush();
    require(static_cast<bool>(out), ErrorKind::kIo, "write failed: " + (root_ / rel).string());
  }

  void remove_all() noexcept {
    std::error_code ec;
    for (auto it = files_.rbegin(); it != files_.rend(); ++it) std::filesystem::remove(*it, ec);
    for (auto it = dirs_.rbegin(); it != dirs_.rend(); ++it) std::filesystem::remove_all(*it, ec);
  }

  const std::vector<std::filesystem::path>& files() const { return files_; }

 private:
  std::filesystem::path root_;
  std::vector<std::filesystem::path> files_;
  std::vector<std::filesystem::path> dirs_;
};

struct SentenceResult {
  MetricsRow row;
  TranslationTrace trace;
};

struct SweepCell {
  SummaryRow summary;
  std::vector<SentenceResult> sentences;
};

std::vector<SweepCell> sweep(const ModelParams& params, std::span<const SentencePair> corpus,
                             const ExperimentConfig& cfg) {
  const PromptBuilder builder;
  const FlopModel flop_model{params.config};
  const std::size_t n =
      cfg.eval_sentences == 0 ? corpus.size() : std::min(cfg.eval_sentences, corpus.size());
  std::vector<SweepCell> cells;
  for (const std::size_t k : cfg.eval_k) {
    for (const GenerationMode mode : cfg.modes) {
      SweepCell cell;
      cell.summary.eval_k = k;
      cell.summary.mode = mode;
      cell.summary.sentences = n;
      std::vector<std::vector<Token>> hyps;
      std::vector<std::vector<Token>> refs;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& pair = corpus[i];
        SourceStream stream(pair.source);
        GenerationOptions opts;
        opts.mode = mode;
        opts.bias = cfg.train.bias;
        opts.recompute_mask = cfg.train.mask;
        opts.max_target_len = pair.source.size() + cfg.target_slack;
        const auto policy = DecisionPolicy::wait_k(k, pair.source.size());
        auto gen = simul_generate(params, policy, builder.pre_prompt, stream, builder.mid_prompt,
                                  opts);
        const auto flops = flops_generate(gen.trace, flop_model, mode, cfg.train.mask);
        const std::vector<std::vector<Token>> h{gen.target};
        const std::vector<std::vector<Token>> r{pair.target};
        const auto q = quality_proxy(h, r);

        SentenceResult res;
        res.row.sentence_id = i;
        res.row.k_or_chunk = k;
        res.row.laal = laal(gen.trace, pair.source.size(), std::max<std::size_t>(1, gen.trace.writes()),
                            pair.target.size());
        res.row.flops_initial = flops.initial;
        res.row.flops_recompute = flops.recompute;
        res.row.token_acc = q.token_accuracy;
        res.row.exact_match = q.exact_match;
        cell.summary.laal += res.row.laal;
        cell.summary.flops_initial += static_cast<double>(flops.initial);
        cell.summary.flops_recompute += static_cast<double>(flops.recompute);
        res.trace = std::move(gen.trace);
        cell.sentences.push_back(std::move(res));
        hyps.push_back(std::move(gen.target));
        refs.push_back(pair.target);
      }
      if (n > 0) {
        const auto q = quality_proxy(hyps, refs);
        cell.summary.token_acc = q.token_accuracy;
        cell.summary.exact_match = q.exact_match;
        const double dn = static_cast<double>(n);
        cell.summary.laal /= dn;
        cell.summary.flops_initial /= dn;
        cell.summary.flops_recompute /= dn;
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

void write_experiment_files(OutputSet& out, const ExperimentConfig& cfg, const Corpus& corpus,
                            const FineTuneResult& trained, bool did_train,
                            const std::vector<SweepCell>& cells) {
  {
    auto f = out.open("config.resolved");
    f << format_experiment_config(cfg);
    out.close(f, "config.resolved");
  }
  if (did_train) {
    auto f = out.open("loss.csv");
    f << "step,loss\n";
    for (const auto& p : trained.loss_curve) f << p.step << ',' << fmt(p.loss) << '\n';
    out.close(f, "loss.csv");
    const auto ckpt = cfg.out_dir / "checkpoint.bin";
    out.record("checkpoint.bin");
    save_checkpoint(ckpt, trained.params);
  }
  for (const GenerationMode mode : cfg.modes) {
    const std::string tag = to_string(mode);
    std::vector<MetricsRow> rows;
    const auto trace_name = "traces_" + tag + ".jsonl";
    auto traces = out.open(trace_name);
    for (const auto& cell : cells) {
      if (cell.summary.mode != mode) continue;
      for (const auto& s : cell.sentences) {
        rows.push_back(s.row);
        nlohmann::ordered_json begin;
        begin["type"] = "begin";
        begin["sentence_id"] = s.row.sentence_id;
        begin["k"] = s.row.k_or_chunk;
        begin["mode"] = tag;
        traces << begin.dump() << '\n';
        write_trace_jsonl(traces, s.trace);
      }
    }
    out.close(traces, trace_name);
    const auto metrics_name = "metrics_" + tag + ".csv";
    auto metrics = out.open(metrics_name);
    write_metrics_csv(metrics, rows);
    out.close(metrics, metrics_name);
  }
  if (cfg.write_dumps && !corpus.empty()) {
    const PromptBuilder builder;
    const auto built = builder.build(corpus.front());
    const auto slopes = alibi_slopes(cfg.model.n_heads);
    const std::size_t s = built.layout.source_len;
    std::vector<std::pair<std::string, std::size_t>> policies{
        {"train_k" + std::to_string(cfg.train.train_k), cfg.train.train_k}};
    for (const std::size_t k : cfg.eval_k) {
      if (k != cfg.train.train_k) policies.emplace_back("eval_k" + std::to_string(k), k);
    }
    for (const auto& [name, k] : policies) {
      const auto policy = DecisionPolicy::wait_k(k, s);
      const auto mask = cfg.train.mask == MaskMode::kSimulMask ? simul_mask(built.layout, policy)
                                                               : causal_mask(built.layout.total());
      const auto mask_name = "masks/mask_" + name + ".txt";
      auto m = out.open(mask_name);
      write_mask_dump(m, mask, cfg.train.mask == MaskMode::kSimulMask ? policy.describe() : "causal");
      out.close(m, mask_name);
      const auto biases = head_biases(mask, slopes, cfg.train.bias);
      const auto bias_name = "masks/bias_" + name + "_head1.csv";
      auto b = out.open(bias_name);
      write_bias_csv(b, biases.front());
      out.close(b, bias_name);
    }
  }
  {
    std::vector<SummaryRow> summary;
    for (const auto& cell : cells) summary.push_back(cell.summary);
    auto f = out.open("summary.csv");
    write_summary_csv(f, summary);
    out.close(f, "summary.csv");
  }
}

}  // namespace

GenerationMode parse_generation_mode(const std::string& text) {
  if (text == "cached") return GenerationMode::kCached;
  if (text == "recompute") return GenerationMode::kRecompute;
  fail(ErrorKind::kConfig, "unknown generation mode '" + text + "' (cached|recompute)");
}

MaskMode parse_mask_mode(const std::string& text) {
  if (text == "simulmask") return MaskMode::kSimulMask;
  if (text == "causal") return MaskMode::kCausal;
  fail(ErrorKind::kConfig, "unknown mask mode '" + text + "' (simulmask|causal)");
}

BiasMode parse_bias_mode(const std::string& text) {
  if (text == "modified") return BiasMode::kModified;
  if (text == "standard") return BiasMode::kStandard;
  fail(ErrorKind::kConfig, "unknown bias mode '" + text + "' (modified|standard)");
}

const char* to_string(MaskMode mode) { return mode == MaskMode::kSimulMask ? "simulmask" : "causal"; }
const char* to_string(BiasMode mode) { return mode == BiasMode::kModified ? "modified" : "standard"; }

void ExperimentConfig::validate() const {
  require(!eval_k.empty(), ErrorKind::kConfig, "config: eval_k is empty");
  for (const auto k : eval_k) require(k >= 1, ErrorKind::kConfig, "config: eval_k values must be >= 1");
  require(!modes.empty(), ErrorKind::kConfig, "config: mode list is empty");
  require(train.train_k >= 1, ErrorKind::kConfig, "config: train_k must be >= 1");
  require(train.batch_size >= 1, ErrorKind::kConfig, "config: batch must be >= 1");
  require(train.learning_rate >= 0.0, ErrorKind::kConfig, "config: lr must be >= 0");
  require(!out_dir.empty(), ErrorKind::kConfig, "config: out must be set");
  if (!corpus_path.empty()) {
    require(std::filesystem::exists(corpus_path), ErrorKind::kData,
            "config: corpus " + corpus_path.string() + " does not exist");
  }
  if (!checkpoint.empty()) {
    require(std::filesystem::exists(checkpoint), ErrorKind::kData,
            "config: checkpoint " + checkpoint.string() + " does not exist");
  }
  resolve(*this).model.validate();
}

void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  auto count = [&] { return parse_number<std::size_t>(key, value); };
  if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "out") c.out_dir = value;
  else if (key == "task") c.data = parse_task(value, c.data);
  else if (key == "sentences") c.data.sentences = count();
  else if (key == "min_len") c.data.min_len = count();
  else if (key == "max_len") c.data.max_len = count();
  else if (key == "vocab") c.data.vocab = count();
  else if (key == "corpus") c.corpus_path = value;
  else if (key == "checkpoint") c.checkpoint = value;
  else if (key == "n_layers") c.model.n_layers = count();
  else if (key == "n_heads") c.model.n_heads = count();
  else if (key == "d_model") c.model.d_model = count();
  else if (key == "d_ff") c.model.d_ff = count();
  else if (key == "mask") c.train.mask = parse_mask_mode(value);
  else if (key == "bias") c.train.bias = parse_bias_mode(value);
  else if (key == "train_k") c.train.train_k = count();
  else if (key == "epochs") c.train.epochs = count();
  else if (key == "lr") c.train.learning_rate = parse_real(key, value);
  else if (key == "batch") c.train.batch_size = count();
  else if (key == "max_grad_norm") c.train.max_grad_norm = parse_real(key, value);
  else if (key == "optimizer") {
    if (value == "sgd") c.train.optimizer = OptimizerKind::kSgd;
    else if (value == "adam") c.train.optimizer = OptimizerKind::kAdam;
    else fail(ErrorKind::kConfig, "config: optimizer must be sgd or adam");
  } else if (key == "max_sequence_len") c.train.max_sequence_len = count();
  else if (key == "eval_k") {
    c.eval_k.clear();
    for (const auto& item : split_list(value)) c.eval_k.push_back(parse_number<std::size_t>(key, item));
  } else if (key == "mode") {
    c.modes.clear();
    for (const auto& item : split_list(value)) c.modes.push_back(parse_generation_mode(item));
  } else if (key == "eval_sentences") c.eval_sentences = count();
  else if (key == "target_slack") c.target_slack = count();
  else if (key == "dumps") c.write_dumps = parse_bool(key, value);
  else fail(ErrorKind::kConfig, "config: unknown key '" + key + "'");
}

ExperimentConfig parse_experiment_config(std::istream& in, ExperimentConfig base) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::kConfig,
            "config line " + std::to_string(lineno) + ": expected key = value");
    try {
      apply_setting(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(e.kind(), "config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kConfig, "cannot read config " + path.string());
  return parse_experiment_config(in, std::move(base));
}

std::string format_experiment_config(const ExperimentConfig& c) {
  std::ostringstream o;
  auto show = [](const auto& v) { return std::to_string(v); };
  o << "seed = " << c.seed << '\n'
    << "out = " << c.out_dir.string() << '\n'
    << "task = " << describe_task(c.data) << '\n'
    << "sentences = " << c.data.sentences << '\n'
    << "min_len = " << c.data.min_len << '\n'
    << "max_len = " << c.data.max_len << '\n'
    << "vocab = " << c.data.vocab << '\n';
  if (!c.corpus_path.empty()) o << "corpus = " << c.corpus_path.string() << '\n';
  if (!c.checkpoint.empty()) o << "checkpoint = " << c.checkpoint.string() << '\n';
  o << "n_layers = " << c.model.n_layers << '\n'
    << "n_heads = " << c.model.n_heads << '\n'
    << "d_model = " << c.model.d_model << '\n'
    << "d_ff = " << c.model.d_ff << '\n'
    << "mask = " << to_string(c.train.mask) << '\n'
    << "bias = " << to_string(c.train.bias) << '\n'
    << "train_k = " << c.train.train_k << '\n'
    << "epochs = " << c.train.epochs << '\n'
    << "lr = " << fmt_real(c.train.learning_rate) << '\n'
    << "batch = " << c.train.batch_size << '\n'
    << "max_grad_norm = " << fmt_real(c.train.max_grad_norm) << '\n'
    << "optimizer = " << to_string(c.train.optimizer) << '\n'
    << "max_sequence_len = " << c.train.max_sequence_len << '\n'
    << "eval_k = " << join(c.eval_k, show) << '\n'
    << "mode = " << join(c.modes, [](GenerationMode m) { return std::string(to_string(m)); }) << '\n'
    << "eval_sentences = " << c.eval_sentences << '\n'
    << "target_slack = " << c.target_slack << '\n'
    << "dumps = " << (c.write_dumps ? "true" : "false") << '\n';
  return o.str();
}

ExperimentConfig resolve(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  c.model.seed = c.seed;
  c.data.seed = c.seed;
  c.train.shuffle_seed = c.seed;
  c.model.vocab_size = model_vocab_size(c.data.vocab);
  return c;
}

Corpus load_or_generate_corpus(const ExperimentConfig& config) {
  const auto c = resolve(config);
  if (!c.corpus_path.empty()) return read_corpus(c.corpus_path, c.model.vocab_size);
  return gen_synthetic(c.data);
}

std::vector<SummaryRow> evaluate_sweep(const ModelParams& params, std::span<const SentencePair> corpus,
                                       const ExperimentConfig& config) {
  std::vector<SummaryRow> out;
  for (auto& cell : sweep(params, corpus, config)) out.push_back(cell.summary);
  return out;
}

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows) {
  out << "eval_k,mode,sentences,laal,token_acc,exact_match,flops_initial,flops_recompute\n";
  for (const auto& r : rows) {
    out << r.eval_k << ',' << to_string(r.mode) << ',' << r.sentences << ',' << fmt(r.laal) << ','
        << fmt(r.token_acc) << ',' << fmt(r.exact_match) << ',' << fmt(r.flops_initial) << ','
        << fmt(r.flops_recompute) << '\n';
  }
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto cfg = resolve(config);
  OutputSet out(cfg.out_dir);
  try {
    const auto corpus = load_or_generate_corpus(cfg);
    ExperimentReport report;
    bool did_train = false;
    ModelParams params;
    if (!cfg.checkpoint.empty()) {
      params = load_checkpoint(cfg.checkpoint);
      require(params.config.vocab_size == cfg.model.vocab_size, ErrorKind::kConfig,
              "checkpoint vocabulary " + std::to_string(params.config.vocab_size) +
                  " does not match data vocabulary " + std::to_string(cfg.model.vocab_size));
    } else {
      const PromptBuilder builder;
      report.training = fine_tune(init_model(cfg.model), corpus, builder, cfg.train);
      params = report.training.params;
      did_train = true;
    }
    auto effective = cfg;
    effective.model = params.config;
    const auto cells = sweep(params, corpus, effective);
    write_experiment_files(out, effective, corpus, report.training, did_train, cells);
    for (const auto& cell : cells) report.summary.push_back(cell.summary);
    report.files = out.files();
    return report;
  } catch (const Error& e) {
    out.remove_all();
    throw Error(e.kind(), std::string("run_experiment: ") + e.what());
  } catch (...) {
    out.remove_all();
    throw;
  }
}

}  // namespace simulmask
