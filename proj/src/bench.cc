// Copyright 2026 The fmtee Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fmtee/bench.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace fmtee {
namespace {

using json = nlohmann::ordered_json;

constexpr std::string_view kFormatName = "fmtee-bench";
constexpr double kZThreshold = 3.0;

json config_json(const GenerationConfig& c) {
  json j;
  j["batch_size"] = c.batch_size;
  j["beam_width"] = c.beam_width;
  j["max_new_tokens"] = c.max_new_tokens;
  j["input_length"] = c.input_length;
  return j;
}

GenerationConfig config_from(const json& j) {
  GenerationConfig c;
  c.batch_size = j.at("batch_size").get<std::uint32_t>();
  c.beam_width = j.at("beam_width").get<std::uint32_t>();
  c.max_new_tokens = j.at("max_new_tokens").get<std::uint32_t>();
  c.input_length = j.at("input_length").get<std::uint32_t>();
  return c;
}

json dist_json(const Distribution& d) {
  json j;
  j["mean"] = d.mean;
  j["p50"] = d.p50;
  j["p95"] = d.p95;
  j["p99"] = d.p99;
  return j;
}

Distribution dist_from(const json& j) {
  return {j.at("mean").get<double>(), j.at("p50").get<double>(),
          j.at("p95").get<double>(), j.at("p99").get<double>()};
}

double percentile(const std::vector<double>& sorted, double p) {
  double rank = p * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(rank));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = rank - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::unique_ptr<GenerationSession> start_run(const GenerationTarget& target,
                                             const GenerationConfig& cfg,
                                             std::uint32_t run_id) {
  try {
    auto session = target(cfg, run_id);
    if (!session) throw Error(ErrorCode::kTargetFailed, "no session");
    return session;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kTargetFailed,
                "run " + std::to_string(run_id) + ": " + e.what());
  }
}

void step_once(GenerationSession& session, std::uint32_t run_id,
               std::uint64_t index, std::vector<TokenTimingSample>& out) {
  double d = 0.0;
  try {
    d = session.step();
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kTargetFailed,
                "run " + std::to_string(run_id) + ": " + e.what());
  }
  if (!(d > 0.0)) {
    throw Error(ErrorCode::kTargetFailed, "non-positive step duration");
  }
  out.push_back({index, d, run_id});
}

// Single pass: mean and population stddev over the whole input.
std::vector<bool> keep_mask(const std::vector<TokenTimingSample>& samples) {
  if (samples.size() < 2) throw Error(ErrorCode::kTooFewSamples);
  double n = static_cast<double>(samples.size());
  double sum = 0.0;
  for (const auto& s : samples) sum += s.duration;
  double mean = sum / n;
  double sq = 0.0;
  for (const auto& s : samples) sq += (s.duration - mean) * (s.duration - mean);
  double stddev = std::sqrt(sq / n);
  std::vector<bool> keep(samples.size(), true);
  if (stddev == 0.0) return keep;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    keep[i] = !(std::abs(samples[i].duration - mean) / stddev > kZThreshold);
  }
  return keep;
}

}  // namespace

std::string_view bench_mode_name(BenchMode mode) {
  return mode == BenchMode::kLatency ? "latency" : "throughput";
}

BenchMode parse_bench_mode(std::string_view text) {
  if (text == "latency") return BenchMode::kLatency;
  if (text == "throughput") return BenchMode::kThroughput;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown bench mode '" + std::string(text) + "'");
}

GenerationConfig bench_config(BenchMode mode) {
  if (mode == BenchMode::kLatency) return {1, 1, 128, 1024};
  return {6, 4, 128, 1024};
}

std::vector<TokenTimingSample> measure(const GenerationTarget& target,
                                       const GenerationConfig& cfg,
                                       std::uint64_t min_tokens) {
  if (min_tokens == 0) {
    throw Error(ErrorCode::kInvalidArgument, "min_tokens must be >= 1");
  }
  std::vector<TokenTimingSample> out;
  for (std::uint32_t run = 0; out.size() < min_tokens; ++run) {
    auto session = start_run(target, cfg, run);
    for (std::uint64_t i = 0; !session->done(); ++i) {
      step_once(*session, run, i, out);
    }
  }
  return out;
}

PairedSamples measure_interleaved(const GenerationTarget& a,
                                  const GenerationTarget& b,
                                  const GenerationConfig& cfg,
                                  std::uint64_t min_tokens) {
  if (min_tokens == 0) {
    throw Error(ErrorCode::kInvalidArgument, "min_tokens must be >= 1");
  }
  PairedSamples out;
  for (std::uint32_t run = 0;
       out.a.size() < min_tokens || out.b.size() < min_tokens; ++run) {
    auto sa = start_run(a, cfg, run);
    auto sb = start_run(b, cfg, run);
    for (std::uint64_t i = 0; !sa->done() || !sb->done(); ++i) {
      bool a_first = (i + run) % 2 == 0;
      if (a_first && !sa->done()) step_once(*sa, run, i, out.a);
      if (!sb->done()) step_once(*sb, run, i, out.b);
      if (!a_first && !sa->done()) step_once(*sa, run, i, out.a);
    }
  }
  return out;
}

FilterResult filter_outliers(const std::vector<TokenTimingSample>& samples) {
  std::vector<bool> keep = keep_mask(samples);
  FilterResult r;
  r.kept.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (keep[i]) {
      r.kept.push_back(samples[i]);
    } else {
      ++r.removed;
    }
  }
  r.removed_fraction =
      static_cast<double>(r.removed) / static_cast<double>(samples.size());
  return r;
}

Distribution distribution(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::kEmptyInput);
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  Distribution d;
  d.mean = sum / static_cast<double>(values.size());
  d.p50 = percentile(values, 0.50);
  d.p95 = percentile(values, 0.95);
  d.p99 = percentile(values, 0.99);
  return d;
}

BenchmarkReport summarize(const std::vector<TokenTimingSample>& filtered,
                          const GenerationConfig& cfg) {
  if (filtered.empty()) throw Error(ErrorCode::kEmptyInput);
  std::vector<double> lat, total, per_stream;
  lat.reserve(filtered.size());
  total.reserve(filtered.size());
  per_stream.reserve(filtered.size());
  for (const auto& s : filtered) {
    lat.push_back(s.duration);
    total.push_back(static_cast<double>(cfg.batch_size) / s.duration);
    per_stream.push_back(1.0 / s.duration);
  }
  BenchmarkReport r;
  r.config = cfg;
  r.raw_count = filtered.size();
  r.latency = distribution(std::move(lat));
  r.throughput_total = distribution(std::move(total));
  r.throughput_per_stream = distribution(std::move(per_stream));
  r.below_reading_speed = r.latency.mean < kReadingSpeedSeconds;
  r.clock = "std::chrono::steady_clock, " +
            std::to_string(std::chrono::steady_clock::period::num) + "/" +
            std::to_string(std::chrono::steady_clock::period::den) + " s tick";
  r.samples = filtered;
  r.kept.assign(filtered.size(), true);
  return r;
}

BenchmarkReport analyze(const std::vector<TokenTimingSample>& raw,
                        const GenerationConfig& cfg, std::string label,
                        std::string environment) {
  FilterResult f = filter_outliers(raw);
  BenchmarkReport r = summarize(f.kept, cfg);
  r.label = std::move(label);
  r.environment = std::move(environment);
  r.raw_count = raw.size();
  r.removed_count = f.removed;
  r.removed_outlier_fraction = f.removed_fraction;
  r.samples = raw;
  r.kept = keep_mask(raw);
  return r;
}

std::string BenchmarkReport::to_jsonl() const {
  std::ostringstream out;
  json header;
  header["format"] = kFormatName;
  header["version"] = kFormatVersion;
  out << header.dump() << "\n";

  json s;
  s["record"] = "summary";
  s["label"] = label;
  s["environment"] = environment;
  s["config"] = config_json(config);
  s["raw_count"] = raw_count;
  s["removed_count"] = removed_count;
  s["removed_outlier_fraction"] = removed_outlier_fraction;
  s["latency_seconds"] = dist_json(latency);
  s["tokens_per_second_total"] = dist_json(throughput_total);
  s["tokens_per_second_per_stream"] = dist_json(throughput_per_stream);
  s["below_reading_speed"] = below_reading_speed;
  s["clock"] = clock;
  s["filter"] = "single pass, |x - mean| / population stddev > 3 removed";
  out << s.dump() << "\n";

  for (std::size_t i = 0; i < samples.size(); ++i) {
    json r;
    r["record"] = "sample";
    r["run"] = samples[i].run_id;
    r["token"] = samples[i].token_index;
    r["duration"] = samples[i].duration;
    r["kept"] = i < kept.size() ? static_cast<bool>(kept[i]) : true;
    out << r.dump() << "\n";
  }
  return out.str();
}

BenchmarkReport BenchmarkReport::from_jsonl(std::string_view text) {
  BenchmarkReport r;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool have_summary = false;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json j = json::parse(line);
      if (line_no == 1) {
        if (j.at("format").get<std::string>() != kFormatName ||
            j.at("version").get<int>() != kFormatVersion) {
          throw Error(ErrorCode::kMalformed, "unsupported report version");
        }
        continue;
      }
      std::string kind = j.at("record").get<std::string>();
      if (kind == "summary") {
        r.label = j.at("label").get<std::string>();
        r.environment = j.at("environment").get<std::string>();
        r.config = config_from(j.at("config"));
        r.raw_count = j.at("raw_count").get<std::size_t>();
        r.removed_count = j.at("removed_count").get<std::size_t>();
        r.removed_outlier_fraction =
            j.at("removed_outlier_fraction").get<double>();
        r.latency = dist_from(j.at("latency_seconds"));
        r.throughput_total = dist_from(j.at("tokens_per_second_total"));
        r.throughput_per_stream =
            dist_from(j.at("tokens_per_second_per_stream"));
        r.below_reading_speed = j.at("below_reading_speed").get<bool>();
        r.clock = j.at("clock").get<std::string>();
        have_summary = true;
      } else if (kind == "sample") {
        r.samples.push_back({j.at("token").get<std::uint64_t>(),
                             j.at("duration").get<double>(),
                             j.at("run").get<std::uint32_t>()});
        r.kept.push_back(j.at("kept").get<bool>());
      } else {
        throw Error(ErrorCode::kMalformed, "unknown record '" + kind + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed,
                "line " + std::to_string(line_no) + ": " + e.what());
  }
  if (line_no == 0 || !have_summary) {
    throw Error(ErrorCode::kMalformed, "report has no summary record");
  }
  if (r.samples.size() != r.raw_count) {
    throw Error(ErrorCode::kMalformed, "sample count differs from raw_count");
  }
  return r;
}

OverheadReport compare(const BenchmarkReport& baseline,
                       const BenchmarkReport& secured) {
  if (!(baseline.config == secured.config)) {
    throw Error(ErrorCode::kConfigMismatch,
                "reports were measured with different configurations");
  }
  OverheadReport o;
  o.config = baseline.config;
  o.baseline_throughput = baseline.throughput_total.mean;
  o.secured_throughput = secured.throughput_total.mean;
  o.baseline_latency = baseline.latency.mean;
  o.secured_latency = secured.latency.mean;
  o.throughput_overhead_pct = (o.baseline_throughput - o.secured_throughput) /
                              o.baseline_throughput * 100.0;
  o.latency_overhead_pct =
      (o.secured_latency - o.baseline_latency) / o.baseline_latency * 100.0;
  return o;
}

std::string OverheadReport::to_json() const {
  json j;
  j["record"] = "overhead";
  j["config"] = config_json(config);
  j["baseline_tokens_per_second_total"] = baseline_throughput;
  j["secured_tokens_per_second_total"] = secured_throughput;
  j["baseline_latency_seconds"] = baseline_latency;
  j["secured_latency_seconds"] = secured_latency;
  j["throughput_overhead_pct"] = throughput_overhead_pct;
  j["latency_overhead_pct"] = latency_overhead_pct;
  j["throughput_formula"] =
      "(baseline_mean_tput - secured_mean_tput) / baseline_mean_tput * 100";
  j["latency_formula"] =
      "(secured_mean_latency - baseline_mean_latency) / "
      "baseline_mean_latency * 100";
  return j.dump();
}

// --- targets ----------------------------------------------------------------

std::vector<TokenSequence> bench_prompts(const GenerationConfig& cfg,
                                         std::uint32_t vocab_size,
                                         std::uint32_t run_id) {
  std::uint64_t state = 0xB0BAull * 1000003 + run_id;
  std::vector<TokenSequence> prompts(cfg.batch_size);
  for (auto& p : prompts) {
    p.resize(cfg.input_length);
    for (auto& t : p) t = static_cast<Token>(splitmix64(state) % vocab_size);
  }
  return prompts;
}

ModelWeights bench_model() { return ModelWeights::generate(2024, 1024, 256, 8); }

GenerationTarget bare_target(std::shared_ptr<const ModelWeights> weights) {
  return [weights](const GenerationConfig& cfg, std::uint32_t run_id) {
    GenerationOptions opts;
    // Keeps the weights alive as long as the session.
    opts.on_memory_access = [weights] {};
    return std::make_unique<GenerationSession>(
        *weights, bench_prompts(cfg, weights->vocab_size, run_id), cfg,
        std::move(opts));
  };
}

struct EnclaveTarget::State {
  EnclaveContext ctx;
  std::unique_ptr<ModelSlot> slot;
  double tax = 0.0;
};

EnclaveTarget::EnclaveTarget(const ModelWeights& weights, double enclave_tax)
    : state_(std::make_shared<State>()) {
  if (enclave_tax < 0) {
    throw Error(ErrorCode::kInvalidArgument, "enclave tax must be >= 0");
  }
  Manifest m;
  m.enclave_size = 256ull << 20;
  m.thread_count = 1;
  m.entrypoint = "/bench/server";
  m.trusted_files = {"/bench/server"};
  m.allowed_files = {"/bench/model.fmte"};
  m.key_provider = "provider://bench";
  m.attestation_mode = AttestationMode::kNone;
  crypto::AeadKey key = crypto::random_value<crypto::AeadKey>();
  KeyId key_id = crypto::random_value<KeyId>();
  FileTree tree;
  tree.put("/bench/server", std::string_view("fmtee bench enclave\n"));
  tree.put("/bench/model.fmte", pack_model(weights, key, key_id).serialize());
  state_->ctx = launch_enclave(PlatformRoot::create(TeeType::kApplication), m,
                               tree);
  state_->slot = std::make_unique<ModelSlot>(state_->ctx);
  state_->slot->provision_key(key_id, key);
  state_->slot->load(
      state_->ctx->read_allowed_file(state_->ctx.token, "/bench/model.fmte"),
      key_id);
  state_->tax = enclave_tax;
}

EnclaveTarget::~EnclaveTarget() = default;

GenerationTarget EnclaveTarget::target() {
  auto state = state_;
  return [state](const GenerationConfig& cfg, std::uint32_t run_id) {
    const ModelWeights& w = state->slot->weights();
    GenerationOptions opts;
    opts.enclave_tax = state->tax;
    opts.on_memory_access = [state] { state->slot->touch(); };
    return std::make_unique<GenerationSession>(
        w, bench_prompts(cfg, w.vocab_size, run_id), cfg, std::move(opts));
  };
}

}  // namespace fmtee
