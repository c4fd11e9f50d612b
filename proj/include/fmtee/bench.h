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

// Token timing benchmarks: per-step wall-clock capture, single-pass |Z| > 3
// outlier removal over the pooled samples, latency and throughput
// summaries, and overhead between a baseline and a secured run.
//
//   throughput_total      = batch_size / duration   (tokens/s, all streams)
//   throughput_per_stream = 1 / duration            (tokens/s, one stream)
//   throughput overhead % = (base_tput - secured_tput) / base_tput * 100
//   latency overhead %    = (secured_lat - base_lat) / base_lat * 100
//
// Overheads use the means of the filtered samples.

#ifndef FMTEE_BENCH_H_
#define FMTEE_BENCH_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fmtee/inference.h"

namespace fmtee {

struct TokenTimingSample {
  std::uint64_t token_index = 0;
  double duration = 0.0;  // seconds
  std::uint32_t run_id = 0;

  friend bool operator==(const TokenTimingSample&,
                         const TokenTimingSample&) = default;
};

enum class BenchMode : std::uint8_t { kLatency, kThroughput };

std::string_view bench_mode_name(BenchMode mode);
BenchMode parse_bench_mode(std::string_view text);

// latency: batch 1, beam 1; throughput: batch 6, beam 4. Both generate 128
// tokens after a 1024-token prompt.
GenerationConfig bench_config(BenchMode mode);

// Starts generation run `run_id`; the measurement drives it step by step.
// Throwing, here or from a step, aborts the measurement.
using GenerationTarget = std::function<std::unique_ptr<GenerationSession>(
    const GenerationConfig&, std::uint32_t run_id)>;

// Runs the target until at least `min_tokens` step samples exist. Throws
// TARGET_FAILED (partial samples are discarded), INVALID_ARGUMENT.
std::vector<TokenTimingSample> measure(const GenerationTarget& target,
                                       const GenerationConfig& cfg,
                                       std::uint64_t min_tokens = 1000);

// Runs both targets side by side, alternating single steps (and which one
// goes first) so drift in machine speed hits both equally. Each result has
// at least `min_tokens` samples.
struct PairedSamples {
  std::vector<TokenTimingSample> a;
  std::vector<TokenTimingSample> b;
};
PairedSamples measure_interleaved(const GenerationTarget& a,
                                  const GenerationTarget& b,
                                  const GenerationConfig& cfg,
                                  std::uint64_t min_tokens = 1000);

struct FilterResult {
  std::vector<TokenTimingSample> kept;
  std::size_t removed = 0;
  double removed_fraction = 0.0;
};

// Removes samples with |x - mean| / stddev > 3, mean and population stddev
// computed once over the input. Nothing is removed when stddev == 0.
// Throws TOO_FEW_SAMPLES below two samples.
FilterResult filter_outliers(const std::vector<TokenTimingSample>& samples);

struct Distribution {
  double mean = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
  double p99 = 0.0;

  friend bool operator==(const Distribution&, const Distribution&) = default;
};

// Percentiles interpolate linearly between closest ranks, rank = p * (n - 1).
Distribution distribution(std::vector<double> values);

inline constexpr double kReadingSpeedSeconds = 0.2;

struct BenchmarkReport {
  static constexpr int kFormatVersion = 1;

  std::string label;        // e.g. "bare/latency"
  std::string environment;  // free text
  GenerationConfig config;
  std::size_t raw_count = 0;
  std::size_t removed_count = 0;
  double removed_outlier_fraction = 0.0;
  Distribution latency;                // seconds per step
  Distribution throughput_total;       // tokens/s
  Distribution throughput_per_stream;  // tokens/s
  bool below_reading_speed = false;    // mean latency < 200 ms/token
  std::string clock;
  // Every raw sample with its filter outcome.
  std::vector<TokenTimingSample> samples;
  std::vector<bool> kept;

  double tokens_per_second_total() const { return throughput_total.mean; }
  double tokens_per_second_per_stream() const {
    return throughput_per_stream.mean;
  }

  // Line-delimited JSON: a version header, a summary record, then one
  // record per raw sample.
  std::string to_jsonl() const;
  // Throws MALFORMED.
  static BenchmarkReport from_jsonl(std::string_view text);

  friend bool operator==(const BenchmarkReport&,
                         const BenchmarkReport&) = default;
};

// Summary over already-filtered samples. Throws EMPTY_INPUT.
BenchmarkReport summarize(const std::vector<TokenTimingSample>& filtered,
                          const GenerationConfig& cfg);

// filter_outliers + summarize, keeping the raw samples in the report.
BenchmarkReport analyze(const std::vector<TokenTimingSample>& raw,
                        const GenerationConfig& cfg, std::string label,
                        std::string environment);

struct OverheadReport {
  GenerationConfig config;
  double baseline_throughput = 0.0;  // mean total tokens/s
  double secured_throughput = 0.0;
  double baseline_latency = 0.0;  // mean seconds/step
  double secured_latency = 0.0;
  double throughput_overhead_pct = 0.0;
  double latency_overhead_pct = 0.0;

  std::string to_json() const;
};

// Throws CONFIG_MISMATCH.
OverheadReport compare(const BenchmarkReport& baseline,
                       const BenchmarkReport& secured);

// --- targets ----------------------------------------------------------------

// Deterministic prompts for run `run_id`.
std::vector<TokenSequence> bench_prompts(const GenerationConfig& cfg,
                                         std::uint32_t vocab_size,
                                         std::uint32_t run_id);

// Model used by the benchmark targets.
ModelWeights bench_model();

// generate() in the calling process.
GenerationTarget bare_target(std::shared_ptr<const ModelWeights> weights);

// An enclave hosting the model in protected memory: weight pages are
// checked on every step and each step pays `enclave_tax` times its own
// compute time.
class EnclaveTarget {
 public:
  EnclaveTarget(const ModelWeights& weights, double enclave_tax);
  ~EnclaveTarget();

  GenerationTarget target();

 private:
  struct State;
  std::shared_ptr<State> state_;
};

}  // namespace fmtee

#endif  // FMTEE_BENCH_H_
