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

// Deterministic toy language model: a hashed-feature linear scorer over the
// last context_window tokens, with greedy and beam decoding, accuracy
// attestation and training-provenance binding.
//
//   raw[v] = bias[v] + sum_j features[j][bucket(j, ctx_j, v)]
//   score[v] = raw[v] - max_u raw[u]
//
// ctx_0 is the most recent token. Scores are int64 and never positive.

#ifndef FMTEE_INFERENCE_H_
#define FMTEE_INFERENCE_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fmtee/enclave.h"
#include "fmtee/model_store.h"

namespace fmtee {

using Token = std::uint32_t;
using TokenSequence = std::vector<Token>;

struct GenerationConfig {
  std::uint32_t batch_size = 1;
  std::uint32_t beam_width = 1;
  std::uint32_t max_new_tokens = 1;
  std::uint32_t input_length = 1;

  friend bool operator==(const GenerationConfig&,
                         const GenerationConfig&) = default;
};

struct ScoredBeam {
  // Generated tokens only; the prompt is shared by every beam.
  TokenSequence tokens;
  std::int64_t score = 0;

  friend bool operator==(const ScoredBeam&, const ScoredBeam&) = default;
};

// Feature bucket for context position j holding `context_token`, scored
// against candidate `candidate`.
std::uint32_t feature_bucket(std::uint32_t j, Token context_token,
                             Token candidate, std::uint32_t embed_dim);

// Throws EMPTY_CONTEXT, INVALID_ARGUMENT for out-of-vocabulary tokens.
std::vector<std::int64_t> score_next(const ModelWeights& w,
                                     std::span<const Token> context);

// Smallest index among the maxima.
Token argmax(std::span<const std::int64_t> scores);

// Final beams after `steps`, best first (score descending, then
// lexicographically smaller).
std::vector<ScoredBeam> beam_search(const ModelWeights& w,
                                    std::span<const Token> prompt,
                                    std::uint32_t beam_width,
                                    std::uint32_t steps);

struct GenerationOptions {
  // Synthetic slowdown: each step busy-waits for tax times the step's own
  // compute time.
  double enclave_tax = 0.0;
  // Called once per step before scoring; the enclave host uses it to
  // re-check weight pages.
  std::function<void()> on_memory_access;
};

struct GenerationResult {
  std::vector<TokenSequence> completions;
  // One wall-clock sample per step; each step yields batch_size tokens.
  std::vector<double> step_seconds;
};

// generate() one step at a time, so a caller can interleave several
// generations. Throws like generate() on construction.
class GenerationSession {
 public:
  GenerationSession(const ModelWeights& w, std::vector<TokenSequence> prompts,
                    const GenerationConfig& cfg, GenerationOptions opts = {});
  ~GenerationSession();

  bool done() const;
  // Produces the next token of every batch item; returns the step's
  // wall-clock seconds, tax included.
  double step();
  // Best beam of each batch item so far.
  std::vector<TokenSequence> completions() const;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

// Throws BATCH_SIZE_MISMATCH, EMPTY_CONTEXT, INVALID_ARGUMENT.
GenerationResult generate(const ModelWeights& w,
                          const std::vector<TokenSequence>& prompts,
                          const GenerationConfig& cfg,
                          const GenerationOptions& opts = {});

// Dataset file: one example per line, `t1,t2,...<TAB>expected`.
struct DatasetItem {
  TokenSequence prompt;
  Token expected = 0;

  friend bool operator==(const DatasetItem&, const DatasetItem&) = default;
};

std::vector<DatasetItem> parse_dataset(std::string_view text);
std::string render_dataset(const std::vector<DatasetItem>& items);
crypto::Digest256 dataset_digest(const std::vector<DatasetItem>& items);

std::string render_tokens(std::span<const Token> tokens);
// Comma separated decimal. Throws INVALID_ARGUMENT.
TokenSequence parse_tokens(std::string_view csv);

struct AccuracyReport {
  crypto::Digest256 model_digest;
  crypto::Digest256 dataset_digest;
  std::uint64_t correct = 0;
  std::uint64_t total = 0;

  double accuracy() const {
    return total ? static_cast<double>(correct) / static_cast<double>(total)
                 : 0.0;
  }
  // lp("fmtee-accuracy-v1") | model digest | dataset digest | u64 correct
  // | u64 total
  Bytes serialize() const;
  static AccuracyReport parse(ByteView bytes);

  friend bool operator==(const AccuracyReport&,
                         const AccuracyReport&) = default;
};

// Greedy next-token accuracy. Throws EMPTY_DATASET.
AccuracyReport evaluate_accuracy(const ModelWeights& w,
                                 const std::vector<DatasetItem>& items);

struct AttestedAccuracy {
  AccuracyReport report;
  AttestationQuote quote;
};

// Runs inside the enclave; report_data = digest(report.serialize()).
// Throws NO_MODEL_LOADED, EMPTY_DATASET.
AttestedAccuracy evaluate_and_attest_accuracy(
    ModelSlot& slot, const std::vector<DatasetItem>& items);

// Third-party check: quote signed by `root` and bound to `report`.
bool verify_accuracy_attestation(const AccuracyReport& report,
                                 const AttestationQuote& quote,
                                 const crypto::SigningPublicKey& root);

// digest(dataset_digest | model_digest)
ReportData provenance_report_data(const crypto::Digest256& dataset_digest,
                                  const crypto::Digest256& model_digest);

// Throws ENCLAVE_CRASHED.
AttestationQuote bind_training_provenance(
    const EnclaveContext& ctx, const crypto::Digest256& dataset_digest,
    const crypto::Digest256& model_digest);

bool verify_provenance_binding(const AttestationQuote& quote,
                               const crypto::Digest256& dataset_digest,
                               const crypto::Digest256& model_digest,
                               const crypto::SigningPublicKey& root);

}  // namespace fmtee

#endif  // FMTEE_INFERENCE_H_
