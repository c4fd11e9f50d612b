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

#include "fmtee/inference.h"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <sstream>

#include "fmtee/kv.h"

namespace fmtee {
namespace {

constexpr std::string_view kAccuracyDomain = "fmtee-accuracy-v1";

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t position_key(std::uint32_t j, Token context_token) {
  return mix64((std::uint64_t{j} << 32 | context_token) +
               0x9E3779B97F4A7C15ull);
}

inline std::uint32_t bucket_from_key(std::uint64_t key, Token candidate,
                                     std::uint32_t embed_dim) {
  return static_cast<std::uint32_t>(mix64(key ^ candidate) % embed_dim);
}

// Scores into `out` for the last min(len, window) tokens of `context`.
void score_into(const ModelWeights& w, std::span<const Token> context,
                std::vector<std::int64_t>& out) {
  if (context.empty()) throw Error(ErrorCode::kEmptyContext);
  std::size_t k = std::min<std::size_t>(context.size(), w.context_window);
  std::uint64_t keys[64];
  std::vector<std::uint64_t> big_keys;
  std::uint64_t* key = keys;
  if (k > 64) {
    big_keys.resize(k);
    key = big_keys.data();
  }
  for (std::size_t j = 0; j < k; ++j) {
    Token t = context[context.size() - 1 - j];
    if (t >= w.vocab_size) {
      throw Error(ErrorCode::kInvalidArgument,
                  "token " + std::to_string(t) + " outside vocabulary");
    }
    key[j] = position_key(static_cast<std::uint32_t>(j), t);
  }
  out.resize(w.vocab_size);
  std::int64_t best = INT64_MIN;
  for (Token v = 0; v < w.vocab_size; ++v) {
    std::int64_t s = w.token_bias[v];
    for (std::size_t j = 0; j < k; ++j) {
      s += w.features[j * w.embed_dim + bucket_from_key(key[j], v, w.embed_dim)];
    }
    out[v] = s;
    best = std::max(best, s);
  }
  for (auto& s : out) s -= best;
}

// Beam state for one prompt.
struct BeamSet {
  std::span<const Token> prompt;
  std::vector<ScoredBeam> beams;
};

void context_of(const ModelWeights& w, std::span<const Token> prompt,
                const TokenSequence& generated, TokenSequence& ctx) {
  std::size_t want = w.context_window;
  ctx.clear();
  std::size_t from_prompt =
      generated.size() >= want ? 0
                               : std::min(prompt.size(), want - generated.size());
  ctx.insert(ctx.end(), prompt.end() - from_prompt, prompt.end());
  std::size_t from_gen = std::min(generated.size(), want);
  ctx.insert(ctx.end(), generated.end() - from_gen, generated.end());
}

struct Candidate {
  std::int64_t score;
  std::uint32_t parent_rank;  // lexicographic rank of the parent sequence
  std::uint32_t parent;
  Token token;
};

// Better-first: higher score, then lexicographically smaller sequence.
bool better(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.parent_rank != b.parent_rank) return a.parent_rank < b.parent_rank;
  return a.token < b.token;
}

void beam_step(const ModelWeights& w, BeamSet& set, std::uint32_t width,
               std::vector<std::int64_t>& scores, TokenSequence& ctx) {
  const std::size_t n = set.beams.size();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return set.beams[a].tokens < set.beams[b].tokens;
  });
  std::vector<std::uint32_t> rank(n);
  for (std::uint32_t r = 0; r < n; ++r) rank[order[r]] = r;

  std::vector<Candidate> cands;
  cands.reserve(n * w.vocab_size);
  for (std::uint32_t b = 0; b < n; ++b) {
    context_of(w, set.prompt, set.beams[b].tokens, ctx);
    score_into(w, ctx, scores);
    for (Token v = 0; v < w.vocab_size; ++v) {
      cands.push_back({set.beams[b].score + scores[v], rank[b], b, v});
    }
  }
  std::size_t keep = std::min<std::size_t>(width, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + keep, cands.end(), better);
  std::vector<ScoredBeam> next;
  next.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    ScoredBeam nb;
    nb.tokens = set.beams[cands[i].parent].tokens;
    nb.tokens.push_back(cands[i].token);
    nb.score = cands[i].score;
    next.push_back(std::move(nb));
  }
  set.beams = std::move(next);
}

void greedy_step(const ModelWeights& w, BeamSet& set,
                 std::vector<std::int64_t>& scores, TokenSequence& ctx) {
  ScoredBeam& beam = set.beams.front();
  context_of(w, set.prompt, beam.tokens, ctx);
  score_into(w, ctx, scores);
  Token t = argmax(scores);
  beam.tokens.push_back(t);
  beam.score += scores[t];
}

void check_tokens(const ModelWeights& w, std::span<const Token> tokens) {
  for (Token t : tokens) {
    if (t >= w.vocab_size) {
      throw Error(ErrorCode::kInvalidArgument,
                  "token " + std::to_string(t) + " outside vocabulary");
    }
  }
}

}  // namespace

std::uint32_t feature_bucket(std::uint32_t j, Token context_token,
                             Token candidate, std::uint32_t embed_dim) {
  return bucket_from_key(position_key(j, context_token), candidate, embed_dim);
}

std::vector<std::int64_t> score_next(const ModelWeights& w,
                                     std::span<const Token> context) {
  std::vector<std::int64_t> out;
  score_into(w, context, out);
  return out;
}

Token argmax(std::span<const std::int64_t> scores) {
  if (scores.empty()) throw Error(ErrorCode::kInvalidArgument, "no scores");
  return static_cast<Token>(std::max_element(scores.begin(), scores.end()) -
                            scores.begin());
}

std::vector<ScoredBeam> beam_search(const ModelWeights& w,
                                    std::span<const Token> prompt,
                                    std::uint32_t beam_width,
                                    std::uint32_t steps) {
  if (beam_width == 0) {
    throw Error(ErrorCode::kInvalidArgument, "beam_width must be >= 1");
  }
  if (prompt.empty()) throw Error(ErrorCode::kEmptyContext);
  check_tokens(w, prompt);
  BeamSet set{prompt, {ScoredBeam{}}};
  std::vector<std::int64_t> scores;
  TokenSequence ctx;
  for (std::uint32_t s = 0; s < steps; ++s) {
    beam_step(w, set, beam_width, scores, ctx);
  }
  return set.beams;
}

struct GenerationSession::State {
  const ModelWeights* w = nullptr;
  GenerationConfig cfg;
  GenerationOptions opts;
  std::vector<TokenSequence> prompts;
  std::vector<BeamSet> sets;
  std::vector<std::int64_t> scores;
  TokenSequence ctx;
  std::uint32_t steps_done = 0;
};

GenerationSession::GenerationSession(const ModelWeights& w,
                                     std::vector<TokenSequence> prompts,
                                     const GenerationConfig& cfg,
                                     GenerationOptions opts)
    : state_(std::make_unique<State>()) {
  if (prompts.size() != cfg.batch_size) {
    throw Error(ErrorCode::kBatchSizeMismatch,
                std::to_string(prompts.size()) + " prompts for batch size " +
                    std::to_string(cfg.batch_size));
  }
  if (cfg.beam_width == 0 || cfg.max_new_tokens == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "beam_width and max_new_tokens must be >= 1");
  }
  for (const TokenSequence& p : prompts) {
    if (p.empty()) throw Error(ErrorCode::kEmptyContext);
    if (p.size() != cfg.input_length) {
      throw Error(ErrorCode::kInvalidArgument,
                  "prompt length " + std::to_string(p.size()) +
                      " != input_length " + std::to_string(cfg.input_length));
    }
    check_tokens(w, p);
  }
  State& st = *state_;
  st.w = &w;
  st.cfg = cfg;
  st.opts = std::move(opts);
  st.prompts = std::move(prompts);
  st.sets.reserve(st.prompts.size());
  for (const TokenSequence& p : st.prompts) {
    st.sets.push_back(BeamSet{p, {ScoredBeam{}}});
  }
}

GenerationSession::~GenerationSession() = default;

bool GenerationSession::done() const {
  return state_->steps_done >= state_->cfg.max_new_tokens;
}

double GenerationSession::step() {
  using Clock = std::chrono::steady_clock;
  State& st = *state_;
  if (done()) {
    throw Error(ErrorCode::kInvalidArgument, "generation already finished");
  }
  auto t0 = Clock::now();
  if (st.opts.on_memory_access) st.opts.on_memory_access();
  for (BeamSet& set : st.sets) {
    if (st.cfg.beam_width == 1) {
      greedy_step(*st.w, set, st.scores, st.ctx);
    } else {
      beam_step(*st.w, set, st.cfg.beam_width, st.scores, st.ctx);
    }
  }
  auto t1 = Clock::now();
  if (st.opts.enclave_tax > 0) {
    auto until = t1 + std::chrono::duration_cast<Clock::duration>(
                          (t1 - t0) * st.opts.enclave_tax);
    while (Clock::now() < until) {
    }
  }
  ++st.steps_done;
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<TokenSequence> GenerationSession::completions() const {
  std::vector<TokenSequence> out;
  out.reserve(state_->sets.size());
  for (const BeamSet& set : state_->sets) {
    out.push_back(set.beams.front().tokens);
  }
  return out;
}

GenerationResult generate(const ModelWeights& w,
                          const std::vector<TokenSequence>& prompts,
                          const GenerationConfig& cfg,
                          const GenerationOptions& opts) {
  GenerationSession session(w, prompts, cfg, opts);
  GenerationResult result;
  result.step_seconds.reserve(cfg.max_new_tokens);
  while (!session.done()) result.step_seconds.push_back(session.step());
  result.completions = session.completions();
  return result;
}

// --- datasets ---------------------------------------------------------------

std::string render_tokens(std::span<const Token> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(tokens[i]);
  }
  return out;
}

TokenSequence parse_tokens(std::string_view csv) {
  TokenSequence out;
  std::string text = trim(csv);
  if (text.empty()) return out;
  std::size_t pos = 0;
  for (;;) {
    std::size_t comma = text.find(',', pos);
    std::string field = trim(text.substr(pos, comma - pos));
    std::uint64_t v;
    try {
      v = parse_u64(field, 0);
    } catch (const Error&) {
      throw Error(ErrorCode::kInvalidArgument, "bad token '" + field + "'");
    }
    if (v > UINT32_MAX) {
      throw Error(ErrorCode::kInvalidArgument, "token too large: " + field);
    }
    out.push_back(static_cast<Token>(v));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::vector<DatasetItem> parse_dataset(std::string_view text) {
  std::vector<DatasetItem> items;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (trim(line).empty()) {
      if (end == text.size()) break;
      continue;
    }
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw SyntaxError(line_no, "expected <tokens>TAB<expected>");
    }
    DatasetItem item;
    try {
      item.prompt = parse_tokens(line.substr(0, tab));
      TokenSequence expected = parse_tokens(line.substr(tab + 1));
      if (expected.size() != 1) throw Error(ErrorCode::kInvalidArgument);
      item.expected = expected[0];
    } catch (const Error& e) {
      throw SyntaxError(line_no, e.detail().empty() ? "bad expected token"
                                                    : e.detail());
    }
    items.push_back(std::move(item));
    if (end == text.size()) break;
  }
  return items;
}

std::string render_dataset(const std::vector<DatasetItem>& items) {
  std::string out;
  for (const DatasetItem& item : items) {
    out += render_tokens(item.prompt);
    out += "\t";
    out += std::to_string(item.expected);
    out += "\n";
  }
  return out;
}

crypto::Digest256 dataset_digest(const std::vector<DatasetItem>& items) {
  return crypto::digest(render_dataset(items));
}

// --- accuracy and provenance ------------------------------------------------

Bytes AccuracyReport::serialize() const {
  ByteWriter w;
  w.lp(kAccuracyDomain)
      .fixed(model_digest)
      .fixed(dataset_digest)
      .u64(correct)
      .u64(total);
  return w.take();
}

AccuracyReport AccuracyReport::parse(ByteView bytes) {
  ByteReader r(bytes);
  if (r.lp_string(64) != kAccuracyDomain) {
    throw Error(ErrorCode::kMalformed, "not an accuracy report");
  }
  AccuracyReport a;
  a.model_digest = r.fixed<crypto::Digest256>();
  a.dataset_digest = r.fixed<crypto::Digest256>();
  a.correct = r.u64();
  a.total = r.u64();
  r.expect_end();
  if (a.correct > a.total) {
    throw Error(ErrorCode::kMalformed, "correct exceeds total");
  }
  return a;
}

AccuracyReport evaluate_accuracy(const ModelWeights& w,
                                 const std::vector<DatasetItem>& items) {
  if (items.empty()) throw Error(ErrorCode::kEmptyDataset);
  AccuracyReport r;
  r.model_digest = w.digest();
  r.dataset_digest = dataset_digest(items);
  r.total = items.size();
  std::vector<std::int64_t> scores;
  for (const DatasetItem& item : items) {
    score_into(w, item.prompt, scores);
    if (argmax(scores) == item.expected) ++r.correct;
  }
  return r;
}

AttestedAccuracy evaluate_and_attest_accuracy(
    ModelSlot& slot, const std::vector<DatasetItem>& items) {
  const ModelWeights& w = slot.weights();
  if (items.empty()) throw Error(ErrorCode::kEmptyDataset);
  AttestedAccuracy out;
  out.report = evaluate_accuracy(w, items);
  out.report.model_digest = slot.model_digest();
  const EnclaveContext& ctx = slot.context();
  out.quote = ctx->get_quote(
      ctx.token, to_report_data(crypto::digest(out.report.serialize())));
  return out;
}

bool verify_accuracy_attestation(const AccuracyReport& report,
                                 const AttestationQuote& quote,
                                 const crypto::SigningPublicKey& root) {
  return quote.verify_signature(root) &&
         quote.report_data ==
             to_report_data(crypto::digest(report.serialize()));
}

ReportData provenance_report_data(const crypto::Digest256& dataset_digest,
                                  const crypto::Digest256& model_digest) {
  return to_report_data(
      crypto::digest(concat({dataset_digest.view(), model_digest.view()})));
}

AttestationQuote bind_training_provenance(
    const EnclaveContext& ctx, const crypto::Digest256& dataset_digest,
    const crypto::Digest256& model_digest) {
  return ctx->get_quote(ctx.token,
                        provenance_report_data(dataset_digest, model_digest));
}

bool verify_provenance_binding(const AttestationQuote& quote,
                               const crypto::Digest256& dataset_digest,
                               const crypto::Digest256& model_digest,
                               const crypto::SigningPublicKey& root) {
  return quote.verify_signature(root) &&
         quote.report_data ==
             provenance_report_data(dataset_digest, model_digest);
}

}  // namespace fmtee
