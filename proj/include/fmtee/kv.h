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

#ifndef FMTEE_KV_H_
#define FMTEE_KV_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace fmtee {

// One `key = value` line. Blank lines and lines whose first non-blank
// character is '#' are skipped by the parser.
struct KvEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

// Throws SyntaxError for a non-comment line without '=' or with an empty key.
std::vector<KvEntry> parse_kv(std::string_view text);

// Typed view over parsed entries for config-style files where most keys are
// scalars. Tracks which keys were consumed so callers can reject unknown
// ones.
class KvDocument {
 public:
  explicit KvDocument(std::string_view text);

  // Scalar lookups throw DUPLICATE_KEY if the key appears more than once.
  std::optional<std::string> get(std::string_view key);
  // Throws INVARIANT_VIOLATION when absent.
  std::string require(std::string_view key);
  std::vector<std::string> get_all(std::string_view key);

  // Throws SyntaxError naming the first key never consumed.
  void reject_unknown() const;

 private:
  std::vector<KvEntry> entries_;
  std::set<std::string, std::less<>> consumed_;
};

// Strict decimal parse; throws SyntaxError at `line` on junk or overflow.
std::uint64_t parse_u64(std::string_view text, std::size_t line);

std::string trim(std::string_view s);

}  // namespace fmtee

#endif  // FMTEE_KV_H_
