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

#include "fmtee/kv.h"

#include <charconv>

#include "fmtee/error.h"

namespace fmtee {

std::string trim(std::string_view s) {
  const char* ws = " \t\r\n";
  std::size_t b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  std::size_t e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::vector<KvEntry> parse_kv(std::string_view text) {
  std::vector<KvEntry> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    std::string t = trim(line);
    if (!t.empty() && t[0] != '#') {
      std::size_t eq = t.find('=');
      if (eq == std::string::npos) {
        throw SyntaxError(line_no, "expected 'key = value'");
      }
      std::string key = trim(std::string_view(t).substr(0, eq));
      if (key.empty()) throw SyntaxError(line_no, "empty key");
      out.push_back({key, trim(std::string_view(t).substr(eq + 1)), line_no});
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

KvDocument::KvDocument(std::string_view text) : entries_(parse_kv(text)) {}

std::optional<std::string> KvDocument::get(std::string_view key) {
  consumed_.insert(std::string(key));
  const KvEntry* found = nullptr;
  for (const KvEntry& e : entries_) {
    if (e.key != key) continue;
    if (found) {
      throw Error(ErrorCode::kDuplicateKey,
                  std::string(key) + " (line " + std::to_string(e.line) + ")");
    }
    found = &e;
  }
  if (!found) return std::nullopt;
  return found->value;
}

std::string KvDocument::require(std::string_view key) {
  auto v = get(key);
  if (!v) {
    throw Error(ErrorCode::kInvariantViolation,
                "missing required key '" + std::string(key) + "'");
  }
  return *v;
}

std::vector<std::string> KvDocument::get_all(std::string_view key) {
  consumed_.insert(std::string(key));
  std::vector<std::string> out;
  for (const KvEntry& e : entries_) {
    if (e.key == key) out.push_back(e.value);
  }
  return out;
}

void KvDocument::reject_unknown() const {
  for (const KvEntry& e : entries_) {
    if (!consumed_.contains(e.key)) {
      throw SyntaxError(e.line, "unknown key '" + e.key + "'");
    }
  }
}

std::uint64_t parse_u64(std::string_view text, std::size_t line) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw SyntaxError(line, "invalid unsigned integer '" + std::string(text) +
                                "'");
  }
  return v;
}

}  // namespace fmtee
