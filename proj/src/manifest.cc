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

#include "fmtee/manifest.h"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "fmtee/kv.h"

namespace fmtee {
namespace {

constexpr std::string_view kMeasurementDomain = "fmtee-measurement-v1";

std::uint64_t parse_size(const std::string& text, std::size_t line) {
  if (text.empty()) throw SyntaxError(line, "empty enclave_size");
  std::uint64_t mult = 1;
  std::string digits = text;
  switch (text.back()) {
    case 'K': mult = 1ull << 10; digits.pop_back(); break;
    case 'M': mult = 1ull << 20; digits.pop_back(); break;
    case 'G': mult = 1ull << 30; digits.pop_back(); break;
    default: break;
  }
  std::uint64_t n = parse_u64(digits, line);
  if (n > UINT64_MAX / mult) throw SyntaxError(line, "enclave_size overflows");
  return n * mult;
}

std::string render_size(std::uint64_t size) {
  if (size != 0 && size % (1ull << 30) == 0) {
    return std::to_string(size >> 30) + "G";
  }
  if (size != 0 && size % (1ull << 20) == 0) {
    return std::to_string(size >> 20) + "M";
  }
  if (size != 0 && size % (1ull << 10) == 0) {
    return std::to_string(size >> 10) + "K";
  }
  return std::to_string(size);
}

AttestationMode parse_mode(const std::string& text, std::size_t line) {
  if (text == "none") return AttestationMode::kNone;
  if (text == "local") return AttestationMode::kLocal;
  if (text == "remote") return AttestationMode::kRemote;
  throw SyntaxError(line, "attestation_mode must be none, local or remote");
}

void check_unique(const std::vector<std::string>& paths, const char* what) {
  std::set<std::string_view> seen;
  for (const std::string& p : paths) {
    if (!is_normalized_path(p)) {
      throw Error(ErrorCode::kInvariantViolation,
                  std::string(what) + " path is not normalized: " + p);
    }
    if (!seen.insert(p).second) {
      throw Error(ErrorCode::kInvariantViolation,
                  std::string("duplicate ") + what + ": " + p);
    }
  }
}

}  // namespace

std::string_view attestation_mode_name(AttestationMode mode) {
  switch (mode) {
    case AttestationMode::kNone: return "none";
    case AttestationMode::kLocal: return "local";
    case AttestationMode::kRemote: return "remote";
  }
  return "none";
}

bool is_normalized_path(std::string_view path) {
  if (path.empty() || path.back() == '/') return false;
  std::size_t start = path.front() == '/' ? 1 : 0;
  while (start <= path.size()) {
    std::size_t slash = path.find('/', start);
    std::string_view seg = path.substr(
        start, slash == std::string_view::npos ? std::string_view::npos
                                               : slash - start);
    if (seg.empty() || seg == "." || seg == "..") return false;
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  return true;
}

void check_manifest_invariants(const Manifest& m) {
  if (m.enclave_size < kMinEnclaveSize) {
    throw Error(ErrorCode::kInvariantViolation, "enclave_size below 1 MiB");
  }
  if ((m.enclave_size & (m.enclave_size - 1)) != 0) {
    throw Error(ErrorCode::kInvariantViolation,
                "enclave_size is not a power of two");
  }
  if (m.thread_count == 0) {
    throw Error(ErrorCode::kInvariantViolation, "thread_count must be positive");
  }
  check_unique(m.trusted_files, "trusted_file");
  check_unique(m.allowed_files, "allowed_file");
  for (const std::string& p : m.trusted_files) {
    if (std::find(m.allowed_files.begin(), m.allowed_files.end(), p) !=
        m.allowed_files.end()) {
      throw Error(ErrorCode::kInvariantViolation,
                  "path is both trusted and allowed: " + p);
    }
  }
  if (std::find(m.trusted_files.begin(), m.trusted_files.end(),
                m.entrypoint) == m.trusted_files.end()) {
    throw Error(ErrorCode::kInvariantViolation,
                "entrypoint is not a trusted file: " + m.entrypoint);
  }
}

Manifest parse_manifest(std::string_view text) {
  Manifest m;
  bool have_size = false, have_threads = false, have_entry = false;
  std::set<std::string> scalars_seen;
  for (const KvEntry& e : parse_kv(text)) {
    if (e.key == "trusted_file") {
      m.trusted_files.push_back(e.value);
      continue;
    }
    if (e.key == "allowed_file") {
      m.allowed_files.push_back(e.value);
      continue;
    }
    if (!scalars_seen.insert(e.key).second &&
        (e.key == "enclave_size" || e.key == "thread_count" ||
         e.key == "entrypoint" || e.key == "key_provider" ||
         e.key == "attestation_mode")) {
      throw Error(ErrorCode::kDuplicateKey,
                  e.key + " (line " + std::to_string(e.line) + ")");
    }
    if (e.key == "enclave_size") {
      m.enclave_size = parse_size(e.value, e.line);
      have_size = true;
    } else if (e.key == "thread_count") {
      std::uint64_t n = parse_u64(e.value, e.line);
      if (n > UINT32_MAX) throw SyntaxError(e.line, "thread_count too large");
      m.thread_count = static_cast<std::uint32_t>(n);
      have_threads = true;
    } else if (e.key == "entrypoint") {
      m.entrypoint = e.value;
      have_entry = true;
    } else if (e.key == "key_provider") {
      m.key_provider = e.value;
    } else if (e.key == "attestation_mode") {
      m.attestation_mode = parse_mode(e.value, e.line);
    } else {
      throw SyntaxError(e.line, "unknown manifest key '" + e.key + "'");
    }
  }
  if (!have_size || !have_threads || !have_entry) {
    throw Error(ErrorCode::kInvariantViolation,
                "manifest requires enclave_size, thread_count and entrypoint");
  }
  check_manifest_invariants(m);
  return m;
}

std::string render_manifest(const Manifest& m) {
  std::ostringstream out;
  out << "enclave_size = " << render_size(m.enclave_size) << "\n";
  out << "thread_count = " << m.thread_count << "\n";
  out << "entrypoint = " << m.entrypoint << "\n";
  for (const auto& p : m.trusted_files) out << "trusted_file = " << p << "\n";
  for (const auto& p : m.allowed_files) out << "allowed_file = " << p << "\n";
  if (!m.key_provider.empty()) {
    out << "key_provider = " << m.key_provider << "\n";
  }
  out << "attestation_mode = " << attestation_mode_name(m.attestation_mode)
      << "\n";
  return out.str();
}

void FileTree::put(std::string path, Bytes content) {
  if (!is_normalized_path(path)) {
    throw Error(ErrorCode::kInvariantViolation, "path not normalized: " + path);
  }
  files_[std::move(path)] = std::move(content);
}

bool FileTree::erase(const std::string& path) { return files_.erase(path) > 0; }

const Bytes* FileTree::find(std::string_view path) const {
  auto it = files_.find(path);
  return it == files_.end() ? nullptr : &it->second;
}

FileTree FileTree::from_directory(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) {
    throw Error(ErrorCode::kIoError, "not a directory: " + root.string());
  }
  FileTree tree;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    if (!in) {
      throw Error(ErrorCode::kIoError, "cannot read " + entry.path().string());
    }
    Bytes content((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
    std::string rel = fs::relative(entry.path(), root).generic_string();
    tree.put("/" + rel, std::move(content));
  }
  return tree;
}

std::string describe(const ValidationIssue& issue) {
  switch (issue.kind) {
    case ValidationIssue::Kind::kMissingTrustedFile:
      return "MISSING_TRUSTED_FILE(" + issue.path + ")";
    case ValidationIssue::Kind::kMissingEntrypoint:
      return "MISSING_ENTRYPOINT(" + issue.path + ")";
  }
  return "UNKNOWN(" + issue.path + ")";
}

std::vector<ValidationIssue> validate_against_tree(const Manifest& m,
                                                   const FileTree& tree) {
  std::vector<ValidationIssue> issues;
  for (const std::string& p : m.trusted_files) {
    if (!tree.contains(p)) {
      issues.push_back({ValidationIssue::Kind::kMissingTrustedFile, p});
    }
  }
  if (!tree.contains(m.entrypoint)) {
    issues.push_back({ValidationIssue::Kind::kMissingEntrypoint, m.entrypoint});
  }
  return issues;
}

Bytes measurement_encoding(const Manifest& m, const FileTree& tree) {
  auto issues = validate_against_tree(m, tree);
  if (!issues.empty()) {
    std::string detail;
    for (const auto& i : issues) detail += describe(i) + " ";
    throw Error(ErrorCode::kValidationFailed, detail);
  }
  std::vector<std::string> trusted = m.trusted_files;
  std::sort(trusted.begin(), trusted.end());

  ByteWriter w;
  w.lp(kMeasurementDomain)
      .u64(m.enclave_size)
      .u32(m.thread_count)
      .lp(m.entrypoint)
      .lp(m.key_provider)
      .u8(static_cast<std::uint8_t>(m.attestation_mode))
      .u32(static_cast<std::uint32_t>(trusted.size()));
  for (const std::string& p : trusted) {
    w.lp(p).fixed(crypto::digest(*tree.find(p)));
  }
  return w.take();
}

crypto::Digest256 compute_measurement(const Manifest& m, const FileTree& tree) {
  return crypto::digest(measurement_encoding(m, tree));
}

}  // namespace fmtee
