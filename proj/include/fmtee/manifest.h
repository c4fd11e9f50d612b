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

// Enclave manifests: a line-oriented `key = value` description of what an
// enclave runs, and the reference measurement derived from it.
//
//   # bytes, optional K/M/G binary suffix
//   enclave_size = 1G
//   thread_count = 4
//   entrypoint = /app/server
//   # repeated; measured
//   trusted_file = /app/server
//   # repeated; accessible but not measured
//   allowed_file = /models/m.fmte
//   key_provider = provider://model-owner
//   # none | local | remote
//   attestation_mode = remote
//
// Comments must be on their own line; '#' inside a value is literal.

#ifndef FMTEE_MANIFEST_H_
#define FMTEE_MANIFEST_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fmtee/bytes.h"
#include "fmtee/crypto.h"

namespace fmtee {

inline constexpr std::uint64_t kMinEnclaveSize = 1ull << 20;

enum class AttestationMode : std::uint8_t { kNone = 0, kLocal = 1, kRemote = 2 };

std::string_view attestation_mode_name(AttestationMode mode);

struct Manifest {
  std::uint64_t enclave_size = 0;
  std::uint32_t thread_count = 0;
  std::string entrypoint;
  std::vector<std::string> trusted_files;
  std::vector<std::string> allowed_files;
  std::string key_provider;
  AttestationMode attestation_mode = AttestationMode::kNone;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

// Throws SyntaxError (with line), DUPLICATE_KEY for repeated scalar keys, or
// INVARIANT_VIOLATION when the parsed manifest breaks a type invariant.
Manifest parse_manifest(std::string_view text);

// Canonical text form; parse_manifest(render_manifest(m)) == m.
std::string render_manifest(const Manifest& m);

// Throws INVARIANT_VIOLATION naming the first broken rule.
void check_manifest_invariants(const Manifest& m);

// No "." or ".." segments, no empty segments, no trailing '/', not empty.
bool is_normalized_path(std::string_view path);

// Map from normalized path to file contents.
class FileTree {
 public:
  // Throws INVARIANT_VIOLATION for a non-normalized path.
  void put(std::string path, Bytes content);
  void put(std::string path, std::string_view content) {
    put(std::move(path), to_bytes(content));
  }
  bool erase(const std::string& path);

  const Bytes* find(std::string_view path) const;
  bool contains(std::string_view path) const { return find(path) != nullptr; }
  const std::map<std::string, Bytes, std::less<>>& files() const {
    return files_;
  }

  // Loads every regular file under `root`; paths are "/" + relative path.
  static FileTree from_directory(const std::filesystem::path& root);

 private:
  std::map<std::string, Bytes, std::less<>> files_;
};

struct ValidationIssue {
  enum class Kind { kMissingTrustedFile, kMissingEntrypoint };
  Kind kind;
  std::string path;

  friend bool operator==(const ValidationIssue&,
                         const ValidationIssue&) = default;
};

std::string describe(const ValidationIssue& issue);

// Empty iff every trusted file exists in `tree` and the entrypoint is
// present. Allowed files may be absent; they can appear at runtime.
std::vector<ValidationIssue> validate_against_tree(const Manifest& m,
                                                   const FileTree& tree);

// The byte string that is hashed into the measurement. Layout in FORMATS.md.
Bytes measurement_encoding(const Manifest& m, const FileTree& tree);

// Throws VALIDATION_FAILED if validate_against_tree reports any issue.
crypto::Digest256 compute_measurement(const Manifest& m, const FileTree& tree);

}  // namespace fmtee

#endif  // FMTEE_MANIFEST_H_
