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

// Software model of a TEE platform: measured launch, protected memory with
// confidentiality and integrity semantics, quote generation and sealing.
//
// Protected memory is stored encrypted, one keystream per 4 KiB page, with a
// shadow digest of each page's stored bytes kept out of the host's reach.
// Host reads return the stored (garbled) bytes. Host writes land directly in
// the stored bytes and mark the page; the next in-enclave access to a marked
// page re-hashes it, and a mismatch crashes the enclave with
// INTEGRITY_FAULT. Once crashed, every in-enclave operation fails with
// ENCLAVE_CRASHED.

#ifndef FMTEE_ENCLAVE_H_
#define FMTEE_ENCLAVE_H_

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fmtee/bytes.h"
#include "fmtee/crypto.h"
#include "fmtee/manifest.h"

namespace fmtee {

enum class TeeType : std::uint8_t { kApplication = 1, kVm = 2 };

std::string_view tee_type_name(TeeType type);
// Accepts "application"/"sgx" and "vm"/"tdx". Throws INVALID_ARGUMENT.
TeeType parse_tee_type(std::string_view text);

using PlatformId = FixedBytes<16, struct PlatformIdTag>;
using ReportData = FixedBytes<32, struct ReportDataTag>;
using KeyId = FixedBytes<16, struct KeyIdTag>;

inline ReportData to_report_data(const crypto::Digest256& d) {
  return ReportData::from(d.view());
}

// The hardware root of trust. The root signing key is only reachable from
// Enclave::get_quote.
class PlatformRoot {
 public:
  static std::shared_ptr<const PlatformRoot> create(TeeType tee_type);
  // Deterministic platform (id, root key, sealing secret) for tests and for
  // CSP processes that must keep a stable identity across restarts.
  static std::shared_ptr<const PlatformRoot> from_seed(
      TeeType tee_type, const crypto::KeySeed& seed);

  const PlatformId& platform_id() const { return platform_id_; }
  TeeType tee_type() const { return tee_type_; }
  const crypto::SigningPublicKey& root_public_key() const {
    return root_.public_key();
  }

 private:
  friend class Enclave;
  PlatformRoot(TeeType tee_type, const crypto::KeySeed& seed);

  TeeType tee_type_;
  PlatformId platform_id_;
  crypto::SigningKeyPair root_;
  crypto::AeadKey seal_secret_;
};

// Signed evidence binding a measurement and 32 bytes of report data to a
// platform. `tee_type` is kept as a raw byte so unknown values survive
// parsing and are rejected by policy rather than by the parser.
struct AttestationQuote {
  static constexpr std::uint16_t kVersion = 1;

  std::uint8_t tee_type = 0;
  PlatformId platform_id;
  crypto::Digest256 measurement;
  ReportData report_data;
  crypto::Signature signature;

  // Domain tag followed by every field before the signature.
  Bytes signed_message() const;
  Bytes serialize() const;
  // Throws Error(`code`) on any framing problem.
  static AttestationQuote parse(ByteView bytes,
                                ErrorCode code = ErrorCode::kMalformed);

  bool verify_signature(const crypto::SigningPublicKey& root) const;

  friend bool operator==(const AttestationQuote&,
                         const AttestationQuote&) = default;
};

// Parses and verifies in one step; false on malformed input.
bool verify_serialized_quote(ByteView bytes,
                             const crypto::SigningPublicKey& root);

// Capability separating in-enclave code from host code. A default
// constructed token is the host's (empty) token.
class OwnerToken {
 public:
  OwnerToken() = default;
  bool valid() const { return valid_; }
  friend bool operator==(const OwnerToken&, const OwnerToken&) = default;

 private:
  friend class Enclave;
  FixedBytes<16, struct OwnerTokenTag> value_;
  bool valid_ = false;
};

struct Region {
  std::string name;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

enum class EnclaveState { kLaunched, kRunning, kCrashed };

std::string_view enclave_state_name(EnclaveState state);

// The CSP's untrusted file storage. Enclaves read trusted files from it at
// launch and allowed files on demand; the host can change it at any time.
class HostStorage {
 public:
  HostStorage() = default;
  explicit HostStorage(FileTree tree) : tree_(std::move(tree)) {}

  void put(const std::string& path, Bytes content);
  std::optional<Bytes> get(std::string_view path) const;
  FileTree snapshot() const;

 private:
  mutable std::mutex mu_;
  FileTree tree_;
};

class Enclave;

// What in-enclave code holds: the enclave plus its owner token.
struct EnclaveContext {
  std::shared_ptr<Enclave> enclave;
  OwnerToken token;

  Enclave* operator->() const { return enclave.get(); }
};

class Enclave {
 public:
  static constexpr std::size_t kPageSize = 4096;

  // Validates the manifest against storage, measures, loads trusted files
  // into protected pages and returns a running enclave. Throws
  // VALIDATION_FAILED.
  static EnclaveContext launch(std::shared_ptr<const PlatformRoot> platform,
                               const Manifest& manifest,
                               std::shared_ptr<HostStorage> storage);

  Enclave(const Enclave&) = delete;
  Enclave& operator=(const Enclave&) = delete;

  const crypto::Digest256& measurement() const { return measurement_; }
  const Manifest& manifest() const { return manifest_; }
  const PlatformId& platform_id() const { return platform_->platform_id(); }
  TeeType tee_type() const { return platform_->tee_type(); }
  EnclaveState state() const;

  // --- in-enclave operations (require the owner token) -----------------

  AttestationQuote get_quote(const OwnerToken& token,
                             const ReportData& report_data);

  // Page-aligned allocation. Throws OUT_OF_ENCLAVE_MEMORY past enclave_size.
  Region allocate(const OwnerToken& token, std::string name,
                  std::uint64_t length);
  void write(const OwnerToken& token, std::uint64_t offset, ByteView data);
  Bytes read(const OwnerToken& token, std::uint64_t offset, std::uint64_t len);
  Bytes read(const OwnerToken& token, const Region& region) {
    return read(token, region.offset, region.length);
  }
  // Integrity check of every page the region touches, without copying.
  void access(const OwnerToken& token, const Region& region);

  // Contents of a trusted file, read back from protected memory.
  Bytes read_trusted_file(const OwnerToken& token, std::string_view path);
  // Current host copy of an allowed file. Throws FILE_NOT_ALLOWED when the
  // path is not listed as allowed, IO_ERROR when storage lacks it.
  Bytes read_allowed_file(const OwnerToken& token, std::string_view path);

  // Sealed blobs open only in an enclave with the same measurement on the
  // same platform: SEAL_MISMATCH otherwise, DECRYPT_FAIL when tampered.
  Bytes seal(const OwnerToken& token, const KeyId& key_id, ByteView data);
  Bytes unseal(const OwnerToken& token, const KeyId& key_id, ByteView blob);
  void store_sealed(const OwnerToken& token, const KeyId& key_id, Bytes blob);
  std::optional<Bytes> sealed_blob(const OwnerToken& token,
                                   const KeyId& key_id) const;

  // --- host operations ---------------------------------------------------

  // Never faults. Returns the stored page bytes, clipped to memory size.
  Bytes read_as_host(std::uint64_t offset, std::uint64_t len) const;
  // Never faults at write time; see the file comment.
  void write_as_host(std::uint64_t offset, ByteView data);
  // Region layout is visible to the host, as page mappings are.
  std::vector<Region> regions() const;
  std::optional<Region> find_region(std::string_view name) const;
  std::uint64_t memory_size() const;

 private:
  struct PageMeta {
    crypto::Digest256 shadow;
    std::uint32_t version = 0;
    bool host_modified = false;
  };

  Enclave(std::shared_ptr<const PlatformRoot> platform, Manifest manifest,
          std::shared_ptr<HostStorage> storage,
          crypto::Digest256 measurement);

  // All private helpers expect mu_ held.
  void check_caller(const OwnerToken& token) const;
  void verify_page(std::size_t page);
  void crash_locked();
  crypto::Nonce page_nonce(std::size_t page) const;
  void decrypt_page(std::size_t page, std::uint8_t* out) const;
  void encrypt_page(std::size_t page, const std::uint8_t* plain);
  Region allocate_locked(std::string name, std::uint64_t length);
  void write_locked(std::uint64_t offset, ByteView data);
  Bytes read_locked(std::uint64_t offset, std::uint64_t len);
  void check_range(std::uint64_t offset, std::uint64_t len) const;
  crypto::AeadKey sealing_key(const KeyId& key_id) const;

  mutable std::mutex mu_;
  std::shared_ptr<const PlatformRoot> platform_;
  Manifest manifest_;
  std::shared_ptr<HostStorage> storage_;
  crypto::Digest256 measurement_;
  OwnerToken owner_;
  EnclaveState state_ = EnclaveState::kLaunched;
  crypto::AeadKey memory_key_;
  Bytes memory_;
  std::vector<PageMeta> pages_;
  std::vector<Region> regions_;
  std::map<KeyId, Bytes> sealed_store_;
};

// Convenience overload that copies `tree` into fresh host storage.
EnclaveContext launch_enclave(std::shared_ptr<const PlatformRoot> platform,
                              const Manifest& manifest, const FileTree& tree);

}  // namespace fmtee

#endif  // FMTEE_ENCLAVE_H_
