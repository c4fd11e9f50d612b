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

#include "fmtee/enclave.h"

#include <algorithm>
#include <cstring>

#include "fmtee/defenses.h"

namespace fmtee {
namespace {

constexpr std::string_view kQuoteDomain = "fmtee-quote-v1";
constexpr std::string_view kSealMagic = "FMSL";
constexpr std::uint8_t kSealVersion = 1;

template <typename T>
T derive_fixed(const crypto::KeySeed& seed, std::string_view label) {
  Bytes out = crypto::hkdf_sha256({}, seed.view(), as_bytes(label), T::kSize);
  T v = T::from(out);
  crypto::secure_wipe(out.data(), out.size());
  return v;
}

std::uint16_t expect_len(ByteReader& r, std::uint16_t want, ErrorCode code) {
  std::uint16_t got = r.u16();
  if (got != want) {
    throw Error(code, "quote field length " + std::to_string(got) +
                          ", expected " + std::to_string(want));
  }
  return got;
}

}  // namespace

std::string_view tee_type_name(TeeType type) {
  switch (type) {
    case TeeType::kApplication: return "application";
    case TeeType::kVm: return "vm";
  }
  return "unknown";
}

TeeType parse_tee_type(std::string_view text) {
  if (text == "application" || text == "sgx") return TeeType::kApplication;
  if (text == "vm" || text == "tdx") return TeeType::kVm;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown tee type '" + std::string(text) + "'");
}

std::string_view enclave_state_name(EnclaveState state) {
  switch (state) {
    case EnclaveState::kLaunched: return "launched";
    case EnclaveState::kRunning: return "running";
    case EnclaveState::kCrashed: return "crashed";
  }
  return "unknown";
}

// --- PlatformRoot -----------------------------------------------------------

PlatformRoot::PlatformRoot(TeeType tee_type, const crypto::KeySeed& seed)
    : tee_type_(tee_type),
      platform_id_(derive_fixed<PlatformId>(seed, "fmtee platform id")),
      root_(crypto::SigningKeyPair::from_seed(
          derive_fixed<crypto::KeySeed>(seed, "fmtee platform root"))),
      seal_secret_(derive_fixed<crypto::AeadKey>(seed, "fmtee seal secret")) {}

std::shared_ptr<const PlatformRoot> PlatformRoot::create(TeeType tee_type) {
  return from_seed(tee_type, crypto::random_value<crypto::KeySeed>());
}

std::shared_ptr<const PlatformRoot> PlatformRoot::from_seed(
    TeeType tee_type, const crypto::KeySeed& seed) {
  return std::shared_ptr<const PlatformRoot>(new PlatformRoot(tee_type, seed));
}

// --- AttestationQuote -------------------------------------------------------

Bytes AttestationQuote::signed_message() const {
  ByteWriter w;
  w.raw(as_bytes(kQuoteDomain))
      .u16(kVersion)
      .u8(tee_type)
      .u16(PlatformId::kSize)
      .fixed(platform_id)
      .u16(crypto::Digest256::kSize)
      .fixed(measurement)
      .u16(ReportData::kSize)
      .fixed(report_data);
  return w.take();
}

Bytes AttestationQuote::serialize() const {
  ByteWriter w;
  w.u16(kVersion)
      .u8(tee_type)
      .u16(PlatformId::kSize)
      .fixed(platform_id)
      .u16(crypto::Digest256::kSize)
      .fixed(measurement)
      .u16(ReportData::kSize)
      .fixed(report_data)
      .u16(crypto::Signature::kSize)
      .fixed(signature);
  return w.take();
}

AttestationQuote AttestationQuote::parse(ByteView bytes, ErrorCode code) {
  ByteReader r(bytes, code);
  if (r.u16() != kVersion) throw Error(code, "unsupported quote version");
  AttestationQuote q;
  q.tee_type = r.u8();
  expect_len(r, PlatformId::kSize, code);
  q.platform_id = PlatformId::from(r.raw(PlatformId::kSize));
  expect_len(r, crypto::Digest256::kSize, code);
  q.measurement = crypto::Digest256::from(r.raw(crypto::Digest256::kSize));
  expect_len(r, ReportData::kSize, code);
  q.report_data = ReportData::from(r.raw(ReportData::kSize));
  expect_len(r, crypto::Signature::kSize, code);
  q.signature = crypto::Signature::from(r.raw(crypto::Signature::kSize));
  r.expect_end();
  return q;
}

bool AttestationQuote::verify_signature(
    const crypto::SigningPublicKey& root) const {
  return crypto::verify(root, signed_message(), signature.view());
}

bool verify_serialized_quote(ByteView bytes,
                             const crypto::SigningPublicKey& root) {
  try {
    return AttestationQuote::parse(bytes).verify_signature(root);
  } catch (const Error&) {
    return false;
  }
}

// --- HostStorage ------------------------------------------------------------

void HostStorage::put(const std::string& path, Bytes content) {
  std::lock_guard lock(mu_);
  tree_.put(path, std::move(content));
}

std::optional<Bytes> HostStorage::get(std::string_view path) const {
  std::lock_guard lock(mu_);
  const Bytes* b = tree_.find(path);
  if (!b) return std::nullopt;
  return *b;
}

FileTree HostStorage::snapshot() const {
  std::lock_guard lock(mu_);
  return tree_;
}

// --- Enclave ----------------------------------------------------------------

Enclave::Enclave(std::shared_ptr<const PlatformRoot> platform,
                 Manifest manifest, std::shared_ptr<HostStorage> storage,
                 crypto::Digest256 measurement)
    : platform_(std::move(platform)),
      manifest_(std::move(manifest)),
      storage_(std::move(storage)),
      measurement_(measurement),
      memory_key_(crypto::random_value<crypto::AeadKey>()) {
  owner_.value_ = crypto::random_value<FixedBytes<16, OwnerTokenTag>>();
  owner_.valid_ = true;
}

EnclaveContext Enclave::launch(std::shared_ptr<const PlatformRoot> platform,
                               const Manifest& manifest,
                               std::shared_ptr<HostStorage> storage) {
  // One snapshot is both measured and loaded, so a concurrent host change
  // cannot split the two.
  FileTree tree = storage->snapshot();
  crypto::Digest256 measurement = compute_measurement(manifest, tree);
  std::shared_ptr<Enclave> e(
      new Enclave(std::move(platform), manifest, std::move(storage),
                  measurement));
  {
    std::lock_guard lock(e->mu_);
    std::vector<std::string> trusted = manifest.trusted_files;
    std::sort(trusted.begin(), trusted.end());
    for (const std::string& path : trusted) {
      const Bytes& content = *tree.find(path);
      Region r = e->allocate_locked(path, content.size());
      e->write_locked(r.offset, content);
    }
    e->state_ = EnclaveState::kRunning;
  }
  return EnclaveContext{e, e->owner_};
}

EnclaveContext launch_enclave(std::shared_ptr<const PlatformRoot> platform,
                              const Manifest& manifest, const FileTree& tree) {
  return Enclave::launch(std::move(platform), manifest,
                         std::make_shared<HostStorage>(tree));
}

EnclaveState Enclave::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

void Enclave::check_caller(const OwnerToken& token) const {
  if (state_ == EnclaveState::kCrashed) {
    throw Error(ErrorCode::kEnclaveCrashed);
  }
  if (!token.valid() || !(token == owner_)) {
    throw Error(ErrorCode::kNotOwner);
  }
}

void Enclave::crash_locked() {
  state_ = EnclaveState::kCrashed;
  // Keys die with the enclave.
  memory_key_ = crypto::AeadKey();
  sealed_store_.clear();
}

crypto::Nonce Enclave::page_nonce(std::size_t page) const {
  crypto::Nonce n;
  std::uint64_t p = page;
  std::uint32_t v = pages_[page].version;
  for (int i = 0; i < 4; ++i) {
    n[7 - i] = static_cast<std::uint8_t>(p >> (8 * i));
    n[11 - i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  return n;
}

void Enclave::decrypt_page(std::size_t page, std::uint8_t* out) const {
  std::memcpy(out, memory_.data() + page * kPageSize, kPageSize);
  crypto::stream_xor(memory_key_, page_nonce(page), {out, kPageSize});
}

void Enclave::encrypt_page(std::size_t page, const std::uint8_t* plain) {
  PageMeta& meta = pages_[page];
  ++meta.version;
  std::uint8_t* dst = memory_.data() + page * kPageSize;
  std::memcpy(dst, plain, kPageSize);
  crypto::stream_xor(memory_key_, page_nonce(page), {dst, kPageSize});
  meta.shadow = crypto::digest(ByteView(dst, kPageSize));
  meta.host_modified = false;
}

void Enclave::verify_page(std::size_t page) {
  PageMeta& meta = pages_[page];
  if (!meta.host_modified || !active_defenses().memory_integrity) return;
  crypto::Digest256 now =
      crypto::digest(ByteView(memory_.data() + page * kPageSize, kPageSize));
  if (now != meta.shadow) {
    crash_locked();
    throw Error(ErrorCode::kIntegrityFault,
                "page " + std::to_string(page) + " modified outside enclave");
  }
  meta.host_modified = false;
}

void Enclave::check_range(std::uint64_t offset, std::uint64_t len) const {
  if (offset > memory_.size() || len > memory_.size() - offset) {
    throw Error(ErrorCode::kInvalidArgument, "access outside enclave memory");
  }
}

Region Enclave::allocate_locked(std::string name, std::uint64_t length) {
  std::uint64_t pages = std::max<std::uint64_t>(
      1, (length + kPageSize - 1) / kPageSize);
  std::uint64_t offset = memory_.size();
  if (offset + pages * kPageSize > manifest_.enclave_size) {
    throw Error(ErrorCode::kOutOfEnclaveMemory,
                "cannot fit " + std::to_string(length) + " bytes");
  }
  memory_.resize(offset + pages * kPageSize);
  std::vector<std::uint8_t> zero(kPageSize, 0);
  for (std::uint64_t i = 0; i < pages; ++i) {
    pages_.emplace_back();
    encrypt_page(pages_.size() - 1, zero.data());
  }
  Region r{std::move(name), offset, length};
  regions_.push_back(r);
  return r;
}

void Enclave::write_locked(std::uint64_t offset, ByteView data) {
  check_range(offset, data.size());
  std::vector<std::uint8_t> plain(kPageSize);
  std::size_t done = 0;
  while (done < data.size()) {
    std::uint64_t pos = offset + done;
    std::size_t page = pos / kPageSize;
    std::size_t in_page = pos % kPageSize;
    std::size_t n = std::min(kPageSize - in_page, data.size() - done);
    verify_page(page);
    decrypt_page(page, plain.data());
    std::memcpy(plain.data() + in_page, data.data() + done, n);
    encrypt_page(page, plain.data());
    done += n;
  }
  crypto::secure_wipe(plain.data(), plain.size());
}

Bytes Enclave::read_locked(std::uint64_t offset, std::uint64_t len) {
  check_range(offset, len);
  Bytes out(len);
  std::vector<std::uint8_t> plain(kPageSize);
  std::size_t done = 0;
  while (done < len) {
    std::uint64_t pos = offset + done;
    std::size_t page = pos / kPageSize;
    std::size_t in_page = pos % kPageSize;
    std::size_t n = std::min<std::size_t>(kPageSize - in_page, len - done);
    verify_page(page);
    decrypt_page(page, plain.data());
    std::memcpy(out.data() + done, plain.data() + in_page, n);
    done += n;
  }
  crypto::secure_wipe(plain.data(), plain.size());
  return out;
}

AttestationQuote Enclave::get_quote(const OwnerToken& token,
                                    const ReportData& report_data) {
  std::lock_guard lock(mu_);
  check_caller(token);
  AttestationQuote q;
  q.tee_type = static_cast<std::uint8_t>(platform_->tee_type());
  q.platform_id = platform_->platform_id();
  q.measurement = measurement_;
  q.report_data = report_data;
  q.signature = platform_->root_.sign(q.signed_message());
  return q;
}

Region Enclave::allocate(const OwnerToken& token, std::string name,
                         std::uint64_t length) {
  std::lock_guard lock(mu_);
  check_caller(token);
  return allocate_locked(std::move(name), length);
}

void Enclave::write(const OwnerToken& token, std::uint64_t offset,
                    ByteView data) {
  std::lock_guard lock(mu_);
  check_caller(token);
  write_locked(offset, data);
}

Bytes Enclave::read(const OwnerToken& token, std::uint64_t offset,
                    std::uint64_t len) {
  std::lock_guard lock(mu_);
  check_caller(token);
  return read_locked(offset, len);
}

void Enclave::access(const OwnerToken& token, const Region& region) {
  std::lock_guard lock(mu_);
  check_caller(token);
  check_range(region.offset, region.length);
  std::size_t first = region.offset / kPageSize;
  std::size_t last = (region.offset + std::max<std::uint64_t>(region.length, 1) -
                      1) / kPageSize;
  for (std::size_t p = first; p <= last && p < pages_.size(); ++p) {
    verify_page(p);
  }
}

Bytes Enclave::read_trusted_file(const OwnerToken& token,
                                 std::string_view path) {
  std::lock_guard lock(mu_);
  check_caller(token);
  for (const Region& r : regions_) {
    if (r.name == path) return read_locked(r.offset, r.length);
  }
  throw Error(ErrorCode::kFileNotAllowed,
              "not a trusted file: " + std::string(path));
}

Bytes Enclave::read_allowed_file(const OwnerToken& token,
                                 std::string_view path) {
  {
    std::lock_guard lock(mu_);
    check_caller(token);
    const auto& allowed = manifest_.allowed_files;
    if (std::find(allowed.begin(), allowed.end(), path) == allowed.end()) {
      throw Error(ErrorCode::kFileNotAllowed, std::string(path));
    }
  }
  auto content = storage_->get(path);
  if (!content) {
    throw Error(ErrorCode::kIoError, "host storage lacks " + std::string(path));
  }
  return *content;
}

crypto::AeadKey Enclave::sealing_key(const KeyId& key_id) const {
  Bytes ikm = concat({measurement_.view(), platform_->platform_id().view()});
  Bytes info = concat({as_bytes("fmtee seal"), key_id.view()});
  Bytes k = crypto::hkdf_sha256(platform_->seal_secret_.view(), ikm, info,
                                crypto::AeadKey::kSize);
  crypto::AeadKey key = crypto::AeadKey::from(k);
  crypto::secure_wipe(k.data(), k.size());
  return key;
}

Bytes Enclave::seal(const OwnerToken& token, const KeyId& key_id,
                    ByteView data) {
  std::lock_guard lock(mu_);
  check_caller(token);
  crypto::Nonce nonce = crypto::random_value<crypto::Nonce>();
  ByteWriter header;
  header.raw(as_bytes(kSealMagic))
      .u8(kSealVersion)
      .fixed(key_id)
      .fixed(platform_->platform_id())
      .fixed(measurement_)
      .fixed(nonce);
  Bytes ct = crypto::aead_seal(sealing_key(key_id), nonce, data,
                               header.bytes());
  return concat({header.bytes(), ct});
}

Bytes Enclave::unseal(const OwnerToken& token, const KeyId& key_id,
                      ByteView blob) {
  std::lock_guard lock(mu_);
  check_caller(token);
  constexpr std::size_t kHeader = 4 + 1 + KeyId::kSize + PlatformId::kSize +
                                  crypto::Digest256::kSize +
                                  crypto::Nonce::kSize;
  ByteReader r(blob, ErrorCode::kDecryptFail);
  ByteView magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kSealMagic.begin()) ||
      r.u8() != kSealVersion) {
    throw Error(ErrorCode::kDecryptFail, "not a sealed blob");
  }
  r.fixed<KeyId>();
  auto platform = r.fixed<PlatformId>();
  auto measurement = r.fixed<crypto::Digest256>();
  auto nonce = r.fixed<crypto::Nonce>();
  if (platform != platform_->platform_id() || measurement != measurement_) {
    throw Error(ErrorCode::kSealMismatch,
                "blob sealed to a different enclave identity");
  }
  return crypto::aead_open(sealing_key(key_id), nonce, r.rest(),
                           blob.first(kHeader));
}

void Enclave::store_sealed(const OwnerToken& token, const KeyId& key_id,
                           Bytes blob) {
  std::lock_guard lock(mu_);
  check_caller(token);
  sealed_store_[key_id] = std::move(blob);
}

std::optional<Bytes> Enclave::sealed_blob(const OwnerToken& token,
                                          const KeyId& key_id) const {
  std::lock_guard lock(mu_);
  check_caller(token);
  auto it = sealed_store_.find(key_id);
  if (it == sealed_store_.end()) return std::nullopt;
  return it->second;
}

Bytes Enclave::read_as_host(std::uint64_t offset, std::uint64_t len) const {
  std::lock_guard lock(mu_);
  if (offset >= memory_.size()) return {};
  len = std::min<std::uint64_t>(len, memory_.size() - offset);
  if (active_defenses().memory_encryption || state_ == EnclaveState::kCrashed) {
    return Bytes(memory_.begin() + offset, memory_.begin() + offset + len);
  }
  // Memory encryption disabled: the host sees plaintext.
  Bytes out(len);
  std::vector<std::uint8_t> plain(kPageSize);
  for (std::size_t done = 0; done < len;) {
    std::uint64_t pos = offset + done;
    std::size_t page = pos / kPageSize;
    std::size_t in_page = pos % kPageSize;
    std::size_t n = std::min<std::size_t>(kPageSize - in_page, len - done);
    decrypt_page(page, plain.data());
    std::memcpy(out.data() + done, plain.data() + in_page, n);
    done += n;
  }
  return out;
}

void Enclave::write_as_host(std::uint64_t offset, ByteView data) {
  std::lock_guard lock(mu_);
  if (offset >= memory_.size()) return;
  std::size_t n = std::min<std::uint64_t>(data.size(), memory_.size() - offset);
  if (n == 0) return;
  std::memcpy(memory_.data() + offset, data.data(), n);
  for (std::size_t p = offset / kPageSize; p <= (offset + n - 1) / kPageSize;
       ++p) {
    pages_[p].host_modified = true;
  }
}

std::vector<Region> Enclave::regions() const {
  std::lock_guard lock(mu_);
  return regions_;
}

std::optional<Region> Enclave::find_region(std::string_view name) const {
  std::lock_guard lock(mu_);
  for (const Region& r : regions_) {
    if (r.name == name) return r;
  }
  return std::nullopt;
}

std::uint64_t Enclave::memory_size() const {
  std::lock_guard lock(mu_);
  return memory_.size();
}

}  // namespace fmtee
