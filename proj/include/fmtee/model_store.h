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

// Seed-generated model weights, the encrypted .fmte package, and the
// in-enclave model slot that holds provisioned keys and loaded weights.

#ifndef FMTEE_MODEL_STORE_H_
#define FMTEE_MODEL_STORE_H_

#include <cstdint>
#include <mutex>
#include <optional>
#include <vector>

#include "fmtee/crypto.h"
#include "fmtee/enclave.h"

namespace fmtee {

// Weight values are Q16 fixed point in [-kWeightScale, kWeightScale].
inline constexpr std::int32_t kWeightScale = 1 << 16;

struct ModelWeights {
  std::uint64_t seed = 0;
  std::uint32_t vocab_size = 0;
  // Hashed feature buckets per context position.
  std::uint32_t embed_dim = 0;
  std::uint32_t context_window = 0;
  // vocab_size entries.
  std::vector<std::int32_t> token_bias;
  // context_window rows of embed_dim entries; row j serves the j-th most
  // recent context token.
  std::vector<std::int32_t> features;

  // SplitMix64 stream from `seed`: all biases, then all features.
  static ModelWeights generate(std::uint64_t seed, std::uint32_t vocab_size,
                               std::uint32_t embed_dim,
                               std::uint32_t context_window = 8);

  // "FMTW" | u8 version | u64 seed | u32 vocab | u32 embed | u32 window
  // | biases | features, every value a big-endian i32.
  Bytes serialize() const;
  // Strict inverse of serialize(); throws MALFORMED.
  static ModelWeights deserialize(ByteView bytes);
  crypto::Digest256 digest() const { return crypto::digest(serialize()); }

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

// .fmte: "FMTE" | u8 version | key_id(16) | nonce(12) | model_digest(32)
// | ciphertext to end of file. The 65-byte header is the AEAD associated
// data.
struct EncryptedModelPackage {
  static constexpr std::uint8_t kVersion = 1;
  static constexpr std::size_t kHeaderSize = 65;

  KeyId key_id;
  crypto::Nonce nonce;
  crypto::Digest256 model_digest;
  Bytes ciphertext;

  Bytes header() const;
  Bytes serialize() const;
  // Any framing problem is reported as DECRYPT_FAIL: the header is
  // authenticated, so a damaged header is tampering like any other.
  static EncryptedModelPackage parse(ByteView bytes);
};

EncryptedModelPackage pack_model(const ModelWeights& w, const crypto::AeadKey& key,
                                 const KeyId& key_id);
EncryptedModelPackage pack_model(const ModelWeights& w, const crypto::AeadKey& key,
                                 const KeyId& key_id, const crypto::Nonce& nonce);

// Decrypts with `key` and checks the header digest. Returns the plaintext
// serialization. Throws DECRYPT_FAIL, DIGEST_MISMATCH.
Bytes unpack_model_bytes(ByteView package, const crypto::AeadKey& key);
ModelWeights unpack_model(ByteView package, const crypto::AeadKey& key);

// Key file: one line of 64 hex characters.
crypto::AeadKey load_aead_key(const std::string& path);
void save_aead_key(const std::string& path, const crypto::AeadKey& key);

// In-enclave model state. Keys are kept only as sealed blobs in the
// enclave's sealed store; weights live in protected pages, and every use
// re-checks those pages.
class ModelSlot {
 public:
  explicit ModelSlot(EnclaveContext ctx);

  const EnclaveContext& context() const { return ctx_; }

  void provision_key(const KeyId& key_id, const crypto::AeadKey& key);
  // Throws KEY_NOT_PROVISIONED, DECRYPT_FAIL, DIGEST_MISMATCH, MALFORMED.
  void load(ByteView package, const KeyId& key_id);

  bool loaded() const;
  // Checks the weight pages (INTEGRITY_FAULT) and returns the weights.
  // Throws NO_MODEL_LOADED.
  const ModelWeights& weights();
  // Page check only; used per generation step.
  void touch();
  crypto::Digest256 model_digest() const;
  std::optional<Region> region() const;

  // Quote with report_data = digest(loaded serialization).
  AttestationQuote attest();

 private:
  EnclaveContext ctx_;
  mutable std::mutex mu_;
  std::optional<Region> region_;
  std::optional<ModelWeights> weights_;
  crypto::Digest256 digest_;
};

}  // namespace fmtee

#endif  // FMTEE_MODEL_STORE_H_
