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

// Primitive contracts used by every other module: digest, signatures, key
// agreement, key derivation and AEAD. None of these functions perform I/O.

#ifndef FMTEE_CRYPTO_H_
#define FMTEE_CRYPTO_H_

#include <array>
#include <cstdint>
#include <string_view>

#include "fmtee/bytes.h"

namespace fmtee::crypto {

// The pinned suite. Every golden value in the test tree was produced with
// exactly these algorithms.
inline constexpr std::string_view kSuite =
    "SHA-256 / Ed25519 / X25519 / HKDF-SHA-256 / ChaCha20-Poly1305-IETF";

using Digest256 = FixedBytes<32, struct Digest256Tag>;
using SigningPublicKey = FixedBytes<32, struct SigningPublicKeyTag>;
using Signature = FixedBytes<64, struct SignatureTag>;
using ExchangePublicKey = FixedBytes<32, struct ExchangePublicKeyTag>;
using Nonce = FixedBytes<12, struct NonceTag>;
using KeySeed = FixedBytes<32, struct KeySeedTag>;

inline constexpr std::size_t kAeadTagSize = 16;

// Secret-holding fixed buffer, wiped on destruction.
template <std::size_t N, typename Tag>
class Secret {
 public:
  static constexpr std::size_t kSize = N;

  Secret() : bytes_{} {}
  Secret(const Secret& other) : bytes_(other.bytes_) {}
  Secret& operator=(const Secret& other) {
    bytes_ = other.bytes_;
    return *this;
  }
  ~Secret() { wipe(bytes_.data(), N); }

  static Secret from(ByteView view) {
    if (view.size() != N) {
      throw Error(ErrorCode::kMalformed, "secret must be " +
                                             std::to_string(N) + " bytes");
    }
    Secret out;
    std::copy(view.begin(), view.end(), out.bytes_.begin());
    return out;
  }

  std::uint8_t* data() { return bytes_.data(); }
  const std::uint8_t* data() const { return bytes_.data(); }
  static constexpr std::size_t size() { return N; }
  ByteView view() const { return {bytes_.data(), N}; }

  friend bool operator==(const Secret& a, const Secret& b) {
    return a.bytes_ == b.bytes_;
  }

 private:
  static void wipe(void* p, std::size_t n);
  std::array<std::uint8_t, N> bytes_;
};

void secure_wipe(void* p, std::size_t n);

template <std::size_t N, typename Tag>
void Secret<N, Tag>::wipe(void* p, std::size_t n) {
  secure_wipe(p, n);
}

using AeadKey = Secret<32, struct AeadKeyTag>;
using SharedSecret = Secret<32, struct SharedSecretTag>;

struct SessionKeys {
  AeadKey client_to_server;
  AeadKey server_to_client;
};

// --- digest -----------------------------------------------------------------

Digest256 digest(ByteView data);
Digest256 digest(std::string_view data);

// Incremental form of `digest`.
class Hasher {
 public:
  Hasher();
  Hasher& update(ByteView data);
  Digest256 finish();

 private:
  alignas(16) std::array<std::uint8_t, 128> state_;
};

// --- randomness -------------------------------------------------------------

void fill_random(std::span<std::uint8_t> out);
Bytes random_bytes(std::size_t n);

template <typename T>
T random_value() {
  std::array<std::uint8_t, T::kSize> buf;
  fill_random(buf);
  T out = T::from(buf);
  secure_wipe(buf.data(), buf.size());
  return out;
}

// --- signatures -------------------------------------------------------------

class SigningKeyPair {
 public:
  static SigningKeyPair generate();
  static SigningKeyPair from_seed(const KeySeed& seed);

  const SigningPublicKey& public_key() const { return public_; }
  // Only for writing key files; the seed fully determines the pair.
  const KeySeed& seed() const { return seed_; }

  Signature sign(ByteView msg) const;

 private:
  SigningKeyPair() = default;
  KeySeed seed_;
  Secret<64, struct Ed25519SecretTag> secret_;
  SigningPublicKey public_;
};

Signature sign(const SigningKeyPair& key, ByteView msg);
// False for any malformed signature encoding (wrong length included).
bool verify(const SigningPublicKey& pub, ByteView msg, ByteView sig);

// --- key agreement ----------------------------------------------------------

class ExchangeKeyPair {
 public:
  static ExchangeKeyPair generate();
  static ExchangeKeyPair from_seed(const KeySeed& seed);

  const ExchangePublicKey& public_key() const { return public_; }

 private:
  friend SharedSecret key_agree(const ExchangeKeyPair&,
                                const ExchangePublicKey&);
  ExchangeKeyPair() = default;
  Secret<32, struct X25519SecretTag> secret_;
  ExchangePublicKey public_;
};

// Symmetric X25519 agreement. Throws REJECTED_PUBLIC_KEY when the peer value
// is all zero or a low-order point (which yields an all-zero secret).
SharedSecret key_agree(const ExchangeKeyPair& mine,
                       const ExchangePublicKey& theirs);

// --- key derivation ---------------------------------------------------------

// RFC 5869 HKDF with HMAC-SHA-256. `length` must be at most 255 * 32.
Bytes hkdf_sha256(ByteView salt, ByteView ikm, ByteView info,
                  std::size_t length);

// HKDF(salt = transcript digest, ikm = shared secret), expanded separately
// under the labels "fmtee c2s" and "fmtee s2c".
SessionKeys derive_session_keys(const SharedSecret& shared,
                                const Digest256& transcript_digest);

// --- AEAD -------------------------------------------------------------------

// 12-byte big-endian counter nonce: four zero bytes then the counter.
Nonce nonce_from_counter(std::uint64_t counter);

// Returns ciphertext || 16-byte tag.
Bytes aead_seal(const AeadKey& key, const Nonce& nonce, ByteView plaintext,
                ByteView associated_data);
// Throws DECRYPT_FAIL if any input differs from what was sealed.
Bytes aead_open(const AeadKey& key, const Nonce& nonce, ByteView ciphertext,
                ByteView associated_data);

// Raw ChaCha20 keystream XOR, used by the enclave memory model. The AEAD
// encrypts its payload starting at block 1.
void stream_xor(const AeadKey& key, const Nonce& nonce,
                std::span<std::uint8_t> data, std::uint32_t initial_block = 0);

}  // namespace fmtee::crypto

#endif  // FMTEE_CRYPTO_H_
