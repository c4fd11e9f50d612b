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

#include "fmtee/crypto.h"

#include <sodium.h>

#include <cstring>
#include <mutex>

namespace fmtee::crypto {
namespace {

void ensure_sodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) {
      throw Error(ErrorCode::kInvalidArgument, "libsodium failed to initialize");
    }
  });
}

static_assert(sizeof(crypto_hash_sha256_state) <= 128);
static_assert(crypto_hash_sha256_BYTES == Digest256::kSize);
static_assert(crypto_sign_PUBLICKEYBYTES == SigningPublicKey::kSize);
static_assert(crypto_sign_BYTES == Signature::kSize);
static_assert(crypto_sign_SEEDBYTES == KeySeed::kSize);
static_assert(crypto_scalarmult_BYTES == ExchangePublicKey::kSize);
static_assert(crypto_aead_chacha20poly1305_ietf_NPUBBYTES == Nonce::kSize);
static_assert(crypto_aead_chacha20poly1305_ietf_ABYTES == kAeadTagSize);

using Prk = Secret<32, struct PrkTag>;

Prk hkdf_extract(ByteView salt, ByteView ikm) {
  Prk prk;
  crypto_auth_hmacsha256_state st;
  crypto_auth_hmacsha256_init(&st, salt.data(), salt.size());
  crypto_auth_hmacsha256_update(&st, ikm.data(), ikm.size());
  crypto_auth_hmacsha256_final(&st, prk.data());
  sodium_memzero(&st, sizeof st);
  return prk;
}

Bytes hkdf_expand(const Prk& prk, ByteView info, std::size_t length) {
  Bytes out;
  out.reserve(length);
  std::array<std::uint8_t, 32> block{};
  std::size_t block_len = 0;
  for (std::uint8_t counter = 1; out.size() < length; ++counter) {
    crypto_auth_hmacsha256_state st;
    crypto_auth_hmacsha256_init(&st, prk.data(), prk.size());
    crypto_auth_hmacsha256_update(&st, block.data(), block_len);
    crypto_auth_hmacsha256_update(&st, info.data(), info.size());
    crypto_auth_hmacsha256_update(&st, &counter, 1);
    crypto_auth_hmacsha256_final(&st, block.data());
    sodium_memzero(&st, sizeof st);
    block_len = block.size();
    std::size_t take = std::min(block.size(), length - out.size());
    out.insert(out.end(), block.begin(), block.begin() + take);
  }
  sodium_memzero(block.data(), block.size());
  return out;
}

}  // namespace

void secure_wipe(void* p, std::size_t n) { sodium_memzero(p, n); }

Digest256 digest(ByteView data) {
  ensure_sodium();
  Digest256 out;
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

Digest256 digest(std::string_view data) { return digest(as_bytes(data)); }

Hasher::Hasher() {
  ensure_sodium();
  crypto_hash_sha256_init(
      reinterpret_cast<crypto_hash_sha256_state*>(state_.data()));
}

Hasher& Hasher::update(ByteView data) {
  crypto_hash_sha256_update(
      reinterpret_cast<crypto_hash_sha256_state*>(state_.data()), data.data(),
      data.size());
  return *this;
}

Digest256 Hasher::finish() {
  Digest256 out;
  crypto_hash_sha256_final(
      reinterpret_cast<crypto_hash_sha256_state*>(state_.data()), out.data());
  return out;
}

void fill_random(std::span<std::uint8_t> out) {
  ensure_sodium();
  randombytes_buf(out.data(), out.size());
}

Bytes random_bytes(std::size_t n) {
  Bytes out(n);
  fill_random(out);
  return out;
}

SigningKeyPair SigningKeyPair::generate() {
  return from_seed(random_value<KeySeed>());
}

SigningKeyPair SigningKeyPair::from_seed(const KeySeed& seed) {
  ensure_sodium();
  SigningKeyPair kp;
  kp.seed_ = seed;
  crypto_sign_seed_keypair(kp.public_.data(), kp.secret_.data(), seed.data());
  return kp;
}

Signature SigningKeyPair::sign(ByteView msg) const {
  Signature sig;
  crypto_sign_detached(sig.data(), nullptr, msg.data(), msg.size(),
                       secret_.data());
  return sig;
}

Signature sign(const SigningKeyPair& key, ByteView msg) { return key.sign(msg); }

bool verify(const SigningPublicKey& pub, ByteView msg, ByteView sig) {
  ensure_sodium();
  if (sig.size() != Signature::kSize) return false;
  return crypto_sign_verify_detached(sig.data(), msg.data(), msg.size(),
                                     pub.data()) == 0;
}

ExchangeKeyPair ExchangeKeyPair::generate() {
  return from_seed(random_value<KeySeed>());
}

ExchangeKeyPair ExchangeKeyPair::from_seed(const KeySeed& seed) {
  ensure_sodium();
  ExchangeKeyPair kp;
  std::memcpy(kp.secret_.data(), seed.data(), seed.size());
  crypto_scalarmult_base(kp.public_.data(), kp.secret_.data());
  return kp;
}

SharedSecret key_agree(const ExchangeKeyPair& mine,
                       const ExchangePublicKey& theirs) {
  ensure_sodium();
  if (theirs.is_zero()) {
    throw Error(ErrorCode::kRejectedPublicKey, "all-zero public value");
  }
  SharedSecret out;
  if (crypto_scalarmult(out.data(), mine.secret_.data(), theirs.data()) != 0) {
    throw Error(ErrorCode::kRejectedPublicKey, "low-order public value");
  }
  return out;
}

Bytes hkdf_sha256(ByteView salt, ByteView ikm, ByteView info,
                  std::size_t length) {
  ensure_sodium();
  if (length > 255 * 32) {
    throw Error(ErrorCode::kInvalidArgument, "HKDF output too long");
  }
  return hkdf_expand(hkdf_extract(salt, ikm), info, length);
}

SessionKeys derive_session_keys(const SharedSecret& shared,
                                const Digest256& transcript_digest) {
  ensure_sodium();
  Prk prk = hkdf_extract(transcript_digest.view(), shared.view());
  Bytes c2s = hkdf_expand(prk, as_bytes("fmtee c2s"), AeadKey::kSize);
  Bytes s2c = hkdf_expand(prk, as_bytes("fmtee s2c"), AeadKey::kSize);
  SessionKeys keys{AeadKey::from(c2s), AeadKey::from(s2c)};
  sodium_memzero(c2s.data(), c2s.size());
  sodium_memzero(s2c.data(), s2c.size());
  return keys;
}

Nonce nonce_from_counter(std::uint64_t counter) {
  Nonce n;
  for (int i = 0; i < 8; ++i) {
    n[11 - i] = static_cast<std::uint8_t>(counter >> (8 * i));
  }
  return n;
}

Bytes aead_seal(const AeadKey& key, const Nonce& nonce, ByteView plaintext,
                ByteView associated_data) {
  ensure_sodium();
  Bytes out(plaintext.size() + kAeadTagSize);
  unsigned long long out_len = 0;
  crypto_aead_chacha20poly1305_ietf_encrypt(
      out.data(), &out_len, plaintext.data(), plaintext.size(),
      associated_data.data(), associated_data.size(), nullptr, nonce.data(),
      key.data());
  out.resize(out_len);
  return out;
}

Bytes aead_open(const AeadKey& key, const Nonce& nonce, ByteView ciphertext,
                ByteView associated_data) {
  ensure_sodium();
  if (ciphertext.size() < kAeadTagSize) {
    throw Error(ErrorCode::kDecryptFail, "ciphertext shorter than tag");
  }
  Bytes out(ciphertext.size() - kAeadTagSize);
  unsigned long long out_len = 0;
  if (crypto_aead_chacha20poly1305_ietf_decrypt(
          out.data(), &out_len, nullptr, ciphertext.data(), ciphertext.size(),
          associated_data.data(), associated_data.size(), nonce.data(),
          key.data()) != 0) {
    throw Error(ErrorCode::kDecryptFail, "authentication tag mismatch");
  }
  out.resize(out_len);
  return out;
}

void stream_xor(const AeadKey& key, const Nonce& nonce,
                std::span<std::uint8_t> data, std::uint32_t initial_block) {
  ensure_sodium();
  crypto_stream_chacha20_ietf_xor_ic(data.data(), data.data(), data.size(),
                                     nonce.data(), initial_block, key.data());
}

}  // namespace fmtee::crypto
