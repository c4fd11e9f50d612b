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

#include "fmtee/model_store.h"

#include <algorithm>
#include <fstream>

#include "fmtee/defenses.h"
#include "fmtee/kv.h"

namespace fmtee {
namespace {

constexpr std::string_view kWeightsMagic = "FMTW";
constexpr std::uint8_t kWeightsVersion = 1;
constexpr std::string_view kPackageMagic = "FMTE";
// Keeps a hostile header from asking for absurd allocations.
constexpr std::uint64_t kMaxWeightValues = 1ull << 28;

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::int32_t next_weight(std::uint64_t& state) {
  constexpr std::uint64_t kRange = 2ull * kWeightScale + 1;
  return static_cast<std::int32_t>(splitmix64(state) % kRange) - kWeightScale;
}

}  // namespace

// --- weights ----------------------------------------------------------------

ModelWeights ModelWeights::generate(std::uint64_t seed,
                                    std::uint32_t vocab_size,
                                    std::uint32_t embed_dim,
                                    std::uint32_t context_window) {
  if (vocab_size == 0 || embed_dim == 0 || context_window == 0) {
    throw Error(ErrorCode::kInvalidArgument, "model dimensions must be > 0");
  }
  ModelWeights w;
  w.seed = seed;
  w.vocab_size = vocab_size;
  w.embed_dim = embed_dim;
  w.context_window = context_window;
  std::uint64_t state = seed;
  w.token_bias.resize(vocab_size);
  for (auto& v : w.token_bias) v = next_weight(state);
  w.features.resize(std::size_t{context_window} * embed_dim);
  for (auto& v : w.features) v = next_weight(state);
  return w;
}

Bytes ModelWeights::serialize() const {
  ByteWriter w;
  w.raw(as_bytes(kWeightsMagic))
      .u8(kWeightsVersion)
      .u64(seed)
      .u32(vocab_size)
      .u32(embed_dim)
      .u32(context_window);
  for (std::int32_t v : token_bias) w.i32(v);
  for (std::int32_t v : features) w.i32(v);
  return w.take();
}

ModelWeights ModelWeights::deserialize(ByteView bytes) {
  ByteReader r(bytes);
  ByteView magic = r.raw(kWeightsMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kWeightsMagic.begin())) {
    throw Error(ErrorCode::kMalformed, "not a weights blob");
  }
  if (r.u8() != kWeightsVersion) {
    throw Error(ErrorCode::kMalformed, "unsupported weights version");
  }
  ModelWeights w;
  w.seed = r.u64();
  w.vocab_size = r.u32();
  w.embed_dim = r.u32();
  w.context_window = r.u32();
  if (w.vocab_size == 0 || w.embed_dim == 0 || w.context_window == 0) {
    throw Error(ErrorCode::kMalformed, "zero model dimension");
  }
  std::uint64_t n_features =
      std::uint64_t{w.context_window} * std::uint64_t{w.embed_dim};
  if (n_features + w.vocab_size > kMaxWeightValues ||
      (n_features + w.vocab_size) * 4 != r.remaining()) {
    throw Error(ErrorCode::kMalformed, "weights length does not match dims");
  }
  w.token_bias.resize(w.vocab_size);
  for (auto& v : w.token_bias) v = r.i32();
  w.features.resize(n_features);
  for (auto& v : w.features) v = r.i32();
  return w;
}

// --- package ----------------------------------------------------------------

Bytes EncryptedModelPackage::header() const {
  ByteWriter w;
  w.raw(as_bytes(kPackageMagic))
      .u8(kVersion)
      .fixed(key_id)
      .fixed(nonce)
      .fixed(model_digest);
  return w.take();
}

Bytes EncryptedModelPackage::serialize() const {
  return concat({header(), ciphertext});
}

EncryptedModelPackage EncryptedModelPackage::parse(ByteView bytes) {
  ByteReader r(bytes, ErrorCode::kDecryptFail);
  ByteView magic = r.raw(kPackageMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kPackageMagic.begin())) {
    throw Error(ErrorCode::kDecryptFail, "bad package magic");
  }
  if (r.u8() != kVersion) {
    throw Error(ErrorCode::kDecryptFail, "unsupported package version");
  }
  EncryptedModelPackage p;
  p.key_id = r.fixed<KeyId>();
  p.nonce = r.fixed<crypto::Nonce>();
  p.model_digest = r.fixed<crypto::Digest256>();
  ByteView ct = r.rest();
  if (ct.size() < crypto::kAeadTagSize) {
    throw Error(ErrorCode::kDecryptFail, "package truncated");
  }
  p.ciphertext.assign(ct.begin(), ct.end());
  return p;
}

EncryptedModelPackage pack_model(const ModelWeights& w,
                                 const crypto::AeadKey& key,
                                 const KeyId& key_id,
                                 const crypto::Nonce& nonce) {
  Bytes plain = w.serialize();
  EncryptedModelPackage p;
  p.key_id = key_id;
  p.nonce = nonce;
  p.model_digest = crypto::digest(plain);
  p.ciphertext = crypto::aead_seal(key, nonce, plain, p.header());
  crypto::secure_wipe(plain.data(), plain.size());
  return p;
}

EncryptedModelPackage pack_model(const ModelWeights& w,
                                 const crypto::AeadKey& key,
                                 const KeyId& key_id) {
  return pack_model(w, key, key_id, crypto::random_value<crypto::Nonce>());
}

Bytes unpack_model_bytes(ByteView package, const crypto::AeadKey& key) {
  EncryptedModelPackage p = EncryptedModelPackage::parse(package);
  if (!active_defenses().package_authentication) {
    // Test-only path: decrypt the payload but trust nothing about it.
    Bytes plain(p.ciphertext.begin(),
                p.ciphertext.end() - crypto::kAeadTagSize);
    crypto::stream_xor(key, p.nonce, plain, 1);
    return plain;
  }
  Bytes plain = crypto::aead_open(key, p.nonce, p.ciphertext, p.header());
  if (crypto::digest(plain) != p.model_digest) {
    throw Error(ErrorCode::kDigestMismatch,
                "payload digest differs from package header");
  }
  return plain;
}

ModelWeights unpack_model(ByteView package, const crypto::AeadKey& key) {
  return ModelWeights::deserialize(unpack_model_bytes(package, key));
}

crypto::AeadKey load_aead_key(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path);
  std::string line;
  std::getline(in, line);
  Bytes raw;
  try {
    raw = from_hex(trim(line));
  } catch (const Error&) {
    throw Error(ErrorCode::kMalformed, path + ": expected 64 hex characters");
  }
  crypto::AeadKey key = crypto::AeadKey::from(raw);
  crypto::secure_wipe(raw.data(), raw.size());
  return key;
}

void save_aead_key(const std::string& path, const crypto::AeadKey& key) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << to_hex(key.view()) << "\n";
}

// --- ModelSlot --------------------------------------------------------------

ModelSlot::ModelSlot(EnclaveContext ctx) : ctx_(std::move(ctx)) {}

void ModelSlot::provision_key(const KeyId& key_id, const crypto::AeadKey& key) {
  std::lock_guard lock(mu_);
  Bytes blob = ctx_->seal(ctx_.token, key_id, key.view());
  ctx_->store_sealed(ctx_.token, key_id, std::move(blob));
}

void ModelSlot::load(ByteView package, const KeyId& key_id) {
  std::lock_guard lock(mu_);
  std::optional<Bytes> blob = ctx_->sealed_blob(ctx_.token, key_id);
  if (!blob) {
    throw Error(ErrorCode::kKeyNotProvisioned, "no key for " + key_id.hex());
  }
  Bytes raw_key = ctx_->unseal(ctx_.token, key_id, *blob);
  crypto::AeadKey key = crypto::AeadKey::from(raw_key);
  crypto::secure_wipe(raw_key.data(), raw_key.size());

  Bytes plain = unpack_model_bytes(package, key);
  ModelWeights::deserialize(plain);
  Region r = ctx_->allocate(ctx_.token, "model", plain.size());
  ctx_->write(ctx_.token, r.offset, plain);
  crypto::secure_wipe(plain.data(), plain.size());

  // The working copy is decoded from protected memory, not from the
  // temporary plaintext.
  Bytes stored = ctx_->read(ctx_.token, r);
  weights_ = ModelWeights::deserialize(stored);
  digest_ = crypto::digest(stored);
  region_ = r;
}

bool ModelSlot::loaded() const {
  std::lock_guard lock(mu_);
  return weights_.has_value();
}

const ModelWeights& ModelSlot::weights() {
  std::lock_guard lock(mu_);
  if (!weights_) throw Error(ErrorCode::kNoModelLoaded);
  ctx_->access(ctx_.token, *region_);
  return *weights_;
}

void ModelSlot::touch() {
  std::lock_guard lock(mu_);
  if (!weights_) throw Error(ErrorCode::kNoModelLoaded);
  ctx_->access(ctx_.token, *region_);
}

crypto::Digest256 ModelSlot::model_digest() const {
  std::lock_guard lock(mu_);
  if (!weights_) throw Error(ErrorCode::kNoModelLoaded);
  return digest_;
}

std::optional<Region> ModelSlot::region() const {
  std::lock_guard lock(mu_);
  return region_;
}

AttestationQuote ModelSlot::attest() {
  std::lock_guard lock(mu_);
  if (!weights_) throw Error(ErrorCode::kNoModelLoaded);
  ctx_->access(ctx_.token, *region_);
  return ctx_->get_quote(ctx_.token, to_report_data(digest_));
}

}  // namespace fmtee
