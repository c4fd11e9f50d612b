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
// OpenSSL is the independent reference for every primitive here.

#include "fmtee/crypto.h"

#include <gtest/gtest.h>
#include <openssl/evp.h>

#include <memory>
#include <random>
#include <set>

#include "test_util.h"

namespace fmtee::crypto {
namespace {

using fmtee::testing::random_bytes;

Bytes openssl_sha256(ByteView data) {
  Bytes out(32);
  unsigned int len = 0;
  EXPECT_EQ(EVP_Digest(data.data(), data.size(), out.data(), &len,
                       EVP_sha256(), nullptr),
            1);
  return out;
}

bool openssl_ed25519_verify(const SigningPublicKey& pub, ByteView msg,
                            ByteView sig) {
  std::unique_ptr<EVP_PKEY, decltype(&EVP_PKEY_free)> key(
      EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, pub.data(), 32),
      EVP_PKEY_free);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              EVP_MD_CTX_free);
  EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, key.get());
  return EVP_DigestVerify(ctx.get(), sig.data(), sig.size(), msg.data(),
                          msg.size()) == 1;
}

Bytes openssl_chacha_seal(const AeadKey& key, const Nonce& nonce,
                          ByteView plain, ByteView ad) {
  std::unique_ptr<EVP_CIPHER_CTX, decltype(&EVP_CIPHER_CTX_free)> ctx(
      EVP_CIPHER_CTX_new(), EVP_CIPHER_CTX_free);
  EVP_EncryptInit_ex(ctx.get(), EVP_chacha20_poly1305(), nullptr, key.data(),
                     nonce.data());
  int len = 0;
  if (!ad.empty()) {
    EVP_EncryptUpdate(ctx.get(), nullptr, &len, ad.data(),
                      static_cast<int>(ad.size()));
  }
  Bytes out(plain.size() + 16);
  if (!plain.empty()) {
    EVP_EncryptUpdate(ctx.get(), out.data(), &len, plain.data(),
                      static_cast<int>(plain.size()));
  }
  EVP_EncryptFinal_ex(ctx.get(), out.data() + plain.size(), &len);
  EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_GET_TAG, 16,
                      out.data() + plain.size());
  return out;
}

TEST(Digest, EmptyStringMatchesReference) {
  Digest256 d = digest(ByteView{});
  EXPECT_EQ(d.to_vector(), openssl_sha256({}));
  EXPECT_EQ(d.hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Digest, RandomInputsMatchReference) {
  std::mt19937_64 rng(1);
  for (std::size_t n : {1u, 55u, 56u, 63u, 64u, 65u, 1000u, 100000u}) {
    Bytes x = random_bytes(rng, n);
    EXPECT_EQ(digest(x).to_vector(), openssl_sha256(x)) << n;
  }
}

TEST(Digest, HasherEqualsOneShot) {
  std::mt19937_64 rng(2);
  Bytes x = random_bytes(rng, 5000);
  Hasher h;
  h.update(ByteView(x).first(17)).update(ByteView(x).subspan(17));
  EXPECT_EQ(h.finish(), digest(x));
}

TEST(Digest, OneBitChangesNeverCollide) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10000; ++i) {
    Bytes x = random_bytes(rng, 1 + rng() % 64);
    Bytes y = x;
    std::size_t bit = rng() % (x.size() * 8);
    y[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    ASSERT_NE(digest(x), digest(y));
  }
}

TEST(Signature, RoundTripAndReferenceVerifier) {
  auto key = SigningKeyPair::generate();
  Bytes msg = to_bytes("quote body");
  Signature sig = key.sign(msg);
  EXPECT_TRUE(verify(key.public_key(), msg, sig.view()));
  EXPECT_TRUE(openssl_ed25519_verify(key.public_key(), msg, sig.view()));
  EXPECT_FALSE(verify(SigningKeyPair::generate().public_key(), msg, sig.view()));
}

TEST(Signature, FromSeedIsDeterministic) {
  KeySeed seed = KeySeed::from_hex(
      "9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60");
  auto a = SigningKeyPair::from_seed(seed);
  auto b = SigningKeyPair::from_seed(seed);
  EXPECT_EQ(a.public_key(), b.public_key());
  // RFC 8032 test 1.
  EXPECT_EQ(a.public_key().hex(),
            "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a");
  EXPECT_EQ(a.sign({}).hex(),
            "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e06522490155"
            "5fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b");
}

TEST(Signature, OneBitFlipsRejected) {
  std::mt19937_64 rng(4);
  auto key = SigningKeyPair::generate();
  for (int i = 0; i < 1000; ++i) {
    Bytes msg = random_bytes(rng, 1 + rng() % 128);
    Signature sig = key.sign(msg);
    Bytes m2 = msg;
    std::size_t bit = rng() % (m2.size() * 8);
    m2[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    ASSERT_FALSE(verify(key.public_key(), m2, sig.view()));
    Bytes s2 = sig.to_vector();
    bit = rng() % (s2.size() * 8);
    s2[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    ASSERT_FALSE(verify(key.public_key(), msg, s2));
  }
}

TEST(Signature, MalformedEncodingIsFalse) {
  auto key = SigningKeyPair::generate();
  EXPECT_FALSE(verify(key.public_key(), to_bytes("m"), Bytes(63, 1)));
  EXPECT_FALSE(verify(key.public_key(), to_bytes("m"), Bytes{}));
}

TEST(KeyAgree, SymmetricAndMatchesReference) {
  for (int i = 0; i < 100; ++i) {
    auto a = ExchangeKeyPair::generate();
    auto b = ExchangeKeyPair::generate();
    ASSERT_EQ(key_agree(a, b.public_key()), key_agree(b, a.public_key()));
  }
  // RFC 7748 section 6.1.
  auto alice = ExchangeKeyPair::from_seed(KeySeed::from_hex(
      "77076d0a7318a57d3c16c17251b26645df4c2f87ebc0992ab177fba51db92c2a"));
  auto bob = ExchangeKeyPair::from_seed(KeySeed::from_hex(
      "5dab087e624a8a4b79e17f8b83800ee66f3bb1292618b6fd1c2f8b27ff88e0eb"));
  EXPECT_EQ(alice.public_key().hex(),
            "8520f0098930a754748b7ddcb43ef75a0dbf3a0d26381af4eba4a98eaa9b4e6a");
  EXPECT_EQ(to_hex(key_agree(alice, bob.public_key()).view()),
            "4a5d9d5ba4ce2de1728e3bf480350f25e07e21c947d19e3376f09b3c1e161742");
}

TEST(KeyAgree, ThirdKeyGivesDifferentSecret) {
  auto a = ExchangeKeyPair::generate();
  auto b = ExchangeKeyPair::generate();
  auto c = ExchangeKeyPair::generate();
  EXPECT_FALSE(key_agree(a, b.public_key()) == key_agree(a, c.public_key()));
}

TEST(KeyAgree, AllZeroPublicValueRejected) {
  auto a = ExchangeKeyPair::generate();
  EXPECT_FMTEE_ERROR(key_agree(a, ExchangePublicKey{}),
                     ErrorCode::kRejectedPublicKey);
}

TEST(Hkdf, Rfc5869Vectors) {
  Bytes ikm(22, 0x0b);
  Bytes salt = from_hex("000102030405060708090a0b0c");
  Bytes info = from_hex("f0f1f2f3f4f5f6f7f8f9");
  EXPECT_EQ(to_hex(hkdf_sha256(salt, ikm, info, 42)),
            "3cb25f25faacd57a90434f64d0362f2a2d2d0a90cf1a5a4c5db02d56ecc4c5bf"
            "34007208d5b887185865");
  EXPECT_EQ(to_hex(hkdf_sha256({}, ikm, {}, 42)),
            "8da4e775a563c18f715f802a063c5a31b8a11f5c5ee1879ec3454e5f3c738d2d"
            "9d201395faa4b61a96c8");
}

TEST(SessionKeys, DeterministicDirectionalAndTranscriptBound) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    auto shared = SharedSecret::from(random_bytes(rng, 32));
    auto t = Digest256::from(random_bytes(rng, 32));
    SessionKeys a = derive_session_keys(shared, t);
    SessionKeys b = derive_session_keys(shared, t);
    ASSERT_TRUE(a.client_to_server == b.client_to_server);
    ASSERT_TRUE(a.server_to_client == b.server_to_client);
    ASSERT_FALSE(a.client_to_server == a.server_to_client);
    Digest256 t2 = t;
    std::size_t bit = rng() % 256;
    t2[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    SessionKeys c = derive_session_keys(shared, t2);
    ASSERT_FALSE(a.client_to_server == c.client_to_server);
    ASSERT_FALSE(a.server_to_client == c.server_to_client);
  }
}

TEST(Aead, MatchesReferenceAndRoundTrips) {
  std::mt19937_64 rng(6);
  for (std::size_t n : {0u, 1u, 63u, 64u, 1000u}) {
    auto key = AeadKey::from(random_bytes(rng, 32));
    Nonce nonce = nonce_from_counter(n);
    Bytes plain = random_bytes(rng, n);
    Bytes ad = random_bytes(rng, 10);
    Bytes ct = aead_seal(key, nonce, plain, ad);
    EXPECT_EQ(ct, openssl_chacha_seal(key, nonce, plain, ad)) << n;
    EXPECT_EQ(aead_open(key, nonce, ct, ad), plain);
  }
}

TEST(Aead, ExhaustiveBitFlipsOver64ByteMessage) {
  std::mt19937_64 rng(7);
  auto key = AeadKey::from(random_bytes(rng, 32));
  Nonce nonce = nonce_from_counter(9);
  Bytes plain = random_bytes(rng, 64);
  Bytes ad = to_bytes("header");
  Bytes ct = aead_seal(key, nonce, plain, ad);
  std::size_t detected = 0;
  for (std::size_t bit = 0; bit < ct.size() * 8; ++bit) {
    Bytes t = ct;
    t[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    if (fmtee::testing::thrown_code([&] { aead_open(key, nonce, t, ad); }) ==
        static_cast<int>(ErrorCode::kDecryptFail)) {
      ++detected;
    }
  }
  EXPECT_EQ(detected, ct.size() * 8);
}

TEST(Aead, AnyChangedParameterFails) {
  std::mt19937_64 rng(8);
  auto key = AeadKey::from(random_bytes(rng, 32));
  auto other = AeadKey::from(random_bytes(rng, 32));
  Bytes ct = aead_seal(key, nonce_from_counter(1), to_bytes("p"), to_bytes("a"));
  EXPECT_FMTEE_ERROR(aead_open(key, nonce_from_counter(1), ct, to_bytes("b")),
                     ErrorCode::kDecryptFail);
  EXPECT_FMTEE_ERROR(aead_open(key, nonce_from_counter(2), ct, to_bytes("a")),
                     ErrorCode::kDecryptFail);
  EXPECT_FMTEE_ERROR(aead_open(other, nonce_from_counter(1), ct, to_bytes("a")),
                     ErrorCode::kDecryptFail);
  EXPECT_FMTEE_ERROR(aead_open(key, nonce_from_counter(1), Bytes(15), {}),
                     ErrorCode::kDecryptFail);
}

TEST(Aead, NonceIsBigEndianCounter) {
  EXPECT_EQ(nonce_from_counter(0x0102030405060708ull).hex(),
            "000000000102030405060708");
  EXPECT_TRUE(nonce_from_counter(0).is_zero());
}

TEST(Random, ValuesDiffer) {
  std::set<Bytes> seen;
  for (int i = 0; i < 100; ++i) seen.insert(crypto::random_bytes(32));
  EXPECT_EQ(seen.size(), 100u);
}

}  // namespace
}  // namespace fmtee::crypto
