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

// The test vectors listed in FORMATS.md. Expected values were computed
// independently (Python hashlib/hmac and the cryptography package).

#include <gtest/gtest.h>

#include "fmtee/orchestrator.h"

namespace fmtee {
namespace {

Bytes seed_bytes() {
  Bytes b(32);
  for (int i = 0; i < 32; ++i) b[i] = static_cast<std::uint8_t>(i);
  return b;
}

crypto::AeadKey key42() { return crypto::AeadKey::from(Bytes(32, 0x42)); }

Manifest one_file_manifest() {
  return parse_manifest(
      "enclave_size = 1M\nthread_count = 1\nentrypoint = /app/server\n"
      "trusted_file = /app/server\n");
}

FileTree one_file_tree() {
  FileTree t;
  t.put("/app/server", std::string_view("hello"));
  return t;
}

constexpr std::string_view kWeightsHex =
    "464d5457010000000000000001000000040000000200000002ffff919a0000052b0000a1"
    "6fffffa556ffff1437ffff650cffff30120000da69";

TEST(FormatsTest, PlatformDerivation) {
  auto root = PlatformRoot::from_seed(TeeType::kApplication,
                                      crypto::KeySeed::from(seed_bytes()));
  EXPECT_EQ(root->platform_id().hex(), "341438b773a9fe6573256e5413cd30ff");
  EXPECT_EQ(root->root_public_key().hex(),
            "5bb8df0d5c5729eec19913a86b9a7f9894c909b6adca2d11ed614a0ba81f592e");
  EXPECT_EQ(to_hex(crypto::hkdf_sha256({}, seed_bytes(), as_bytes("fmtee seal secret"), 32)),
            "60105baa52c2193bfb4a4a03f9c77cc1fd46bcedba8d8d47a4386aaf009fa7e9");
}

TEST(FormatsTest, FeatureBucket) {
  EXPECT_EQ(feature_bucket(0, 5, 7, 64), 44u);
  EXPECT_EQ(feature_bucket(3, 1000, 42, 64), 23u);
}

TEST(FormatsTest, Weights) {
  ModelWeights w = ModelWeights::generate(1, 4, 2, 2);
  EXPECT_EQ(w.token_bias, (std::vector<std::int32_t>{-28262, 1323, 41327, -23210}));
  EXPECT_EQ(w.features, (std::vector<std::int32_t>{-60361, -39668, -53230, 55913}));
  EXPECT_EQ(to_hex(w.serialize()), kWeightsHex);
  EXPECT_EQ(w.digest().hex(),
            "a50fda58300965c2f206e175c7dfa1a995a3cae74cdd84dfc02aeeeae4433d99");
}

TEST(FormatsTest, Package) {
  ModelWeights w = ModelWeights::generate(1, 4, 2, 2);
  Bytes pkg = pack_model(w, key42(), KeyId::from(Bytes(16, 0x11)),
                         crypto::Nonce::from(Bytes(12, 0x22)))
                  .serialize();
  EXPECT_EQ(to_hex(pkg),
            "464d54450111111111111111111111111111111111222222222222222222222222a50f"
            "da58300965c2f206e175c7dfa1a995a3cae74cdd84dfc02aeeeae4433d997318f2c1dd"
            "5a2c729f8086fde54f806ad54fac41a41c3ddf490a3c6b138a365bfed2bba9cee99212"
            "608ae1774f0420b480136b90a204706864d5f7b33472b135b5d3bf1ca61f288b59");
  EXPECT_EQ(to_hex(unpack_model_bytes(pkg, key42())), kWeightsHex);
}

TEST(FormatsTest, Measurement) {
  EXPECT_EQ(to_hex(measurement_encoding(one_file_manifest(), one_file_tree())),
            "00000014666d7465652d6d6561737572656d656e742d76310000000000100000000000"
            "010000000b2f6170702f7365727665720000000000000000010000000b2f6170702f73"
            "65727665722cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e730433629"
            "38b9824");
  EXPECT_EQ(compute_measurement(one_file_manifest(), one_file_tree()).hex(),
            "1ab6f85c5b5594d28d7ee9cef95b7e6e6f81bccc05e260cc22262349abd04a73");
}

TEST(FormatsTest, ChannelRecord) {
  ByteWriter h;
  h.u64(0).u16(3 + crypto::kAeadTagSize);
  Bytes frame = concat({h.bytes(), crypto::aead_seal(key42(), crypto::nonce_from_counter(0),
                                                     as_bytes("abc"), h.bytes())});
  EXPECT_EQ(to_hex(frame), "00000000000000000013380487e583ef01e556fcad2d382daf403e8c6c");
}

TEST(FormatsTest, Quote) {
  Bytes seed = seed_bytes();
  auto root = PlatformRoot::from_seed(TeeType::kApplication, crypto::KeySeed::from(seed));
  AttestationQuote q;
  q.tee_type = 1;
  q.platform_id = root->platform_id();
  q.measurement = compute_measurement(one_file_manifest(), one_file_tree());
  q.report_data = to_report_data(crypto::digest("abc"));
  q.signature = crypto::SigningKeyPair::from_seed(
                    crypto::KeySeed::from(crypto::hkdf_sha256(
                        {}, seed, as_bytes("fmtee platform root"), 32)))
                    .sign(q.signed_message());
  EXPECT_EQ(to_hex(q.serialize()),
            "0001010010341438b773a9fe6573256e5413cd30ff00201ab6f85c5b5594d28d7ee9ce"
            "f95b7e6e6f81bccc05e260cc22262349abd04a730020ba7816bf8f01cfea414140de5d"
            "ae2223b00361a396177a9cb410ff61f20015ad0040c19c9ea50e6d5533f2808c93261a"
            "de7876614995330eb3d809a646aafeb8ea8bcb43962d9254c232b238571fd997a21db2"
            "adea2a88efd37fa4219ad4cc2a4105");
  EXPECT_TRUE(verify_serialized_quote(q.serialize(), root->root_public_key()));
}

TEST(FormatsTest, RagIndexAndDataset) {
  EXPECT_EQ(rag_index_digest(RagIndex{{1, {2, 3}}}).hex(),
            "0d30a2cf16b8a23b90e5c22f6c93f86fb97a142d8f5f4bd8b2443e9790ad005a");
  std::vector<DatasetItem> ds{{{1, 2, 3}, 4}, {{5}, 6}};
  EXPECT_EQ(render_dataset(ds), "1,2,3\t4\n5\t6\n");
  EXPECT_EQ(dataset_digest(ds).hex(),
            "84cabe963bb8f61a5721eb69b1d47b187e1abb3960a15f68a195f83ba54231d5");
  AccuracyReport a;
  a.model_digest = ModelWeights::generate(1, 4, 2, 2).digest();
  a.dataset_digest = dataset_digest(ds);
  a.correct = 1;
  a.total = 2;
  EXPECT_EQ(to_hex(a.serialize()),
            "00000011666d7465652d61636375726163792d7631a50fda58300965c2f206e175c7df"
            "a1a995a3cae74cdd84dfc02aeeeae4433d9984cabe963bb8f61a5721eb69b1d47b187e"
            "1abb3960a15f68a195f83ba54231d500000000000000010000000000000002");
}

TEST(FormatsTest, ErrorPayload) {
  EXPECT_EQ(to_hex(net::encode_error(ErrorCode::kDecryptFail, "x")), "060000000178");
}

}  // namespace
}  // namespace fmtee
