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

#include <gtest/gtest.h>
#include <openssl/evp.h>

#include <memory>
#include <random>

#include "test_util.h"

namespace fmtee {
namespace {

using testing::random_bytes;

Manifest small_manifest() {
  return parse_manifest(
      "enclave_size = 1M\n"
      "thread_count = 1\n"
      "entrypoint = /app/server\n"
      "trusted_file = /app/server\n"
      "allowed_file = /data/in\n");
}

FileTree small_tree(std::string_view server = "server binary") {
  FileTree t;
  t.put("/app/server", server);
  t.put("/data/in", std::string_view("allowed"));
  return t;
}

bool openssl_ed25519_verify(const crypto::SigningPublicKey& pub, ByteView msg,
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

class EnclaveTest : public ::testing::Test {
 protected:
  std::shared_ptr<const PlatformRoot> platform_ =
      PlatformRoot::create(TeeType::kApplication);
};

TEST_F(EnclaveTest, LaunchMeasuresAndRuns) {
  auto ctx = launch_enclave(platform_, small_manifest(), small_tree());
  EXPECT_EQ(ctx->measurement(), compute_measurement(small_manifest(), small_tree()));
  EXPECT_EQ(ctx->state(), EnclaveState::kRunning);
  EXPECT_EQ(ctx->read_trusted_file(ctx.token, "/app/server"),
            to_bytes("server binary"));
  auto other = launch_enclave(platform_, small_manifest(), small_tree("server binarY"));
  EXPECT_NE(other->measurement(), ctx->measurement());
}

TEST_F(EnclaveTest, LaunchWithoutEntrypointFails) {
  FileTree t;
  t.put("/data/in", std::string_view("x"));
  EXPECT_FMTEE_ERROR(launch_enclave(platform_, small_manifest(), t),
                     ErrorCode::kValidationFailed);
}

TEST_F(EnclaveTest, QuoteVerifiesUnderRootOnly) {
  auto ctx = launch_enclave(platform_, small_manifest(), small_tree());
  ReportData rd = to_report_data(crypto::digest("binding"));
  AttestationQuote q = ctx->get_quote(ctx.token, rd);
  EXPECT_EQ(q.measurement, ctx->measurement());
  EXPECT_EQ(q.report_data, rd);
  EXPECT_EQ(q.platform_id, platform_->platform_id());
  EXPECT_EQ(q.tee_type, static_cast<std::uint8_t>(TeeType::kApplication));
  EXPECT_TRUE(q.verify_signature(platform_->root_public_key()));
  EXPECT_TRUE(openssl_ed25519_verify(platform_->root_public_key(),
                                     q.signed_message(), q.signature.view()));
  EXPECT_FALSE(q.verify_signature(
      PlatformRoot::create(TeeType::kApplication)->root_public_key()));
  EXPECT_EQ(AttestationQuote::parse(q.serialize()), q);
}

TEST_F(EnclaveTest, QuoteSignedMessageLayout) {
  AttestationQuote q;
  q.tee_type = 2;
  q.platform_id = PlatformId::from(Bytes(16, 0x11));
  q.measurement = crypto::Digest256::from(Bytes(32, 0x22));
  q.report_data = ReportData::from(Bytes(32, 0x33));
  Bytes expected = to_bytes("fmtee-quote-v1");
  Bytes fields = from_hex("0001" "02" "0010");
  expected.insert(expected.end(), fields.begin(), fields.end());
  expected.insert(expected.end(), 16, 0x11);
  expected.push_back(0);
  expected.push_back(32);
  expected.insert(expected.end(), 32, 0x22);
  expected.push_back(0);
  expected.push_back(32);
  expected.insert(expected.end(), 32, 0x33);
  EXPECT_EQ(q.signed_message(), expected);
  EXPECT_EQ(q.serialize().size(), 2u + 1 + 2 + 16 + 2 + 32 + 2 + 32 + 2 + 64);
}

TEST_F(EnclaveTest, HostCannotQuote) {
  auto ctx = launch_enclave(platform_, small_manifest(), small_tree());
  EXPECT_FMTEE_ERROR(ctx->get_quote(OwnerToken{}, ReportData{}),
                     ErrorCode::kNotOwner);
  auto other = launch_enclave(platform_, small_manifest(), small_tree());
  EXPECT_FMTEE_ERROR(ctx->get_quote(other.token, ReportData{}),
                     ErrorCode::kNotOwner);
}

TEST_F(EnclaveTest, EverySerializedQuoteBitFlipFailsVerification) {
  auto ctx = launch_enclave(platform_, small_manifest(), small_tree());
  Bytes qb = ctx->get_quote(ctx.token, ReportData{}).serialize();
  ASSERT_TRUE(verify_serialized_quote(qb, platform_->root_public_key()));
  for (std::size_t bit = 0; bit < qb.size() * 8; ++bit) {
    Bytes t = qb;
    t[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    ASSERT_FALSE(verify_serialized_quote(t, platform_->root_public_key())) << bit;
  }
}

TEST_F(EnclaveTest, HostReadsAreGarbled) {
  auto ctx = launch_enclave(platform_, small_manifest(), small_tree());
  std::mt19937_64 rng(21);
  Region r = ctx->allocate(ctx.token, "weights", 64);
  for (int i = 0; i < 1000; ++i) {
    Bytes block = random_bytes(rng, 64);
    ctx->write(ctx.token, r.offset, block);
    Bytes seen = ctx->read_as_host(r.offset, 64);
    ASSERT_EQ(seen.size(), 64u);
    ASSERT_NE(seen, block);
    ASSERT_EQ(ctx->read(ctx.token, r), block);
  }
  EXPECT_TRUE(ctx->read_as_host(r.offset, 0).empty());
  EXPECT_TRUE(ctx->read_as_host(ctx->memory_size() + 10, 5).empty());
}

TEST_F(EnclaveTest, HostWriteFaultsOnNextAccessOnly) {
  auto ctx = launch_enclave(platform_, small_manifest(), small_tree());
  Region a = ctx->allocate(ctx.token, "a", Enclave::kPageSize);
  Region b = ctx->allocate(ctx.token, "b", Enclave::kPageSize);
  ctx->write(ctx.token, a.offset, Bytes(100, 7));
  Bytes byte = ctx->read_as_host(b.offset + 5, 1);
  byte[0] ^= 1;
  ctx->write_as_host(b.offset + 5, byte);
  // Page b is never touched: the enclave keeps running.
  EXPECT_EQ(ctx->read(ctx.token, a.offset, 100), Bytes(100, 7));
  EXPECT_EQ(ctx->state(), EnclaveState::kRunning);
  EXPECT_FMTEE_ERROR(ctx->access(ctx.token, b), ErrorCode::kIntegrityFault);
  EXPECT_EQ(ctx->state(), EnclaveState::kCrashed);
}

TEST_F(EnclaveTest, CrashIsAbsorbing) {
  auto ctx = launch_enclave(platform_, small_manifest(), small_tree());
  Region r = ctx->allocate(ctx.token, "r", 10);
  Bytes blob = ctx->seal(ctx.token, KeyId{}, to_bytes("s"));
  Bytes b = ctx->read_as_host(r.offset, 1);
  b[0] ^= 0x80;
  ctx->write_as_host(r.offset, b);
  EXPECT_FMTEE_ERROR(ctx->read(ctx.token, r), ErrorCode::kIntegrityFault);
  constexpr auto kCrashed = ErrorCode::kEnclaveCrashed;
  EXPECT_FMTEE_ERROR(ctx->get_quote(ctx.token, ReportData{}), kCrashed);
  EXPECT_FMTEE_ERROR(ctx->read(ctx.token, r), kCrashed);
  EXPECT_FMTEE_ERROR(ctx->write(ctx.token, r.offset, Bytes{1}), kCrashed);
  EXPECT_FMTEE_ERROR(ctx->allocate(ctx.token, "x", 1), kCrashed);
  EXPECT_FMTEE_ERROR(ctx->access(ctx.token, r), kCrashed);
  EXPECT_FMTEE_ERROR(ctx->seal(ctx.token, KeyId{}, Bytes{1}), kCrashed);
  EXPECT_FMTEE_ERROR(ctx->unseal(ctx.token, KeyId{}, blob), kCrashed);
  EXPECT_FMTEE_ERROR(ctx->read_trusted_file(ctx.token, "/app/server"), kCrashed);
  EXPECT_FMTEE_ERROR(ctx->read_allowed_file(ctx.token, "/data/in"), kCrashed);
}

TEST_F(EnclaveTest, ExhaustiveByteTamperOverOnePage) {
  std::size_t detected = 0;
  for (std::size_t off = 0; off < Enclave::kPageSize; ++off) {
    auto ctx = launch_enclave(platform_, small_manifest(), small_tree());
    Region r = ctx->allocate(ctx.token, "page", Enclave::kPageSize);
    Bytes b = ctx->read_as_host(r.offset + off, 1);
    b[0] = static_cast<std::uint8_t>(b[0] + 1 + off % 255);
    ctx->write_as_host(r.offset + off, b);
    if (testing::thrown_code([&] { ctx->access(ctx.token, r); }) ==
        static_cast<int>(ErrorCode::kIntegrityFault)) {
      ++detected;
    }
  }
  EXPECT_EQ(detected, Enclave::kPageSize);
}

TEST_F(EnclaveTest, AllocationBeyondEnclaveSizeFails) {
  auto ctx = launch_enclave(platform_, small_manifest(), small_tree());
  EXPECT_FMTEE_ERROR(ctx->allocate(ctx.token, "big", 1u << 20),
                     ErrorCode::kOutOfEnclaveMemory);
}

TEST_F(EnclaveTest, AllowedFileAccessControl) {
  auto storage = std::make_shared<HostStorage>(small_tree());
  auto ctx = Enclave::launch(platform_, small_manifest(), storage);
  EXPECT_EQ(ctx->read_allowed_file(ctx.token, "/data/in"), to_bytes("allowed"));
  storage->put("/data/in", to_bytes("changed"));
  EXPECT_EQ(ctx->read_allowed_file(ctx.token, "/data/in"), to_bytes("changed"));
  EXPECT_FMTEE_ERROR(ctx->read_allowed_file(ctx.token, "/app/server"),
                     ErrorCode::kFileNotAllowed);
  // Trusted files come from protected memory, not the host copy.
  storage->put("/app/server", to_bytes("evil"));
  EXPECT_EQ(ctx->read_trusted_file(ctx.token, "/app/server"),
            to_bytes("server binary"));
}

TEST_F(EnclaveTest, SealBindsMeasurementAndPlatform) {
  auto ctx = launch_enclave(platform_, small_manifest(), small_tree());
  KeyId id = KeyId::from(Bytes(16, 5));
  Bytes blob = ctx->seal(ctx.token, id, to_bytes("model key"));
  EXPECT_EQ(ctx->unseal(ctx.token, id, blob), to_bytes("model key"));

  auto same = launch_enclave(platform_, small_manifest(), small_tree());
  EXPECT_EQ(same->unseal(same.token, id, blob), to_bytes("model key"));

  auto changed = launch_enclave(platform_, small_manifest(), small_tree("server binarz"));
  EXPECT_FMTEE_ERROR(changed->unseal(changed.token, id, blob),
                     ErrorCode::kSealMismatch);
  auto elsewhere = launch_enclave(PlatformRoot::create(TeeType::kApplication),
                                  small_manifest(), small_tree());
  EXPECT_FMTEE_ERROR(elsewhere->unseal(elsewhere.token, id, blob),
                     ErrorCode::kSealMismatch);

  Bytes tampered = blob;
  tampered.back() ^= 1;
  EXPECT_FMTEE_ERROR(ctx->unseal(ctx.token, id, tampered), ErrorCode::kDecryptFail);
  EXPECT_FMTEE_ERROR(ctx->unseal(ctx.token, KeyId{}, blob), ErrorCode::kDecryptFail);
}

TEST(PlatformRootTest, FromSeedIsStable) {
  auto seed = crypto::KeySeed::from(Bytes(32, 9));
  auto a = PlatformRoot::from_seed(TeeType::kVm, seed);
  auto b = PlatformRoot::from_seed(TeeType::kVm, seed);
  EXPECT_EQ(a->platform_id(), b->platform_id());
  EXPECT_EQ(a->root_public_key(), b->root_public_key());
  EXPECT_EQ(a->tee_type(), TeeType::kVm);
}

TEST(TeeTypeTest, ParseNames) {
  EXPECT_EQ(parse_tee_type("sgx"), TeeType::kApplication);
  EXPECT_EQ(parse_tee_type("vm"), TeeType::kVm);
  EXPECT_EQ(parse_tee_type("tdx"), TeeType::kVm);
  EXPECT_FMTEE_ERROR(parse_tee_type("sev"), ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace fmtee
