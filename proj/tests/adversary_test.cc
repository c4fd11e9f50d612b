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

#include "fmtee/adversary.h"

#include <gtest/gtest.h>

#include <random>

#include "defense_hooks.h"
#include "test_util.h"

namespace fmtee {
namespace {

std::string evidence(const AttackReport& r, const std::string& key) {
  for (const auto& [k, v] : r.evidence) {
    if (k == key) return v;
  }
  return "";
}

TEST(AttackNamesTest, ParseAcceptsBothSpellings) {
  for (AttackKind k : kAllAttacks) {
    EXPECT_EQ(parse_attack_kind(attack_kind_name(k)), k);
  }
  EXPECT_EQ(parse_attack_kind("csp-swap-model"), AttackKind::kCspSwapModel);
  EXPECT_FMTEE_ERROR(parse_attack_kind("ddos"), ErrorCode::kInvalidArgument);
}

TEST(ContainmentTest, FindsPlantedWindowsAndSecrets) {
  std::mt19937_64 rng(5);
  Bytes weights = testing::random_bytes(rng, 4096);
  Bytes noise = testing::random_bytes(rng, 8192);
  EXPECT_TRUE(scan_containment(noise, weights, {}).clean());
  Bytes leaky = noise;
  leaky.insert(leaky.begin() + 100, weights.begin() + 1000, weights.begin() + 1016);
  EXPECT_EQ(scan_containment(leaky, weights, {}).weight_window_hits, 1u);
  // 15 bytes are below the window.
  Bytes short_leak = noise;
  short_leak.insert(short_leak.begin() + 100, weights.begin() + 1000, weights.begin() + 1015);
  EXPECT_TRUE(scan_containment(short_leak, weights, {}).clean());
  Bytes secret = {1, 2, 3, 4, 5};
  Bytes with_secret = noise;
  with_secret.insert(with_secret.end(), secret.begin(), secret.end());
  EXPECT_EQ(scan_containment(with_secret, weights, {secret}).secret_hits, 1u);
}

TEST(SuiteTest, EveryScenarioBlocked) {
  SuiteReport s = run_all();
  ASSERT_EQ(s.reports.size(), 6u);
  for (const AttackReport& r : s.reports) {
    EXPECT_TRUE(r.blocked) << r.to_json_line();
    EXPECT_FALSE(r.evidence.empty());
  }
  EXPECT_TRUE(s.all_blocked());
  EXPECT_EQ(s.blocked_count(), 6u);
}

TEST(SuiteTest, NegativeControlsAreNotBlocked) {
  for (AttackKind k : kAllAttacks) {
    testing::ScopedDefenses off(testing::without_defense_for(k));
    auto f = DeploymentFixture::create();
    AttackReport r = run_attack(AttackScenario::defaults(k), *f);
    EXPECT_FALSE(r.blocked) << testing::defense_for(k) << " " << r.to_json_line();
  }
  // Defenses are back on afterwards.
  EXPECT_TRUE(active_defenses().memory_integrity);
}

TEST(SuiteTest, ReportsAreSingleJsonLines) {
  auto f = DeploymentFixture::create();
  AttackScenario s = AttackScenario::defaults(AttackKind::kTamperMemory);
  s.page = 1;
  s.bit = 77;
  AttackReport r = run_attack(s, *f);
  std::string line = r.to_json_line();
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(line.rfind("{\"scenario\":\"TAMPER_MEMORY\",\"params\":{\"page\":1,\"bit\":77},"
                       "\"blocked\":true,",
                       0),
            0u)
      << line;
}

TEST(TamperMemoryTest, RandomPagesAndBitsAlwaysCrash) {
  std::mt19937_64 rng(2026);
  int blocked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto f = DeploymentFixture::create();
    AttackScenario s = AttackScenario::defaults(AttackKind::kTamperMemory);
    s.page = rng();
    s.bit = rng();
    AttackReport r = run_attack(s, *f);
    blocked += r.blocked;
    EXPECT_EQ(evidence(r, "session"), "SERVICE_CRASHED") << r.to_json_line();
  }
  EXPECT_EQ(blocked, 100);
}

TEST(TamperPackageTest, HeaderAndBodyBitsAbortAtStepSix) {
  auto f = DeploymentFixture::create();
  // Magic, key id, nonce, digest, ciphertext and tag.
  for (std::uint64_t bit : {0ull, 8ull * 5 + 1, 8ull * 25, 8ull * 40 + 7, 8ull * 65,
                            8ull * 1500 + 2, 1ull << 40}) {
    AttackScenario s = AttackScenario::defaults(AttackKind::kTamperPackage);
    s.package_bit = bit;
    AttackReport r = run_attack(s, *f);
    EXPECT_TRUE(r.blocked) << r.to_json_line();
  }
}

TEST(SwapTest, AnySoftwareByteAndAnyOtherModelAbort) {
  auto f = DeploymentFixture::create();
  for (std::uint64_t byte : {0ull, 17ull, 5999ull}) {
    AttackScenario s = AttackScenario::defaults(AttackKind::kCspSwapSoftware);
    s.software_byte = byte;
    EXPECT_TRUE(run_attack(s, *f).blocked) << byte;
  }
  for (std::uint64_t seed : {1ull, 43ull, 0xFFFFull}) {
    AttackScenario s = AttackScenario::defaults(AttackKind::kCspSwapModel);
    s.swap_seed = seed;
    EXPECT_TRUE(run_attack(s, *f).blocked) << seed;
  }
  // The fixture is honest again afterwards.
  EXPECT_NO_THROW(f->deploy());
}

TEST(EavesdropTest, RandomPromptsNeverVisibleOnTheWire) {
  std::mt19937_64 rng(8);
  auto f = DeploymentFixture::create();
  for (int i = 0; i < 5; ++i) {
    AttackScenario s = AttackScenario::defaults(AttackKind::kEavesdropNetwork);
    s.prompt.clear();
    for (int j = 0; j < 8; ++j) s.prompt.push_back(static_cast<Token>(rng() % 256));
    AttackReport r = run_attack(s, *f);
    EXPECT_TRUE(r.blocked) << r.to_json_line();
    EXPECT_NE(evidence(r, "tapped_bytes"), "0");
  }
}

TEST(FixtureTest, UnhealthyFixtureIsReported) {
  auto f = DeploymentFixture::create();
  EXPECT_NO_THROW(f->check_healthy());
  f->csp().stop();
  EXPECT_FMTEE_ERROR(run_attack(AttackScenario::defaults(AttackKind::kEavesdropMemory), *f),
                     ErrorCode::kFixtureUnhealthy);
}

}  // namespace
}  // namespace fmtee
