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

// Runs the fmtee binary as a user would.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <string>

#include "fmtee/manifest.h"

namespace {

namespace fs = std::filesystem;

struct Result {
  int rc = -1;
  std::string out;  // stdout and stderr
};

Result run(const std::string& cmd) {
  Result r;
  FILE* p = popen((cmd + " 2>&1").c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  int status = pclose(p);
  r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    data_ = fs::temp_directory_path() /
            ("fmtee_cli_" + std::string(::testing::UnitTest::GetInstance()
                                            ->current_test_info()->name()));
    fs::remove_all(data_);
    fs::create_directories(data_);
  }
  void TearDown() override { fs::remove_all(data_); }

  Result fm(const std::string& args) {
    return run(std::string(FMTEE_CLI) + " --data-dir " + data_.string() + " " + args);
  }

  fs::path data_;
};

TEST_F(CliTest, HelpForEverySubcommand) {
  for (const char* sub :
       {"", "verifier", "verifier keygen", "verifier serve", "csp", "csp host", "provider",
        "provider pack", "provider verify-model", "provider deploy", "rag deploy",
        "user prompt", "attack run", "bench run", "bench compare", "manifest measure",
        "demo e2e"}) {
    Result r = fm(std::string(sub) + " --help");
    EXPECT_EQ(r.rc, 0) << sub << "\n" << r.out;
    EXPECT_NE(r.out.find("Usage"), std::string::npos) << sub;
  }
  EXPECT_NE(fm("no-such-command").rc, 0);
}

TEST_F(CliTest, ManifestMeasureMatchesLibrary) {
  fs::path sample = FMTEE_SAMPLE_DIR;
  Result r = fm("manifest measure --manifest " + (sample / "manifest.conf").string());
  ASSERT_EQ(r.rc, 0) << r.out;
  EXPECT_TRUE(std::regex_match(r.out, std::regex("[0-9a-f]{64}\n"))) << r.out;
  std::ifstream in(sample / "manifest.conf");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  auto m = fmtee::compute_measurement(fmtee::parse_manifest(text),
                                      fmtee::FileTree::from_directory(sample / "software"));
  EXPECT_EQ(r.out, m.hex() + "\n");
}

TEST_F(CliTest, DemoRunsInProcessAndOverTcp) {
  for (const char* transport : {"inproc", "tcp"}) {
    Result r = fm(std::string("--transport ") + transport + " demo e2e");
    EXPECT_EQ(r.rc, 0) << r.out;
    for (int step = 1; step <= 9; ++step) {
      EXPECT_NE(r.out.find("[step " + std::to_string(step) + "] PASS"), std::string::npos)
          << transport << " step " << step;
    }
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("[check] PASS"), std::string::npos);
  }
}

TEST_F(CliTest, AttackSuiteExitsZeroWhenAllBlocked) {
  Result r = fm("attack run --all");
  EXPECT_EQ(r.rc, 0) << r.out;
  std::size_t lines = 0;
  for (std::size_t p = r.out.find("\"blocked\":true"); p != std::string::npos;
       p = r.out.find("\"blocked\":true", p + 1)) {
    ++lines;
  }
  EXPECT_EQ(lines, 6u) << r.out;
  Result one = fm("attack run --scenario tamper-memory --page 2 --bit 9");
  EXPECT_EQ(one.rc, 0) << one.out;
  EXPECT_NE(one.out.find("\"page\":2"), std::string::npos);
  EXPECT_EQ(fm("attack run --scenario nonsense").rc, 1);
}

TEST_F(CliTest, OutputsStayInDataDir) {
  Result r = fm("verifier keygen --out ../escape.key");
  EXPECT_EQ(r.rc, 1) << r.out;
  EXPECT_FALSE(fs::exists(data_.parent_path() / "escape.key"));
}

TEST_F(CliTest, BenchRunAndCompare) {
  Result a = fm("bench run --mode latency --target bare --min-tokens 200 --out a.jsonl");
  ASSERT_EQ(a.rc, 0) << a.out;
  Result b = fm("bench run --mode latency --target enclave --enclave-tax 0.05 --min-tokens 200 "
             "--out b.jsonl");
  ASSERT_EQ(b.rc, 0) << b.out;
  Result c = fm("bench compare " + (data_ / "a.jsonl").string() + " " +
             (data_ / "b.jsonl").string());
  EXPECT_EQ(c.rc, 0) << c.out;
  EXPECT_NE(c.out.find("latency_overhead_pct"), std::string::npos);
  Result t = fm("bench run --mode throughput --target bare --min-tokens 10 --out t.jsonl");
  ASSERT_EQ(t.rc, 0) << t.out;
  Result mismatch = fm("bench compare " + (data_ / "a.jsonl").string() + " " +
                    (data_ / "t.jsonl").string());
  EXPECT_EQ(mismatch.rc, 1) << mismatch.out;
  EXPECT_NE(mismatch.out.find("CONFIG_MISMATCH"), std::string::npos) << mismatch.out;
}

TEST_F(CliTest, ThreeProcessWalkthrough) {
  Result r = run(std::string(FMTEE_WALKTHROUGH) + " " + FMTEE_CLI + " " + data_.string());
  EXPECT_EQ(r.rc, 0) << r.out;
  EXPECT_NE(r.out.find("[step 7] PASS service published"), std::string::npos) << r.out;
  EXPECT_TRUE(std::regex_search(r.out, std::regex("\n[0-9]+(,[0-9]+)+\n"))) << r.out;
}

TEST_F(CliTest, MisbehavingCspExitCodes) {
  struct Case {
    std::string flags;
    int rc;
    std::string abort;
  };
  for (const Case& c : {Case{"--swap-software /app/server", 2, "ABORT_AT_STEP(5, "},
                        Case{"--tamper-package-bit 1603", 3, "ABORT_AT_STEP(6, "}}) {
    fs::remove_all(data_);
    Result r = run("CSP_FLAGS='" + c.flags + "' " + FMTEE_WALKTHROUGH + " " + FMTEE_CLI + " " +
                data_.string());
    EXPECT_EQ(r.rc, c.rc) << c.flags << "\n" << r.out;
    EXPECT_NE(r.out.find(c.abort), std::string::npos) << r.out;
    EXPECT_EQ(r.out.find("service published"), std::string::npos);
  }
}

}  // namespace
