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

// Attack scenarios run against a live deployment on the simulated network.
// Attackers act only through the network taps and the CSP's privileged host
// endpoints; they never hold an enclave owner token.

#ifndef FMTEE_ADVERSARY_H_
#define FMTEE_ADVERSARY_H_

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fmtee/orchestrator.h"

namespace fmtee {

enum class AttackKind : std::uint8_t {
  kEavesdropNetwork,
  kEavesdropMemory,
  kTamperMemory,
  kTamperPackage,
  kCspSwapModel,
  kCspSwapSoftware,
};

inline constexpr AttackKind kAllAttacks[] = {
    AttackKind::kEavesdropNetwork, AttackKind::kEavesdropMemory,
    AttackKind::kTamperMemory,     AttackKind::kTamperPackage,
    AttackKind::kCspSwapModel,     AttackKind::kCspSwapSoftware,
};

// EAVESDROP_NETWORK etc.
std::string_view attack_kind_name(AttackKind kind);
// Accepts the upper-case name or its lower-case, dash-separated form.
AttackKind parse_attack_kind(std::string_view text);

struct AttackScenario {
  AttackKind kind = AttackKind::kEavesdropNetwork;
  // TAMPER_MEMORY: page within the model region and bit within that page
  // (both taken modulo the available range).
  std::uint64_t page = 0;
  std::uint64_t bit = 0;
  // TAMPER_PACKAGE: bit of the .fmte file, modulo its length.
  std::uint64_t package_bit = 8 * 200 + 3;
  // CSP_SWAP_MODEL: seed of the substituted model.
  std::uint64_t swap_seed = 0xBADC0DE;
  // CSP_SWAP_SOFTWARE: byte of the entrypoint binary to modify.
  std::uint64_t software_byte = 0;
  // EAVESDROP_NETWORK: prompt sent during the observed session.
  TokenSequence prompt = {11, 22, 33, 44, 55, 66, 77, 88};

  static AttackScenario defaults(AttackKind kind);
};

struct FixtureOptions {
  std::uint64_t model_seed = 42;
  std::uint32_t vocab_size = 256;
  std::uint32_t embed_dim = 64;
  std::uint32_t context_window = 8;
  TeeType tee_type = TeeType::kApplication;
};

// A complete deployment on a fresh SimNetwork: verifier service, CSP host,
// provider software tree, encrypted model and provider configuration. The
// CSP is honest until a scenario installs a misbehavior.
class DeploymentFixture {
 public:
  static constexpr std::string_view kEntrypoint = "/app/server";
  static constexpr std::string_view kPackagePath = "/models/model.fmte";

  static std::unique_ptr<DeploymentFixture> create(
      const FixtureOptions& opts = {});
  ~DeploymentFixture();

  net::SimNetwork& network() { return *network_; }
  CspHost& csp() { return *csp_; }
  CspClient csp_client() { return CspClient(*network_, csp_->address()); }
  const std::string& csp_address() const { return csp_->address(); }
  const ProviderConfig& provider_config() const { return provider_; }
  const ModelWeights& weights() const { return weights_; }
  const Bytes& weights_bytes() const { return weights_bytes_; }
  const std::string& manifest_text() const { return manifest_text_; }
  const FileTree& software() const { return provider_.request.files; }
  const Verifier& verifier() const { return *verifier_; }
  const std::vector<std::shared_ptr<const PlatformRoot>>& platforms() const {
    return platforms_;
  }
  // Package of the model built from `seed` under the provider's key, as a
  // provider with several models would hold.
  Bytes package_for_seed(std::uint64_t seed) const;

  // Throws FIXTURE_UNHEALTHY unless the verifier and CSP answer and the
  // provider's expectations match the fixture's own software.
  void check_healthy();

  // Honest provider flow. The returned id addresses the instance on the
  // CSP's host endpoints.
  struct Deployed {
    ServiceDescriptor descriptor;
    std::uint32_t instance_id = 0;
  };
  Deployed deploy(const StepLog& log = {});

 private:
  DeploymentFixture() = default;

  FixtureOptions opts_;
  std::shared_ptr<net::SimNetwork> network_;
  std::vector<std::shared_ptr<const PlatformRoot>> platforms_;
  std::shared_ptr<const Verifier> verifier_;
  std::unique_ptr<VerifierService> verifier_service_;
  std::unique_ptr<CspHost> csp_;
  ModelWeights weights_;
  Bytes weights_bytes_;
  std::string manifest_text_;
  ProviderConfig provider_;
};

// Result of scanning observed bytes for secrets.
struct ContainmentScan {
  // Distinct 16-byte windows of the plaintext weights found.
  std::size_t weight_window_hits = 0;
  // Secrets (prompt encodings, keys) found verbatim.
  std::size_t secret_hits = 0;

  bool clean() const { return weight_window_hits == 0 && secret_hits == 0; }
};

inline constexpr std::size_t kContainmentWindow = 16;

// Every 16-byte window of `weights` is searched for in `observed`.
ContainmentScan scan_containment(ByteView observed, ByteView weights,
                                 const std::vector<Bytes>& secrets);

struct AttackReport {
  AttackScenario scenario;
  bool blocked = false;
  // Ordered findings: (name, value).
  std::vector<std::pair<std::string, std::string>> evidence;

  // One JSON object, no trailing newline.
  std::string to_json_line() const;
};

// Throws FIXTURE_UNHEALTHY. Leaves the fixture's CSP honest on return.
AttackReport run_attack(const AttackScenario& scenario,
                        DeploymentFixture& fixture);

struct SuiteReport {
  std::vector<AttackReport> reports;

  bool all_blocked() const;
  std::size_t blocked_count() const;
};

// Every scenario with default parameters, each on a freshly built fixture.
SuiteReport run_all(const FixtureOptions& opts = {});

}  // namespace fmtee

#endif  // FMTEE_ADVERSARY_H_
