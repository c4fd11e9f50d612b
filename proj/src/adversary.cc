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

#include <algorithm>
#include <cctype>
#include <string_view>
#include <unordered_set>

#include "json.hpp"

namespace fmtee {
namespace {

constexpr std::uint32_t kSessionTokens = 8;

std::string fake_binary(std::string_view name, std::size_t size) {
  std::string out = "\x7f" "FMX fmtee " + std::string(name) + "\n";
  std::uint64_t x = 0x243F6A8885A308D3ull;
  for (char c : name) x = (x ^ static_cast<unsigned char>(c)) * 0x100000001B3ull;
  while (out.size() < size) {
    x ^= x << 13;
    x ^= x >> 7;
    x ^= x << 17;
    out.push_back(static_cast<char>(x & 0xFF));
  }
  return out;
}

std::string fixture_manifest() {
  return "enclave_size = 64M\n"
         "thread_count = 4\n"
         "entrypoint = /app/server\n"
         "trusted_file = /app/server\n"
         "trusted_file = /app/libllm.so\n"
         "trusted_file = /etc/service.conf\n"
         "allowed_file = /models/model.fmte\n"
         "key_provider = provider://model-owner\n"
         "attestation_mode = remote\n";
}

std::string upper_name(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    c = c == '-' ? '_' : static_cast<char>(std::toupper(
                             static_cast<unsigned char>(c)));
  }
  return out;
}

void add(AttackReport& r, std::string name, std::string value) {
  r.evidence.emplace_back(std::move(name), std::move(value));
}

std::string describe(const Error& e) {
  if (const auto* abort = dynamic_cast<const StepAbort*>(&e)) {
    return "ABORT_AT_STEP(" + std::to_string(abort->step()) + ", " +
           std::string(error_code_name(abort->reason())) + ")";
  }
  return std::string(error_code_name(e.code()));
}

// Provider flow expected to abort with `reason`. Blocked iff it does.
void expect_abort(AttackReport& r, DeploymentFixture& f, ErrorCode reason,
                  int expected_step) {
  try {
    ServiceDescriptor d = provider_deploy(
        f.provider_config(), f.network(), f.csp_address());
    add(r, "provider_flow", "completed");
    add(r, "published_address", d.address);
    r.blocked = false;
  } catch (const StepAbort& e) {
    add(r, "provider_flow", describe(e));
    add(r, "detail", e.detail());
    r.blocked = e.reason() == reason && e.step() == expected_step;
  }
}

}  // namespace

std::string_view attack_kind_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::kEavesdropNetwork: return "EAVESDROP_NETWORK";
    case AttackKind::kEavesdropMemory: return "EAVESDROP_MEMORY";
    case AttackKind::kTamperMemory: return "TAMPER_MEMORY";
    case AttackKind::kTamperPackage: return "TAMPER_PACKAGE";
    case AttackKind::kCspSwapModel: return "CSP_SWAP_MODEL";
    case AttackKind::kCspSwapSoftware: return "CSP_SWAP_SOFTWARE";
  }
  return "UNKNOWN";
}

AttackKind parse_attack_kind(std::string_view text) {
  std::string name = upper_name(text);
  for (AttackKind k : kAllAttacks) {
    if (attack_kind_name(k) == name) return k;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown attack scenario '" + std::string(text) + "'");
}

AttackScenario AttackScenario::defaults(AttackKind kind) {
  AttackScenario s;
  s.kind = kind;
  return s;
}

// --- fixture ----------------------------------------------------------------

DeploymentFixture::~DeploymentFixture() {
  if (csp_) csp_->stop();
  if (verifier_service_) verifier_service_->stop();
}

std::unique_ptr<DeploymentFixture> DeploymentFixture::create(
    const FixtureOptions& opts) {
  std::unique_ptr<DeploymentFixture> f(new DeploymentFixture());
  f->opts_ = opts;
  f->network_ = net::SimNetwork::create();
  f->platforms_ = {PlatformRoot::create(TeeType::kApplication),
                   PlatformRoot::create(TeeType::kVm)};

  f->manifest_text_ = fixture_manifest();
  Manifest m = parse_manifest(f->manifest_text_);
  FileTree software;
  software.put("/app/server", fake_binary("server", 6000));
  software.put("/app/libllm.so", fake_binary("libllm", 9000));
  software.put("/etc/service.conf", std::string_view("max_new_tokens = 64\n"));

  f->weights_ = ModelWeights::generate(opts.model_seed, opts.vocab_size,
                                       opts.embed_dim, opts.context_window);
  f->weights_bytes_ = f->weights_.serialize();

  ProviderConfig& p = f->provider_;
  p.model_key = crypto::random_value<crypto::AeadKey>();
  p.key_id = crypto::random_value<KeyId>();
  p.package_path = std::string(kPackagePath);
  software.put(p.package_path, f->package_for_seed(opts.model_seed));
  p.expected_measurement = compute_measurement(m, software);
  p.expected_model_digest = crypto::digest(f->weights_bytes_);
  p.request.manifest_text = f->manifest_text_;
  p.request.tee_type = opts.tee_type;
  p.request.kind = ServiceKind::kInference;
  p.request.files = std::move(software);

  ReferencePolicy policy;
  policy.accepted_measurements.insert(p.expected_measurement);
  for (const auto& root : f->platforms_) {
    policy.accepted_tee_types.insert(root->tee_type());
    policy.trusted_roots.insert({root->platform_id(), root->root_public_key()});
  }
  f->verifier_ = std::make_shared<const Verifier>(
      std::move(policy), crypto::SigningKeyPair::generate());
  f->verifier_service_ = std::make_unique<VerifierService>(
      f->verifier_, *f->network_, "sim://verifier");
  p.verifier_address = f->verifier_service_->address();
  p.verifier_public_key = f->verifier_->public_key();

  f->csp_ = std::make_unique<CspHost>(*f->network_, "sim://csp",
                                      f->platforms_);
  return f;
}

Bytes DeploymentFixture::package_for_seed(std::uint64_t seed) const {
  ModelWeights w = ModelWeights::generate(seed, opts_.vocab_size,
                                          opts_.embed_dim,
                                          opts_.context_window);
  return pack_model(w, provider_.model_key, provider_.key_id).serialize();
}

void DeploymentFixture::check_healthy() {
  try {
    network_->connect(verifier_service_->address())->close();
    network_->connect(csp_->address())->close();
  } catch (const Error& e) {
    throw Error(ErrorCode::kFixtureUnhealthy,
                "service unreachable: " + e.detail());
  }
  Manifest m = parse_manifest(manifest_text_);
  if (compute_measurement(m, provider_.request.files) !=
      provider_.expected_measurement) {
    throw Error(ErrorCode::kFixtureUnhealthy,
                "expected measurement does not match the software tree");
  }
  if (crypto::digest(weights_bytes_) != provider_.expected_model_digest) {
    throw Error(ErrorCode::kFixtureUnhealthy,
                "expected model digest does not match the weights");
  }
}

DeploymentFixture::Deployed DeploymentFixture::deploy(const StepLog& log) {
  Deployed out;
  out.descriptor = provider_deploy(provider_, *network_, csp_->address(), log);
  std::optional<std::uint32_t> id = csp_->find_instance(out.descriptor.address);
  if (!id) {
    throw Error(ErrorCode::kFixtureUnhealthy, "deployed instance not found");
  }
  out.instance_id = *id;
  return out;
}

// --- containment ------------------------------------------------------------

ContainmentScan scan_containment(ByteView observed, ByteView weights,
                                 const std::vector<Bytes>& secrets) {
  ContainmentScan scan;
  if (weights.size() >= kContainmentWindow &&
      observed.size() >= kContainmentWindow) {
    std::unordered_set<std::string_view> windows;
    auto chars = [](ByteView v, std::size_t i) {
      return std::string_view(reinterpret_cast<const char*>(v.data()) + i,
                              kContainmentWindow);
    };
    for (std::size_t i = 0; i + kContainmentWindow <= weights.size(); ++i) {
      windows.insert(chars(weights, i));
    }
    std::unordered_set<std::string_view> hits;
    for (std::size_t i = 0; i + kContainmentWindow <= observed.size(); ++i) {
      auto it = windows.find(chars(observed, i));
      if (it != windows.end()) hits.insert(*it);
    }
    scan.weight_window_hits = hits.size();
  }
  for (const Bytes& s : secrets) {
    if (contains_subsequence(observed, s)) ++scan.secret_hits;
  }
  return scan;
}

// --- reports ----------------------------------------------------------------

std::string AttackReport::to_json_line() const {
  nlohmann::ordered_json j;
  j["scenario"] = attack_kind_name(scenario.kind);
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  switch (scenario.kind) {
    case AttackKind::kEavesdropNetwork:
      params["prompt"] = render_tokens(scenario.prompt);
      break;
    case AttackKind::kEavesdropMemory:
      break;
    case AttackKind::kTamperMemory:
      params["page"] = scenario.page;
      params["bit"] = scenario.bit;
      break;
    case AttackKind::kTamperPackage:
      params["bit"] = scenario.package_bit;
      break;
    case AttackKind::kCspSwapModel:
      params["seed"] = scenario.swap_seed;
      break;
    case AttackKind::kCspSwapSoftware:
      params["byte"] = scenario.software_byte;
      break;
  }
  j["params"] = params;
  j["blocked"] = blocked;
  nlohmann::ordered_json ev = nlohmann::ordered_json::object();
  for (const auto& [k, v] : evidence) ev[k] = v;
  j["evidence"] = ev;
  return j.dump();
}

bool SuiteReport::all_blocked() const {
  return blocked_count() == reports.size();
}

std::size_t SuiteReport::blocked_count() const {
  return static_cast<std::size_t>(
      std::count_if(reports.begin(), reports.end(),
                    [](const AttackReport& r) { return r.blocked; }));
}

// --- scenarios --------------------------------------------------------------

namespace {

void eavesdrop_network(const AttackScenario& s, DeploymentFixture& f,
                       AttackReport& r) {
  f.network().clear_taps();
  auto d = f.deploy();
  UserResult res = user_prompt(d.descriptor, s.prompt, kSessionTokens,
                               f.network());
  Bytes observed = f.network().tapped_bytes();
  std::vector<Bytes> secrets = {
      encode_tokens(s.prompt),
      encode_prompt_args(s.prompt, kSessionTokens),
      encode_tokens(res.completion),
  };
  ByteView key = f.provider_config().model_key.view();
  secrets.emplace_back(key.begin(), key.end());
  ContainmentScan scan =
      scan_containment(observed, f.weights_bytes(), secrets);
  add(r, "tapped_bytes", std::to_string(observed.size()));
  add(r, "tap_records", std::to_string(f.network().tap_log().size()));
  add(r, "weight_window_hits", std::to_string(scan.weight_window_hits));
  add(r, "secret_hits", std::to_string(scan.secret_hits));
  r.blocked = scan.clean();
}

void eavesdrop_memory(DeploymentFixture& f, AttackReport& r) {
  auto d = f.deploy();
  CspClient host = f.csp_client();
  std::optional<Region> model;
  for (const Region& reg : host.host_regions(d.instance_id)) {
    if (reg.name == "model") model = reg;
  }
  if (!model) throw Error(ErrorCode::kFixtureUnhealthy, "no model region");
  Bytes seen = host.host_read(d.instance_id, model->offset, model->length);
  ContainmentScan scan = scan_containment(seen, f.weights_bytes(), {});
  add(r, "region_offset", std::to_string(model->offset));
  add(r, "bytes_read", std::to_string(seen.size()));
  add(r, "equals_plaintext", seen == f.weights_bytes() ? "true" : "false");
  add(r, "weight_window_hits", std::to_string(scan.weight_window_hits));
  r.blocked = seen != f.weights_bytes() && scan.clean();
}

void tamper_memory(const AttackScenario& s, DeploymentFixture& f,
                   AttackReport& r) {
  auto d = f.deploy();
  CspClient host = f.csp_client();
  std::optional<Region> model;
  for (const Region& reg : host.host_regions(d.instance_id)) {
    if (reg.name == "model") model = reg;
  }
  if (!model) throw Error(ErrorCode::kFixtureUnhealthy, "no model region");
  std::uint64_t pages =
      (model->length + Enclave::kPageSize - 1) / Enclave::kPageSize;
  std::uint64_t page = s.page % pages;
  std::uint64_t bit = s.bit % (Enclave::kPageSize * 8);
  std::uint64_t offset = model->offset + page * Enclave::kPageSize + bit / 8;
  Bytes b = host.host_read(d.instance_id, offset, 1);
  if (b.size() != 1) throw Error(ErrorCode::kFixtureUnhealthy, "short read");
  b[0] ^= static_cast<std::uint8_t>(1u << (bit % 8));
  host.host_write(d.instance_id, offset, b);
  add(r, "flipped_offset", std::to_string(offset));

  auto session = ServiceSession::open(
      f.network(), d.descriptor.address,
      descriptor_check(d.descriptor, f.network()));
  bool crashed = false;
  try {
    session->call(op::kPrompt, encode_prompt_args(s.prompt, kSessionTokens));
    add(r, "session", "completed");
  } catch (const Error& e) {
    add(r, "session", describe(e));
    crashed = e.code() == ErrorCode::kServiceCrashed;
  }
  bool closed = crashed && session->peer_closed();
  add(r, "connection_closed", closed ? "true" : "false");
  r.blocked = crashed && closed;
}

void tamper_package(const AttackScenario& s, DeploymentFixture& f,
                    AttackReport& r) {
  std::string path(DeploymentFixture::kPackagePath);
  f.csp().set_misbehavior(flip_file_bit(path, s.package_bit));
  expect_abort(r, f, ErrorCode::kDecryptFail, 6);
}

void csp_swap_model(const AttackScenario& s, DeploymentFixture& f,
                    AttackReport& r) {
  std::string path(DeploymentFixture::kPackagePath);
  f.csp().set_misbehavior(replace_file(path, f.package_for_seed(s.swap_seed)));
  expect_abort(r, f, ErrorCode::kModelDigestMismatch, 7);
}

void csp_swap_software(const AttackScenario& s, DeploymentFixture& f,
                       AttackReport& r) {
  std::string path(DeploymentFixture::kEntrypoint);
  f.csp().set_misbehavior(modify_file_byte(path, s.software_byte));
  expect_abort(r, f, ErrorCode::kMeasurementMismatch, 5);
}

}  // namespace

AttackReport run_attack(const AttackScenario& scenario,
                        DeploymentFixture& fixture) {
  fixture.check_healthy();
  fixture.csp().set_misbehavior({});
  AttackReport r;
  r.scenario = scenario;
  try {
    switch (scenario.kind) {
      case AttackKind::kEavesdropNetwork:
        eavesdrop_network(scenario, fixture, r);
        break;
      case AttackKind::kEavesdropMemory:
        eavesdrop_memory(fixture, r);
        break;
      case AttackKind::kTamperMemory:
        tamper_memory(scenario, fixture, r);
        break;
      case AttackKind::kTamperPackage:
        tamper_package(scenario, fixture, r);
        break;
      case AttackKind::kCspSwapModel:
        csp_swap_model(scenario, fixture, r);
        break;
      case AttackKind::kCspSwapSoftware:
        csp_swap_software(scenario, fixture, r);
        break;
    }
  } catch (const StepAbort& e) {
    // The honest part of a scenario (its own deployment) failed.
    fixture.csp().set_misbehavior({});
    throw Error(ErrorCode::kFixtureUnhealthy,
                "honest deployment failed: " + describe(e) + " " + e.detail());
  } catch (...) {
    fixture.csp().set_misbehavior({});
    throw;
  }
  fixture.csp().set_misbehavior({});
  return r;
}

SuiteReport run_all(const FixtureOptions& opts) {
  SuiteReport suite;
  for (AttackKind k : kAllAttacks) {
    auto fixture = DeploymentFixture::create(opts);
    suite.reports.push_back(run_attack(AttackScenario::defaults(k), *fixture));
  }
  return suite;
}

}  // namespace fmtee
