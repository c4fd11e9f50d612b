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

// fmtee: every role and harness behind one binary.
//
// Exit status: 0 success, 1 usage or configuration error, 2 attestation
// failure, 3 integrity failure, 4 protocol error. `attack run` exits 3 when
// any scenario is not blocked.

#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "fmtee/adversary.h"
#include "fmtee/bench.h"
#include "fmtee/kv.h"
#include "fmtee/orchestrator.h"

namespace fs = std::filesystem;

namespace fmtee {
namespace {

struct Globals {
  std::string transport;  // "", "tcp" or "inproc"
  std::string data_dir;
  int verbose = 0;
};

Globals g;

void log_info(const std::string& msg) {
  if (g.verbose >= 1) std::cerr << "fmtee: " << msg << "\n";
}

void log_warn(const std::string& msg) { std::cerr << "fmtee: " << msg << "\n"; }

fs::path data_dir() {
  if (!g.data_dir.empty()) return g.data_dir;
  if (const char* env = std::getenv("FMTEE_DATA_DIR"); env && *env) {
    return env;
  }
  return "fmtee-data";
}

// Resolves an output path inside the data directory; refuses to escape it.
fs::path output_path(const std::string& name) {
  fs::path dir = fs::weakly_canonical(fs::absolute(data_dir()));
  fs::path p = fs::path(name).is_absolute() ? fs::path(name) : dir / name;
  p = fs::weakly_canonical(fs::absolute(p));
  auto rel = p.lexically_relative(dir);
  if (rel.empty() || *rel.begin() == "..") {
    throw Error(ErrorCode::kInvalidArgument,
                p.string() + " is outside the data directory " + dir.string());
  }
  fs::create_directories(p.parent_path());
  return p;
}

Bytes read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + p.string());
  return Bytes((std::istreambuf_iterator<char>(in)),
               std::istreambuf_iterator<char>());
}

std::string read_text(const fs::path& p) {
  Bytes b = read_file(p);
  return std::string(b.begin(), b.end());
}

void write_file(const fs::path& p, ByteView data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
}

void write_text(const fs::path& p, std::string_view text) {
  write_file(p, as_bytes(text));
}

// Network commands need a transport that reaches other processes.
std::shared_ptr<net::Transport> network_transport() {
  if (g.transport == "inproc") {
    throw Error(ErrorCode::kInvalidArgument,
                "the inproc transport only reaches services in this process; "
                "use --transport tcp");
  }
  return std::make_shared<net::TcpTransport>();
}

// Blocks SIGINT/SIGTERM for every thread started afterwards and returns a
// function that waits for one of them.
std::function<void()> prepare_signal_wait() {
  static sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return [] {
    int sig = 0;
    sigwait(&set, &sig);
  };
}

std::string step_line(int step, const std::string& what, bool ok) {
  return "[step " + std::to_string(step) + "] " + (ok ? "PASS " : "FAIL ") +
         what;
}

StepLog stdout_steps() {
  return [](int step, const std::string& what, bool ok) {
    std::cout << step_line(step, what, ok) << std::endl;
  };
}

// Relative paths in a config file are relative to the file.
fs::path relative_to(const fs::path& config, const std::string& value) {
  fs::path p(value);
  return p.is_absolute() ? p : config.parent_path() / p;
}

crypto::SigningPublicKey parse_public_key(const std::string& hex) {
  return crypto::SigningPublicKey::from_hex(hex);
}

DeploymentRequest load_request(KvDocument& doc, const fs::path& config,
                               ServiceKind kind) {
  DeploymentRequest req;
  req.kind = kind;
  req.manifest_text = read_text(relative_to(config, doc.require("manifest")));
  req.files = FileTree::from_directory(
      relative_to(config, doc.require("software_root")));
  req.tee_type = parse_tee_type(doc.get("tee_type").value_or("application"));
  return req;
}

ProviderConfig load_provider_config(const fs::path& path) {
  KvDocument doc(read_text(path));
  ProviderConfig cfg;
  cfg.request = load_request(doc, path, ServiceKind::kInference);
  cfg.verifier_address = doc.require("verifier_address");
  cfg.verifier_public_key = parse_public_key(doc.require("verifier_public_key"));
  cfg.expected_measurement =
      crypto::Digest256::from_hex(doc.require("expected_measurement"));
  cfg.expected_model_digest =
      crypto::Digest256::from_hex(doc.require("expected_model_digest"));
  cfg.model_key =
      load_aead_key(relative_to(path, doc.require("model_key")).string());
  cfg.package_path = doc.get("package_path").value_or("/models/model.fmte");
  Bytes package = read_file(relative_to(path, doc.require("package")));
  cfg.key_id = EncryptedModelPackage::parse(package).key_id;
  cfg.request.files.put(cfg.package_path, std::move(package));
  if (auto rag = doc.get("rag_descriptor")) {
    cfg.rag = ServiceDescriptor::parse(read_text(relative_to(path, *rag)));
  }
  doc.require("csp_address");
  doc.reject_unknown();
  return cfg;
}

RagIndex parse_documents(std::string_view text) {
  RagIndex index;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto tab = t.find('\t');
    if (tab == std::string::npos) {
      throw SyntaxError(line_no, "expected key<TAB>tokens");
    }
    Token key = static_cast<Token>(parse_u64(trim(t.substr(0, tab)), line_no));
    index[key] = parse_tokens(trim(t.substr(tab + 1)));
  }
  return index;
}

// --- verifier ---------------------------------------------------------------

int verifier_keygen(const std::string& out) {
  auto key = crypto::SigningKeyPair::generate();
  fs::path p = output_path(out);
  save_signing_key(p.string(), key);
  std::cout << "public_key = " << key.public_key().hex() << "\n";
  log_info("wrote " + p.string());
  return 0;
}

int verifier_serve(const std::string& listen, const std::string& policy_file,
                   const std::string& key_file) {
  auto wait = prepare_signal_wait();
  auto transport = network_transport();
  ReferencePolicy policy = parse_policy(read_text(policy_file));
  crypto::SigningKeyPair key =
      load_signing_key(key_file.empty() ? output_path("verifier.key").string()
                                        : key_file);
  auto verifier = std::make_shared<const Verifier>(std::move(policy), key);
  VerifierService service(verifier, *transport, listen);
  std::cout << "address = " << service.address() << "\n"
            << "public_key = " << verifier->public_key().hex() << std::endl;
  wait();
  service.stop();
  return 0;
}

// --- csp --------------------------------------------------------------------

std::shared_ptr<const PlatformRoot> stable_platform(TeeType type) {
  fs::path p = output_path("csp-" + std::string(tee_type_name(type)) + ".seed");
  crypto::KeySeed seed;
  if (fs::exists(p)) {
    seed = crypto::KeySeed::from_hex(trim(read_text(p)));
  } else {
    seed = crypto::random_value<crypto::KeySeed>();
    write_text(p, seed.hex() + "\n");
  }
  return PlatformRoot::from_seed(type, seed);
}

struct CspFlags {
  std::string listen = "127.0.0.1:7000";
  std::string swap_software;
  std::string swap_model;
  std::optional<std::uint64_t> tamper_package_bit;
  std::string package_path = "/models/model.fmte";
};

int csp_host(const CspFlags& f) {
  auto wait = prepare_signal_wait();
  auto transport = network_transport();
  std::vector<std::shared_ptr<const PlatformRoot>> platforms = {
      stable_platform(TeeType::kApplication), stable_platform(TeeType::kVm)};

  std::vector<TreeMutator> mutators;
  if (!f.swap_software.empty()) {
    mutators.push_back(modify_file_byte(f.swap_software, 0));
    log_warn("misbehaving: modifying " + f.swap_software + " before launch");
  }
  if (!f.swap_model.empty()) {
    mutators.push_back(replace_file(f.package_path, read_file(f.swap_model)));
    log_warn("misbehaving: serving " + f.swap_model + " as " + f.package_path);
  }
  if (f.tamper_package_bit) {
    mutators.push_back(flip_file_bit(f.package_path, *f.tamper_package_bit));
    log_warn("misbehaving: flipping bit " +
             std::to_string(*f.tamper_package_bit) + " of " + f.package_path);
  }
  TreeMutator misbehavior;
  if (!mutators.empty()) {
    misbehavior = [mutators](FileTree& t) {
      for (const auto& m : mutators) m(t);
    };
  }
  CspHost host(*transport, f.listen, platforms, misbehavior);

  ReferencePolicy roots;
  for (const auto& p : platforms) {
    roots.accepted_tee_types.insert(p->tee_type());
    roots.trusted_roots.insert({p->platform_id(), p->root_public_key()});
  }
  std::string roots_text = render_policy(roots);
  write_text(output_path("csp-roots.conf"), roots_text);
  std::cout << "address = " << host.address() << "\n" << roots_text
            << std::flush;
  wait();
  host.stop();
  return 0;
}

// --- provider -----------------------------------------------------------------

struct PackFlags {
  std::uint64_t seed = 42;
  std::uint32_t vocab = 256;
  std::uint32_t embed = 64;
  std::uint32_t window = 8;
  std::string out = "model.fmte";
  std::string key;
  std::string key_out = "model.key";
};

int provider_pack(const PackFlags& f) {
  ModelWeights w = ModelWeights::generate(f.seed, f.vocab, f.embed, f.window);
  crypto::AeadKey key;
  if (!f.key.empty()) {
    key = load_aead_key(f.key);
  } else {
    key = crypto::random_value<crypto::AeadKey>();
    fs::path kp = output_path(f.key_out);
    save_aead_key(kp.string(), key);
    log_info("wrote " + kp.string());
  }
  // The key id names the key without revealing it.
  crypto::Hasher h;
  h.update(as_bytes("fmtee key id")).update(key.view());
  KeyId key_id = KeyId::from(h.finish().view().first(KeyId::kSize));
  EncryptedModelPackage pkg = pack_model(w, key, key_id);
  fs::path out = output_path(f.out);
  write_file(out, pkg.serialize());
  std::cout << "package = " << out.string() << "\n"
            << "model_digest = " << pkg.model_digest.hex() << "\n"
            << "key_id = " << key_id.hex() << "\n";
  return 0;
}

int provider_verify_model(const std::string& package, const std::string& key,
                          const std::string& expected) {
  Bytes plain = unpack_model_bytes(read_file(package), load_aead_key(key));
  ModelWeights w = ModelWeights::deserialize(plain);
  crypto::Digest256 d = crypto::digest(plain);
  std::cout << "model_digest = " << d.hex() << "\n"
            << "vocab_size = " << w.vocab_size << "\n"
            << "embed_dim = " << w.embed_dim << "\n"
            << "context_window = " << w.context_window << "\n";
  if (!expected.empty() && crypto::Digest256::from_hex(expected) != d) {
    throw Error(ErrorCode::kModelDigestMismatch,
                "package holds " + d.hex() + ", expected " + expected);
  }
  return 0;
}

int provider_deploy_cmd(const std::string& config, const std::string& out) {
  auto transport = network_transport();
  KvDocument peek(read_text(config));
  std::string csp = peek.require("csp_address");
  ProviderConfig cfg = load_provider_config(config);
  ServiceDescriptor d =
      provider_deploy(cfg, *transport, csp, stdout_steps());
  fs::path p = output_path(out);
  write_text(p, d.render());
  std::cout << "descriptor = " << p.string() << "\n";
  return 0;
}

int rag_deploy_cmd(const std::string& config, const std::string& out) {
  auto transport = network_transport();
  fs::path path(config);
  KvDocument doc(read_text(path));
  RagConfig cfg;
  cfg.request = load_request(doc, path, ServiceKind::kRag);
  cfg.verifier_address = doc.require("verifier_address");
  cfg.verifier_public_key = parse_public_key(doc.require("verifier_public_key"));
  cfg.expected_measurement =
      crypto::Digest256::from_hex(doc.require("expected_measurement"));
  cfg.documents =
      parse_documents(read_text(relative_to(path, doc.require("documents"))));
  std::string csp = doc.require("csp_address");
  doc.reject_unknown();
  ServiceDescriptor d = deploy_rag_service(cfg, *transport, csp, stdout_steps());
  fs::path p = output_path(out);
  write_text(p, d.render());
  std::cout << "descriptor = " << p.string() << "\n";
  return 0;
}

// --- user -------------------------------------------------------------------

int user_prompt_cmd(const std::string& descriptor, const std::string& prompt,
                    const std::string& prompt_file, std::uint32_t max_new) {
  auto transport = network_transport();
  ServiceDescriptor d = ServiceDescriptor::parse(read_text(descriptor));
  std::string text = prompt_file.empty() ? prompt : read_text(prompt_file);
  TokenSequence tokens = parse_tokens(trim(text));
  UserResult r = user_prompt(d, tokens, max_new, *transport);
  log_info("verdict pass, measurement " + r.measurement.hex());
  std::cout << render_tokens(r.completion) << "\n";
  return 0;
}

// --- attack -----------------------------------------------------------------

int attack_run(const std::string& scenario, bool all, AttackScenario params) {
  if (all == !scenario.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "give exactly one of --scenario or --all");
  }
  std::vector<AttackReport> reports;
  if (all) {
    reports = run_all().reports;
  } else {
    params.kind = parse_attack_kind(scenario);
    auto fixture = DeploymentFixture::create();
    reports.push_back(run_attack(params, *fixture));
  }
  std::size_t blocked = 0;
  for (const auto& r : reports) {
    std::cout << r.to_json_line() << "\n";
    blocked += r.blocked ? 1 : 0;
  }
  log_info(std::to_string(blocked) + "/" + std::to_string(reports.size()) +
           " blocked");
  return blocked == reports.size() ? 0 : 3;
}

// --- bench ------------------------------------------------------------------

struct BenchFlags {
  std::string mode = "latency";
  std::string target = "bare";
  std::uint64_t min_tokens = 1000;
  std::string out;
  std::string baseline_out;
  double enclave_tax = 0.0;
};

void print_summary(const BenchmarkReport& r, const fs::path& p) {
  std::cout << r.label << ": " << r.raw_count << " samples, "
            << r.removed_count << " removed; latency mean "
            << r.latency.mean * 1e3 << " ms; " << r.tokens_per_second_total()
            << " tokens/s total, " << r.tokens_per_second_per_stream()
            << " tokens/s per stream -> " << p.string() << "\n";
}

int bench_run(const BenchFlags& f) {
  BenchMode mode = parse_bench_mode(f.mode);
  GenerationConfig cfg = bench_config(mode);
  auto weights = std::make_shared<const ModelWeights>(bench_model());
  std::string env = "fmtee toy model V=" + std::to_string(weights->vocab_size) +
                    " E=" + std::to_string(weights->embed_dim) +
                    " window=" + std::to_string(weights->context_window) +
                    ", enclave_tax=" + std::to_string(f.enclave_tax);
  std::string mode_name(bench_mode_name(mode));
  if (f.out.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "--out is required");
  }
  if (f.target == "bare") {
    if (!f.baseline_out.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "--baseline-out needs --target enclave");
    }
    auto samples = measure(bare_target(weights), cfg, f.min_tokens);
    BenchmarkReport r = analyze(samples, cfg, "bare/" + mode_name, env);
    fs::path p = output_path(f.out);
    write_text(p, r.to_jsonl());
    print_summary(r, p);
    return 0;
  }
  if (f.target != "enclave") {
    throw Error(ErrorCode::kInvalidArgument,
                "unknown target '" + f.target + "'");
  }
  EnclaveTarget enclave(*weights, f.enclave_tax);
  if (f.baseline_out.empty()) {
    auto samples = measure(enclave.target(), cfg, f.min_tokens);
    BenchmarkReport r = analyze(samples, cfg, "enclave/" + mode_name, env);
    fs::path p = output_path(f.out);
    write_text(p, r.to_jsonl());
    print_summary(r, p);
    return 0;
  }
  PairedSamples s = measure_interleaved(bare_target(weights), enclave.target(),
                                        cfg, f.min_tokens);
  BenchmarkReport base = analyze(s.a, cfg, "bare/" + mode_name, env);
  BenchmarkReport sec = analyze(s.b, cfg, "enclave/" + mode_name, env);
  fs::path pb = output_path(f.baseline_out);
  fs::path ps = output_path(f.out);
  write_text(pb, base.to_jsonl());
  write_text(ps, sec.to_jsonl());
  print_summary(base, pb);
  print_summary(sec, ps);
  return 0;
}

int bench_compare(const std::string& a, const std::string& b) {
  BenchmarkReport base = BenchmarkReport::from_jsonl(read_text(a));
  BenchmarkReport sec = BenchmarkReport::from_jsonl(read_text(b));
  std::cout << compare(base, sec).to_json() << "\n";
  return 0;
}

// --- manifest ---------------------------------------------------------------

int manifest_measure(const std::string& manifest, const std::string& root) {
  fs::path mp(manifest);
  Manifest m = parse_manifest(read_text(mp));
  fs::path r = root.empty() ? mp.parent_path() / "software" : fs::path(root);
  std::cout << compute_measurement(m, FileTree::from_directory(r)).hex()
            << "\n";
  return 0;
}

// --- demo -------------------------------------------------------------------

constexpr std::string_view kDemoManifest =
    "enclave_size = 64M\n"
    "thread_count = 4\n"
    "entrypoint = /app/server\n"
    "trusted_file = /app/server\n"
    "trusted_file = /app/libllm.so\n"
    "trusted_file = /etc/service.conf\n"
    "allowed_file = /models/model.fmte\n"
    "key_provider = provider://model-owner\n"
    "attestation_mode = remote\n";

int demo_e2e(std::uint64_t seed, std::uint32_t max_new,
             const std::string& prompt_text) {
  auto t0 = std::chrono::steady_clock::now();
  std::shared_ptr<net::Transport> transport;
  std::string verifier_addr, csp_addr;
  if (g.transport == "tcp") {
    transport = std::make_shared<net::TcpTransport>();
    verifier_addr = csp_addr = "127.0.0.1:0";
  } else {
    transport = net::SimNetwork::create();
    verifier_addr = "sim://verifier";
    csp_addr = "sim://csp";
  }
  std::cout << "transport: " << (g.transport == "tcp" ? "tcp" : "inproc")
            << "\n";

  // Model provider's side: software, model, key and expectations.
  Manifest m = parse_manifest(kDemoManifest);
  FileTree software;
  software.put("/app/server", std::string_view("fmtee inference server 1.0\n"
                                               "entry: serve_inference\n"));
  software.put("/app/libllm.so",
               std::string_view("fmtee toy language model runtime 1.0\n"));
  software.put("/etc/service.conf", std::string_view("max_new_tokens = 64\n"));
  ModelWeights weights = ModelWeights::generate(seed, 256, 64, 8);
  ProviderConfig cfg;
  cfg.model_key = crypto::random_value<crypto::AeadKey>();
  cfg.key_id = crypto::random_value<KeyId>();
  cfg.package_path = "/models/model.fmte";
  EncryptedModelPackage pkg = pack_model(weights, cfg.model_key, cfg.key_id);
  software.put(cfg.package_path, pkg.serialize());
  cfg.expected_measurement = compute_measurement(m, software);
  cfg.expected_model_digest = pkg.model_digest;
  cfg.request.manifest_text = std::string(kDemoManifest);
  cfg.request.files = software;

  // CSP and verifier.
  auto platform = PlatformRoot::create(TeeType::kApplication);
  ReferencePolicy policy;
  policy.accepted_measurements.insert(cfg.expected_measurement);
  policy.accepted_tee_types.insert(TeeType::kApplication);
  policy.trusted_roots.insert({platform->platform_id(),
                               platform->root_public_key()});
  auto verifier = std::make_shared<const Verifier>(
      policy, crypto::SigningKeyPair::generate());
  VerifierService vs(verifier, *transport, verifier_addr);
  CspHost csp(*transport, csp_addr, {platform});
  cfg.verifier_address = vs.address();
  cfg.verifier_public_key = verifier->public_key();
  std::cout << "verifier at " << vs.address() << ", CSP at " << csp.address()
            << "\n";

  ServiceDescriptor d =
      provider_deploy(cfg, *transport, csp.address(), stdout_steps());

  // End user.
  TokenSequence prompt = parse_tokens(prompt_text);
  UserResult r;
  try {
    r = user_prompt(d, prompt, max_new, *transport);
  } catch (const AttestationError& e) {
    std::cout << step_line(8, std::string("attestation rejected: ") + e.what(),
                           false)
              << std::endl;
    throw;
  }
  std::cout << step_line(8, "user verified the service quote (verifier pass, "
                            "measurement " +
                                r.measurement.hex().substr(0, 16) +
                                "... as pinned in the descriptor)",
                         true)
            << std::endl;
  std::cout << step_line(9, "prompt " + render_tokens(prompt) +
                                " answered over the attested channel: " +
                                render_tokens(r.completion),
                         true)
            << std::endl;

  // The same generation run directly inside a fresh local enclave.
  EnclaveContext local = launch_enclave(platform, m, software);
  ModelSlot slot(local);
  slot.provision_key(cfg.key_id, cfg.model_key);
  slot.load(local->read_allowed_file(local.token, cfg.package_path),
            cfg.key_id);
  GenerationConfig gc{1, 1, max_new, static_cast<std::uint32_t>(prompt.size())};
  TokenSequence direct = generate(slot.weights(), {prompt}, gc).completions[0];
  bool match = direct == r.completion;
  std::cout << "[check] " << (match ? "PASS" : "FAIL")
            << " completion matches direct in-enclave generation ("
            << direct.size() << " tokens)\n";
  csp.stop();
  vs.stop();
  double secs = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  std::cout << "elapsed_seconds = " << secs << "\n";
  return match ? 0 : 3;
}

int report_error(const Error& e) {
  if (const auto* abort = dynamic_cast<const StepAbort*>(&e)) {
    std::cerr << "fmtee: ABORT_AT_STEP(" << abort->step() << ", "
              << error_code_name(abort->reason()) << "): " << e.detail()
              << "\n";
    return exit_code_for(abort->reason());
  }
  std::cerr << "fmtee: " << e.what() << "\n";
  return exit_code_for(e.code());
}

}  // namespace
}  // namespace fmtee

int main(int argc, char** argv) {
  using namespace fmtee;
  CLI::App app{"fmtee: confidential model deployment on a simulated TEE"};
  app.require_subcommand(1);
  app.add_option("--transport", g.transport,
                 "tcp (default for services and clients) or inproc "
                 "(default for demo)")
      ->check(CLI::IsMember({"tcp", "inproc"}));
  app.add_option("--data-dir", g.data_dir,
                 "where outputs are written (env FMTEE_DATA_DIR, default "
                 "./fmtee-data)");
  app.add_flag("-v,--verbose", g.verbose, "log progress to stderr");

  std::function<int()> run;

  // verifier
  auto* verifier = app.add_subcommand("verifier", "attestation verifier");
  verifier->require_subcommand(1);
  std::string key_out = "verifier.key";
  auto* vkeygen = verifier->add_subcommand("keygen", "create a signing key");
  vkeygen->add_option("--out", key_out, "key file (in the data directory)");
  vkeygen->callback([&] { run = [&] { return verifier_keygen(key_out); }; });
  std::string v_listen = "127.0.0.1:7100", v_policy, v_key;
  auto* vserve = verifier->add_subcommand("serve", "run the verifier service");
  vserve->add_option("--listen", v_listen, "host:port");
  vserve->add_option("--policy", v_policy, "reference policy file")
      ->required();
  vserve->add_option("--key", v_key,
                     "signing key file (default <data-dir>/verifier.key)");
  vserve->callback([&] {
    run = [&] { return verifier_serve(v_listen, v_policy, v_key); };
  });

  // csp
  auto* csp = app.add_subcommand("csp", "cloud service provider");
  csp->require_subcommand(1);
  CspFlags cf;
  auto* chost = csp->add_subcommand("host", "run the CSP host");
  chost->add_option("--listen", cf.listen, "host:port");
  chost->add_option("--swap-software", cf.swap_software,
                    "misbehave: modify this file before launch");
  chost->add_option("--swap-model", cf.swap_model,
                    "misbehave: serve this package instead of the provider's");
  chost->add_option("--tamper-package-bit", cf.tamper_package_bit,
                    "misbehave: flip this bit of the model package");
  chost->add_option("--package-path", cf.package_path,
                    "package path inside deployments");
  chost->callback([&] { run = [&] { return csp_host(cf); }; });

  // provider
  auto* provider = app.add_subcommand("provider", "model provider");
  provider->require_subcommand(1);
  PackFlags pf;
  auto* ppack = provider->add_subcommand("pack", "build an encrypted model");
  ppack->add_option("--seed", pf.seed, "model seed");
  ppack->add_option("--vocab", pf.vocab, "vocabulary size");
  ppack->add_option("--embed", pf.embed, "feature buckets per position");
  ppack->add_option("--window", pf.window, "context window");
  ppack->add_option("--out", pf.out, "package file (in the data directory)");
  ppack->add_option("--key,--key-file", pf.key, "existing model key file");
  ppack->add_option("--key-out", pf.key_out,
                    "new key file (in the data directory)");
  ppack->callback([&] { run = [&] { return provider_pack(pf); }; });
  std::string vm_package, vm_key, vm_expected;
  auto* pverify =
      provider->add_subcommand("verify-model", "decrypt and check a package");
  pverify->add_option("--package", vm_package, "package file")->required();
  pverify->add_option("--key", vm_key, "model key file")->required();
  pverify->add_option("--expected-digest", vm_expected, "hex model digest");
  pverify->callback([&] {
    run = [&] { return provider_verify_model(vm_package, vm_key, vm_expected); };
  });
  std::string pd_config, pd_out = "descriptor.conf";
  auto* pdeploy = provider->add_subcommand("deploy", "run deployment steps 1-7");
  pdeploy->add_option("--config", pd_config, "provider config file")
      ->required();
  pdeploy->add_option("--out", pd_out, "descriptor file (in the data directory)");
  pdeploy->callback(
      [&] { run = [&] { return provider_deploy_cmd(pd_config, pd_out); }; });

  // user
  auto* user = app.add_subcommand("user", "end user");
  user->require_subcommand(1);
  std::string u_desc, u_prompt, u_prompt_file;
  std::uint32_t u_max = 16;
  auto* uprompt = user->add_subcommand("prompt", "attested prompt (steps 8-9)");
  uprompt->add_option("--descriptor", u_desc, "service descriptor")->required();
  auto* up1 = uprompt->add_option("--prompt", u_prompt, "comma separated tokens");
  auto* up2 = uprompt->add_option("--prompt-file", u_prompt_file,
                                  "file with comma separated tokens");
  up1->excludes(up2);
  uprompt->add_option("--max-new-tokens", u_max, "tokens to generate");
  uprompt->callback([&] {
    if (u_prompt.empty() && u_prompt_file.empty()) {
      throw CLI::RequiredError("--prompt or --prompt-file");
    }
    run = [&] {
      return user_prompt_cmd(u_desc, u_prompt, u_prompt_file, u_max);
    };
  });

  // rag
  auto* rag = app.add_subcommand("rag", "retrieval service");
  rag->require_subcommand(1);
  std::string rd_config, rd_out = "rag-descriptor.conf";
  auto* rdeploy = rag->add_subcommand("deploy", "deploy a document index");
  rdeploy->add_option("--config", rd_config, "rag config file")->required();
  rdeploy->add_option("--out", rd_out, "descriptor file (in the data directory)");
  rdeploy->callback(
      [&] { run = [&] { return rag_deploy_cmd(rd_config, rd_out); }; });

  // attack
  auto* attack = app.add_subcommand("attack", "adversary harness (in-process)");
  attack->require_subcommand(1);
  std::string a_scenario;
  bool a_all = false;
  AttackScenario a_params;
  auto* arun = attack->add_subcommand("run", "run attack scenarios");
  arun->add_option("--scenario", a_scenario,
                   "EAVESDROP_NETWORK, EAVESDROP_MEMORY, TAMPER_MEMORY, "
                   "TAMPER_PACKAGE, CSP_SWAP_MODEL or CSP_SWAP_SOFTWARE");
  arun->add_flag("--all", a_all, "every scenario with default parameters");
  arun->add_option("--page", a_params.page, "TAMPER_MEMORY page");
  arun->add_option("--bit", a_params.bit, "TAMPER_MEMORY bit within the page");
  arun->add_option("--package-bit", a_params.package_bit,
                   "TAMPER_PACKAGE bit");
  arun->add_option("--swap-seed", a_params.swap_seed, "CSP_SWAP_MODEL seed");
  arun->add_option("--software-byte", a_params.software_byte,
                   "CSP_SWAP_SOFTWARE byte");
  arun->callback([&] {
    run = [&] { return attack_run(a_scenario, a_all, a_params); };
  });

  // bench
  auto* bench = app.add_subcommand("bench", "token timing benchmarks");
  bench->require_subcommand(1);
  BenchFlags bf;
  auto* brun = bench->add_subcommand("run", "measure a target");
  brun->add_option("--mode", bf.mode, "latency or throughput")
      ->check(CLI::IsMember({"latency", "throughput"}));
  brun->add_option("--target", bf.target, "bare or enclave")
      ->check(CLI::IsMember({"bare", "enclave"}));
  brun->add_option("--min-tokens", bf.min_tokens, "minimum timed steps");
  brun->add_option("--out", bf.out, "report file (in the data directory)")
      ->required();
  brun->add_option("--baseline-out", bf.baseline_out,
                   "with --target enclave: also measure bare, interleaved "
                   "step by step, into this report");
  brun->add_option("--enclave-tax", bf.enclave_tax,
                   "synthetic enclave slowdown, fraction of compute time");
  brun->callback([&] { run = [&] { return bench_run(bf); }; });
  std::string bc_a, bc_b;
  auto* bcompare = bench->add_subcommand("compare", "overhead of b over a");
  bcompare->add_option("baseline", bc_a, "baseline report")->required();
  bcompare->add_option("secured", bc_b, "secured report")->required();
  bcompare->callback([&] { run = [&] { return bench_compare(bc_a, bc_b); }; });

  // manifest
  auto* manifest = app.add_subcommand("manifest", "manifests");
  manifest->require_subcommand(1);
  std::string mm_manifest, mm_root;
  auto* mmeasure = manifest->add_subcommand("measure", "print the measurement");
  mmeasure->add_option("--manifest", mm_manifest, "manifest file")->required();
  mmeasure->add_option("--root", mm_root,
                       "software directory (default: software/ next to the "
                       "manifest)");
  mmeasure->callback(
      [&] { run = [&] { return manifest_measure(mm_manifest, mm_root); }; });

  // demo
  auto* demo = app.add_subcommand("demo", "demonstrations");
  demo->require_subcommand(1);
  std::uint64_t d_seed = 42;
  std::uint32_t d_max = 16;
  std::string d_prompt = "11,22,33,44,55,66,77,88";
  auto* de2e = demo->add_subcommand("e2e", "deployment steps 1-9 in one process");
  de2e->add_option("--seed", d_seed, "model seed");
  de2e->add_option("--max-new-tokens", d_max, "tokens to generate");
  de2e->add_option("--prompt", d_prompt, "comma separated tokens");
  de2e->callback([&] { run = [&] { return demo_e2e(d_seed, d_max, d_prompt); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  try {
    return run();
  } catch (const Error& e) {
    return report_error(e);
  } catch (const std::exception& e) {
    std::cerr << "fmtee: " << e.what() << "\n";
    return 1;
  }
}
