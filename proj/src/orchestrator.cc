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

#include "fmtee/orchestrator.h"

#include <sstream>

#include "fmtee/defenses.h"
#include "fmtee/kv.h"

namespace fmtee {
namespace {

constexpr std::uint64_t kMaxHostRead = 16u << 20;
constexpr std::uint32_t kMaxNewTokens = 4096;
constexpr std::uint32_t kMaxTokens = 1u << 20;

Bytes status_ok(ByteView body) {
  Bytes out;
  out.reserve(body.size() + 1);
  out.push_back(0);
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

Bytes status_error(const Error& e) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(e.code())).lp(e.detail());
  return w.take();
}

void note(const StepLog& log, int step, const std::string& what, bool ok) {
  if (log) log(step, what, ok);
}

std::string short_hex(const crypto::Digest256& d) {
  return d.hex().substr(0, 16);
}

}  // namespace

std::string_view service_kind_name(ServiceKind kind) {
  return kind == ServiceKind::kRag ? "rag" : "inference";
}

ServiceKind parse_service_kind(std::string_view text) {
  if (text == "inference") return ServiceKind::kInference;
  if (text == "rag") return ServiceKind::kRag;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown service kind '" + std::string(text) + "'");
}

// --- wire helpers -----------------------------------------------------------

Bytes encode_tokens(const TokenSequence& tokens) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(tokens.size()));
  for (Token t : tokens) w.u32(t);
  return w.take();
}

TokenSequence decode_tokens(ByteReader& r) {
  std::uint32_t n = r.u32();
  if (n > kMaxTokens || std::size_t{n} * 4 > r.remaining()) {
    throw Error(ErrorCode::kProtocolError, "token count exceeds message");
  }
  TokenSequence out(n);
  for (auto& t : out) t = r.u32();
  return out;
}

Bytes encode_prompt_args(const TokenSequence& prompt,
                         std::uint32_t max_new_tokens) {
  ByteWriter w;
  w.u32(max_new_tokens).raw(encode_tokens(prompt));
  return w.take();
}

Bytes DeploymentRequest::serialize() const {
  ByteWriter w;
  w.lp(manifest_text)
      .u8(static_cast<std::uint8_t>(tee_type))
      .u8(static_cast<std::uint8_t>(kind))
      .u32(static_cast<std::uint32_t>(files.files().size()));
  for (const auto& [path, content] : files.files()) {
    w.lp(path).lp(content);
  }
  return w.take();
}

DeploymentRequest DeploymentRequest::parse(ByteView bytes) {
  ByteReader r(bytes, ErrorCode::kProtocolError);
  DeploymentRequest req;
  req.manifest_text = r.lp_string();
  std::uint8_t tee = r.u8();
  if (tee != 1 && tee != 2) {
    throw Error(ErrorCode::kProtocolError, "unknown tee type");
  }
  req.tee_type = static_cast<TeeType>(tee);
  std::uint8_t kind = r.u8();
  if (kind != 1 && kind != 2) {
    throw Error(ErrorCode::kProtocolError, "unknown service kind");
  }
  req.kind = static_cast<ServiceKind>(kind);
  std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string path = r.lp_string();
    Bytes content = r.lp();
    req.files.put(std::move(path), std::move(content));
  }
  r.expect_end();
  return req;
}

Bytes DeploymentHandle::serialize() const {
  ByteWriter w;
  w.u32(instance_id).lp(address).fixed(platform_id);
  return w.take();
}

DeploymentHandle DeploymentHandle::parse(ByteView bytes) {
  ByteReader r(bytes, ErrorCode::kProtocolError);
  DeploymentHandle h;
  h.instance_id = r.u32();
  h.address = r.lp_string();
  h.platform_id = r.fixed<PlatformId>();
  r.expect_end();
  return h;
}

crypto::Digest256 rag_index_digest(const RagIndex& index) {
  crypto::Hasher h;
  h.update(as_bytes("fmtee-rag-index-v1"));
  for (const auto& [key, doc] : index) {
    ByteWriter w;
    w.u32(key).raw(encode_tokens(doc));
    h.update(w.bytes());
  }
  return h.finish();
}

// --- EnclaveService ---------------------------------------------------------

EnclaveService::EnclaveService(EnclaveContext ctx, net::Transport& transport)
    : ctx_(std::move(ctx)), transport_(transport) {}

EnclaveService::~EnclaveService() { stop(); }

void EnclaveService::start(const std::string& address) {
  server_ = std::make_unique<net::Server>(
      transport_.listen(address), [this](net::Stream& s) { serve(s); });
}

void EnclaveService::stop() {
  if (server_) server_->stop();
}

const std::string& EnclaveService::address() const {
  static const std::string kNone;
  return server_ ? server_->address() : kNone;
}

void EnclaveService::require_unpublished() const {
  if (published_) {
    throw Error(ErrorCode::kUnsupportedOperation,
                "provisioning is closed once the service is published");
  }
}

void EnclaveService::require_published() const {
  if (!published_) {
    throw Error(ErrorCode::kUnsupportedOperation, "service is not published");
  }
}

void EnclaveService::serve(net::Stream& s) {
  auto send_plain_error = [&](const Error& e) {
    try {
      net::write_frame(s, net::msg::kError,
                       net::encode_error(e.code(), e.detail()));
    } catch (const Error&) {
    }
  };
  std::optional<SecureChannel> ch;
  try {
    ch.emplace(accept_channel(s, ctx_));
  } catch (const Error& e) {
    send_plain_error(e);
    return;
  }
  for (;;) {
    Bytes req;
    try {
      req = ch->recv(s);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kChannelError) send_plain_error(e);
      return;
    }
    Bytes resp;
    {
      std::lock_guard lock(op_mu_);
      try {
        ByteReader r(req, ErrorCode::kProtocolError);
        std::uint8_t code = r.u8();
        resp = status_ok(handle_op(code, r));
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kIntegrityFault ||
            e.code() == ErrorCode::kEnclaveCrashed) {
          // The enclave is gone; the untrusted shim tells the client in the
          // clear and hangs up.
          send_plain_error(e);
          s.close();
          return;
        }
        resp = status_error(e);
      }
    }
    ch->send(s, resp);
  }
}

// --- InferenceService -------------------------------------------------------

InferenceService::InferenceService(EnclaveContext ctx,
                                   net::Transport& transport)
    : EnclaveService(ctx, transport), slot_(ctx) {}

InferenceService::~InferenceService() { stop(); }

TokenSequence InferenceService::with_retrieved_context(
    const TokenSequence& prompt) {
  if (!rag_ || prompt.empty()) return prompt;
  ByteWriter w;
  w.u32(prompt.front());
  Bytes resp = rag_->call(op::kQuery, w.bytes());
  ByteReader r(resp, ErrorCode::kProtocolError);
  if (r.u8() == 0) return prompt;
  TokenSequence out = decode_tokens(r);
  out.insert(out.end(), prompt.begin(), prompt.end());
  return out;
}

Bytes InferenceService::handle_op(std::uint8_t code, ByteReader& r) {
  switch (code) {
    case op::kProvisionKey: {
      require_unpublished();
      KeyId id = r.fixed<KeyId>();
      crypto::AeadKey key = crypto::AeadKey::from(r.raw(crypto::AeadKey::kSize));
      r.expect_end();
      slot_.provision_key(id, key);
      return {};
    }
    case op::kLoadModel: {
      require_unpublished();
      std::string path = r.lp_string();
      KeyId id = r.fixed<KeyId>();
      r.expect_end();
      Bytes package = ctx_->read_allowed_file(ctx_.token, path);
      slot_.load(package, id);
      return slot_.model_digest().to_vector();
    }
    case op::kAttestModel:
      r.expect_end();
      return slot_.attest().serialize();
    case op::kPublish:
      r.expect_end();
      published_ = true;
      return {};
    case op::kPrompt: {
      require_published();
      std::uint32_t max_new = r.u32();
      TokenSequence prompt = decode_tokens(r);
      r.expect_end();
      if (max_new == 0 || max_new > kMaxNewTokens) {
        throw Error(ErrorCode::kInvalidArgument, "max_new_tokens out of range");
      }
      if (prompt.empty()) throw Error(ErrorCode::kEmptyContext);
      TokenSequence context = with_retrieved_context(prompt);
      const ModelWeights& w = slot_.weights();
      GenerationConfig cfg{1, 1, max_new,
                           static_cast<std::uint32_t>(context.size())};
      GenerationOptions opts;
      opts.on_memory_access = [this] { slot_.touch(); };
      GenerationResult result = generate(w, {context}, cfg, opts);
      return encode_tokens(result.completions.front());
    }
    case op::kConfigureRag: {
      require_unpublished();
      std::string address = r.lp_string();
      auto measurement = r.fixed<crypto::Digest256>();
      std::string verifier_address = r.lp_string();
      auto verifier_key = r.fixed<crypto::SigningPublicKey>();
      r.expect_end();
      rag_ = ServiceSession::open(
          transport_, address,
          check_with_verifier(RemoteVerifier(transport_, verifier_address),
                              verifier_key, {measurement}));
      return {};
    }
    case op::kEvalAccuracy: {
      std::string text = r.lp_string(kMaxChannelPlaintext);
      r.expect_end();
      AttestedAccuracy a =
          evaluate_and_attest_accuracy(slot_, parse_dataset(text));
      ByteWriter w;
      w.lp(a.report.serialize()).lp(a.quote.serialize());
      return w.take();
    }
    case op::kBindProvenance: {
      auto dataset = r.fixed<crypto::Digest256>();
      auto model = r.fixed<crypto::Digest256>();
      r.expect_end();
      return bind_training_provenance(ctx_, dataset, model).serialize();
    }
    default:
      throw Error(ErrorCode::kUnsupportedOperation,
                  "inference service has no op " + std::to_string(code));
  }
}

// --- RagService -------------------------------------------------------------

RagService::RagService(EnclaveContext ctx, net::Transport& transport)
    : EnclaveService(std::move(ctx), transport) {}

RagService::~RagService() { stop(); }

Bytes RagService::handle_op(std::uint8_t code, ByteReader& r) {
  switch (code) {
    case op::kPutDocument: {
      require_unpublished();
      Token key = r.u32();
      TokenSequence doc = decode_tokens(r);
      r.expect_end();
      Bytes encoded = encode_tokens(doc);
      Region region = ctx_->allocate(ctx_.token, "rag-doc", encoded.size());
      ctx_->write(ctx_.token, region.offset, encoded);
      documents_[key] = region;
      return {};
    }
    case op::kAttestIndex: {
      r.expect_end();
      RagIndex index;
      for (const auto& [key, region] : documents_) {
        Bytes stored = ctx_->read(ctx_.token, region);
        ByteReader dr(stored);
        index[key] = decode_tokens(dr);
      }
      return ctx_->get_quote(ctx_.token, to_report_data(rag_index_digest(index)))
          .serialize();
    }
    case op::kPublish:
      r.expect_end();
      published_ = true;
      return {};
    case op::kQuery: {
      require_published();
      Token key = r.u32();
      r.expect_end();
      auto it = documents_.find(key);
      ByteWriter w;
      if (it == documents_.end()) {
        w.u8(0);
      } else {
        w.u8(1).raw(ctx_->read(ctx_.token, it->second));
      }
      return w.take();
    }
    default:
      throw Error(ErrorCode::kUnsupportedOperation,
                  "rag service has no op " + std::to_string(code));
  }
}

// --- misbehavior ------------------------------------------------------------

TreeMutator modify_file_byte(std::string path, std::size_t offset) {
  return [path = std::move(path), offset](FileTree& tree) {
    const Bytes* b = tree.find(path);
    if (!b || b->empty()) return;
    Bytes copy = *b;
    copy[offset % copy.size()] ^= 0x01;
    tree.put(path, std::move(copy));
  };
}

TreeMutator replace_file(std::string path, Bytes content) {
  return [path = std::move(path), content = std::move(content)](FileTree& t) {
    t.put(path, content);
  };
}

TreeMutator flip_file_bit(std::string path, std::size_t bit) {
  return [path = std::move(path), bit](FileTree& tree) {
    const Bytes* b = tree.find(path);
    if (!b || b->empty()) return;
    Bytes copy = *b;
    std::size_t i = bit % (copy.size() * 8);
    copy[i / 8] ^= static_cast<std::uint8_t>(0x80 >> (i % 8));
    tree.put(path, std::move(copy));
  };
}

// --- CspHost ----------------------------------------------------------------

CspHost::CspHost(net::Transport& transport, const std::string& address,
                 std::vector<std::shared_ptr<const PlatformRoot>> platforms,
                 TreeMutator misbehavior)
    : transport_(transport),
      platforms_(std::move(platforms)),
      misbehavior_(std::move(misbehavior)) {
  server_ = std::make_unique<net::Server>(
      transport_.listen(address), [this](net::Stream& s) { serve(s); });
}

CspHost::~CspHost() { stop(); }

const std::string& CspHost::address() const { return server_->address(); }

void CspHost::stop() {
  server_->stop();
  std::map<std::uint32_t, std::unique_ptr<Instance>> instances;
  {
    std::lock_guard lock(mu_);
    instances.swap(instances_);
  }
  for (auto& [id, inst] : instances) inst->service->stop();
}

void CspHost::set_misbehavior(TreeMutator misbehavior) {
  std::lock_guard lock(mu_);
  misbehavior_ = std::move(misbehavior);
}

std::size_t CspHost::instance_count() const {
  std::lock_guard lock(mu_);
  return instances_.size();
}

std::optional<std::uint32_t> CspHost::find_instance(
    const std::string& address) const {
  std::lock_guard lock(mu_);
  for (const auto& [id, inst] : instances_) {
    if (inst->service->address() == address) return id;
  }
  return std::nullopt;
}

CspHost::Instance& CspHost::instance(std::uint32_t id) {
  std::lock_guard lock(mu_);
  auto it = instances_.find(id);
  if (it == instances_.end()) {
    throw Error(ErrorCode::kInvalidArgument,
                "no instance " + std::to_string(id));
  }
  return *it->second;
}

DeploymentHandle CspHost::deploy(const DeploymentRequest& req) {
  Manifest m;
  try {
    m = parse_manifest(req.manifest_text);
  } catch (const SyntaxError& e) {
    throw Error(ErrorCode::kValidationFailed,
                "manifest line " + std::to_string(e.line()) + ": " + e.detail());
  } catch (const Error& e) {
    throw Error(ErrorCode::kValidationFailed, "manifest: " + e.detail());
  }
  FileTree tree = req.files;
  TreeMutator mutate;
  {
    std::lock_guard lock(mu_);
    mutate = misbehavior_;
  }
  if (mutate) mutate(tree);
  std::shared_ptr<const PlatformRoot> platform;
  for (const auto& p : platforms_) {
    if (p->tee_type() == req.tee_type) platform = p;
  }
  if (!platform) {
    throw Error(ErrorCode::kInvalidArgument,
                "no " + std::string(tee_type_name(req.tee_type)) +
                    " platform at this CSP");
  }
  auto inst = std::make_unique<Instance>();
  inst->storage = std::make_shared<HostStorage>(std::move(tree));
  EnclaveContext ctx = Enclave::launch(platform, m, inst->storage);
  inst->enclave = ctx.enclave;
  if (req.kind == ServiceKind::kRag) {
    inst->service = std::make_unique<RagService>(std::move(ctx), transport_);
  } else {
    inst->service =
        std::make_unique<InferenceService>(std::move(ctx), transport_);
  }
  inst->service->start(
      transport_.ephemeral_address(service_kind_name(req.kind)));
  DeploymentHandle h;
  h.address = inst->service->address();
  h.platform_id = platform->platform_id();
  std::lock_guard lock(mu_);
  h.instance_id = next_id_++;
  instances_[h.instance_id] = std::move(inst);
  return h;
}

Bytes CspHost::handle(const net::Frame& f) {
  ByteReader r(f.payload, ErrorCode::kProtocolError);
  switch (f.type) {
    case net::msg::kDeployReq:
      return deploy(DeploymentRequest::parse(f.payload)).serialize();
    case net::msg::kHostRead: {
      std::uint32_t id = r.u32();
      std::uint64_t offset = r.u64();
      std::uint64_t len = std::min(r.u64(), kMaxHostRead);
      r.expect_end();
      return instance(id).enclave->read_as_host(offset, len);
    }
    case net::msg::kHostWrite: {
      std::uint32_t id = r.u32();
      std::uint64_t offset = r.u64();
      Bytes data = r.lp();
      r.expect_end();
      instance(id).enclave->write_as_host(offset, data);
      return {};
    }
    case net::msg::kHostRegions: {
      std::uint32_t id = r.u32();
      r.expect_end();
      std::vector<Region> regions = instance(id).enclave->regions();
      ByteWriter w;
      w.u32(static_cast<std::uint32_t>(regions.size()));
      for (const Region& reg : regions) {
        w.lp(reg.name).u64(reg.offset).u64(reg.length);
      }
      return w.take();
    }
    case net::msg::kHostFilePut: {
      std::uint32_t id = r.u32();
      std::string path = r.lp_string();
      Bytes content = r.lp();
      r.expect_end();
      instance(id).storage->put(path, std::move(content));
      return {};
    }
    default:
      throw Error(ErrorCode::kProtocolError,
                  "unknown CSP request " + std::to_string(f.type));
  }
}

void CspHost::serve(net::Stream& s) {
  for (;;) {
    std::optional<net::Frame> f;
    try {
      f = net::read_frame(s);
    } catch (const Error& e) {
      net::write_frame(s, net::msg::kError,
                       net::encode_error(e.code(), e.detail()));
      return;
    }
    if (!f) return;
    try {
      Bytes body = handle(*f);
      net::write_frame(s,
                       f->type == net::msg::kDeployReq ? net::msg::kDeployResp
                                                       : net::msg::kHostResp,
                       body);
    } catch (const Error& e) {
      net::write_frame(s, net::msg::kError,
                       net::encode_error(e.code(), e.detail()));
    }
  }
}

// --- CspClient --------------------------------------------------------------

net::Frame CspClient::call(std::uint8_t type, ByteView payload,
                           std::uint8_t expect) const {
  auto s = transport_->connect(address_);
  net::write_frame(*s, type, payload);
  std::optional<net::Frame> f = net::read_frame(*s);
  s->close();
  if (!f) throw Error(ErrorCode::kProtocolError, "CSP closed connection");
  if (f->type == net::msg::kError) throw net::decode_error(f->payload);
  if (f->type != expect) {
    throw Error(ErrorCode::kProtocolError, "unexpected CSP reply type");
  }
  return std::move(*f);
}

DeploymentHandle CspClient::deploy(const DeploymentRequest& req) const {
  return DeploymentHandle::parse(
      call(net::msg::kDeployReq, req.serialize(), net::msg::kDeployResp)
          .payload);
}

Bytes CspClient::host_read(std::uint32_t instance, std::uint64_t offset,
                           std::uint64_t len) const {
  ByteWriter w;
  w.u32(instance).u64(offset).u64(len);
  return call(net::msg::kHostRead, w.bytes(), net::msg::kHostResp).payload;
}

void CspClient::host_write(std::uint32_t instance, std::uint64_t offset,
                           ByteView data) const {
  ByteWriter w;
  w.u32(instance).u64(offset).lp(data);
  call(net::msg::kHostWrite, w.bytes(), net::msg::kHostResp);
}

std::vector<Region> CspClient::host_regions(std::uint32_t instance) const {
  ByteWriter w;
  w.u32(instance);
  net::Frame f = call(net::msg::kHostRegions, w.bytes(), net::msg::kHostResp);
  ByteReader r(f.payload, ErrorCode::kProtocolError);
  std::vector<Region> out(r.u32());
  for (Region& reg : out) {
    reg.name = r.lp_string();
    reg.offset = r.u64();
    reg.length = r.u64();
  }
  r.expect_end();
  return out;
}

void CspClient::host_file_put(std::uint32_t instance, const std::string& path,
                              ByteView content) const {
  ByteWriter w;
  w.u32(instance).lp(path).lp(content);
  call(net::msg::kHostFilePut, w.bytes(), net::msg::kHostResp);
}

// --- ServiceSession ---------------------------------------------------------

std::unique_ptr<ServiceSession> ServiceSession::open(
    net::Transport& transport, const std::string& address,
    const AttestationCheck& check, AttestationOutcome* outcome) {
  std::unique_ptr<net::Stream> s = transport.connect(address);
  SecureChannel ch = connect_channel(*s, check, outcome);
  return std::unique_ptr<ServiceSession>(
      new ServiceSession(std::move(s), std::move(ch)));
}

Bytes ServiceSession::call(std::uint8_t code, ByteView args) {
  Bytes req;
  req.reserve(args.size() + 1);
  req.push_back(code);
  req.insert(req.end(), args.begin(), args.end());
  channel_.send(*stream_, req);
  Bytes resp = channel_.recv(*stream_);
  ByteReader r(resp, ErrorCode::kProtocolError);
  auto status = r.u8();
  if (status != 0) {
    throw Error(static_cast<ErrorCode>(status), r.lp_string());
  }
  ByteView rest = r.rest();
  return Bytes(rest.begin(), rest.end());
}

bool ServiceSession::peer_closed() {
  try {
    for (;;) {
      std::optional<net::Frame> f = net::read_frame(*stream_);
      if (!f) return true;
    }
  } catch (const Error&) {
    return true;
  }
}

// --- ServiceDescriptor ------------------------------------------------------

std::string ServiceDescriptor::render() const {
  std::ostringstream out;
  out << "address = " << address << "\n"
      << "measurement = " << measurement.hex() << "\n"
      << "model_digest = " << model_digest.hex() << "\n"
      << "tee_type = " << tee_type_name(tee_type) << "\n"
      << "platform_id = " << platform_id.hex() << "\n"
      << "verifier_address = " << verifier_address << "\n"
      << "verifier_public_key = " << verifier_public_key.hex() << "\n";
  return out.str();
}

ServiceDescriptor ServiceDescriptor::parse(std::string_view text) {
  KvDocument doc(text);
  ServiceDescriptor d;
  try {
    d.address = doc.require("address");
    d.measurement = crypto::Digest256::from_hex(doc.require("measurement"));
    d.model_digest = crypto::Digest256::from_hex(doc.require("model_digest"));
    d.tee_type = parse_tee_type(doc.require("tee_type"));
    d.platform_id = PlatformId::from_hex(doc.require("platform_id"));
    d.verifier_address = doc.require("verifier_address");
    d.verifier_public_key =
        crypto::SigningPublicKey::from_hex(doc.require("verifier_public_key"));
  } catch (const SyntaxError&) {
    throw;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kMalformed ||
        e.code() == ErrorCode::kInvalidArgument ||
        e.code() == ErrorCode::kInvariantViolation) {
      throw Error(ErrorCode::kMalformed, "descriptor: " + e.detail());
    }
    throw;
  }
  doc.reject_unknown();
  return d;
}

// --- provider flow ----------------------------------------------------------

namespace {

struct AttestedInstance {
  DeploymentHandle handle;
  std::unique_ptr<ServiceSession> session;
  AttestationQuote quote;
};

// Steps 1-5, shared by inference and RAG deployments.
AttestedInstance attest_instance(const DeploymentRequest& req,
                                 const crypto::Digest256& expected_measurement,
                                 const std::string& verifier_address,
                                 const crypto::SigningPublicKey& verifier_key,
                                 net::Transport& transport,
                                 const std::string& csp_address,
                                 const StepLog& log) {
  std::string kind(service_kind_name(req.kind));
  AttestedInstance out;

  std::unique_ptr<net::Stream> csp;
  try {
    csp = transport.connect(csp_address);
    net::write_frame(*csp, net::msg::kDeployReq, req.serialize());
  } catch (const Error& e) {
    throw StepAbort(1, e.code(), e.detail());
  }
  note(log, 1, "requested " + kind + " TEE instance (" +
                   std::string(tee_type_name(req.tee_type)) + ") from CSP",
       true);

  try {
    std::optional<net::Frame> f = net::read_frame(*csp);
    csp->close();
    if (!f) throw Error(ErrorCode::kProtocolError, "CSP closed connection");
    if (f->type == net::msg::kError) throw net::decode_error(f->payload);
    if (f->type != net::msg::kDeployResp) {
      throw Error(ErrorCode::kProtocolError, "unexpected CSP reply");
    }
    out.handle = DeploymentHandle::parse(f->payload);
  } catch (const Error& e) {
    throw StepAbort(2, e.code(), e.detail());
  }
  note(log, 2, "CSP allocated instance at " + out.handle.address, true);

  RemoteVerifier verifier(transport, verifier_address);
  AttestationCheck check = [&](const AttestationQuote& q, ByteView qb,
                               const std::optional<Verdict>&) {
    note(log, 3, "attestation quote binds the channel key", true);
    Verdict v;
    try {
      v = verifier.verify(qb);
      accept_verdict(v, q, qb, verifier_key, {q.measurement});
    } catch (const AttestationError& e) {
      throw StepAbort(4, ErrorCode::kAttestationFailed,
                      describe_reasons(e.reasons()) + ": " + e.detail());
    } catch (const Error& e) {
      throw StepAbort(4, e.code(), e.detail());
    }
    note(log, 4, "verifier confirms a genuine TEE (reasons: " +
                     describe_reasons(v.reasons) + ")",
         true);
    if (active_defenses().measurement_check &&
        q.measurement != expected_measurement) {
      throw StepAbort(5, ErrorCode::kMeasurementMismatch,
                      "got " + q.measurement.hex() + ", expected " +
                          expected_measurement.hex());
    }
    note(log, 5, "measurement " + short_hex(q.measurement) +
                     "... matches expected value",
         true);
    out.quote = q;
    return AttestationOutcome{v};
  };
  try {
    out.session =
        ServiceSession::open(transport, out.handle.address, check);
  } catch (const StepAbort&) {
    throw;
  } catch (const Error& e) {
    throw StepAbort(3, e.code(), e.detail());
  }
  return out;
}

// Checks a later quote from the same session: same enclave, verifier
// accepts it. Throws StepAbort(step).
void check_followup_quote(const AttestationQuote& q, ByteView qb,
                          const AttestationQuote& first,
                          const std::string& verifier_address,
                          const crypto::SigningPublicKey& verifier_key,
                          net::Transport& transport, int step) {
  if (q.measurement != first.measurement ||
      q.platform_id != first.platform_id) {
    throw StepAbort(step, ErrorCode::kAttestationFailed,
                    "quote comes from a different enclave");
  }
  try {
    Verdict v = RemoteVerifier(transport, verifier_address).verify(qb);
    accept_verdict(v, q, qb, verifier_key, {q.measurement});
  } catch (const AttestationError& e) {
    throw StepAbort(step, ErrorCode::kAttestationFailed,
                    describe_reasons(e.reasons()) + ": " + e.detail());
  } catch (const Error& e) {
    throw StepAbort(step, e.code(), e.detail());
  }
}

ServiceDescriptor make_descriptor(const AttestedInstance& inst,
                                  const crypto::Digest256& content_digest,
                                  TeeType tee, const std::string& verifier,
                                  const crypto::SigningPublicKey& vkey) {
  ServiceDescriptor d;
  d.address = inst.handle.address;
  d.measurement = inst.quote.measurement;
  d.model_digest = content_digest;
  d.tee_type = tee;
  d.platform_id = inst.quote.platform_id;
  d.verifier_address = verifier;
  d.verifier_public_key = vkey;
  return d;
}

template <typename F>
auto at_step(int step, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StepAbort&) {
    throw;
  } catch (const Error& e) {
    throw StepAbort(step, e.code(), e.detail());
  }
}

template <typename F>
auto logged(const StepLog& log, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StepAbort& e) {
    note(log, e.step(),
         "ABORT_AT_STEP(" + std::to_string(e.step()) + ", " +
             std::string(error_code_name(e.reason())) + ") " + e.detail(),
         false);
    throw;
  }
}

ServiceDescriptor deploy_inference(const ProviderConfig& cfg,
                                   net::Transport& transport,
                                   const std::string& csp_address,
                                   const StepLog& log) {
  const std::optional<ServiceDescriptor>& rag = cfg.rag;
  AttestedInstance inst = attest_instance(
      cfg.request, cfg.expected_measurement, cfg.verifier_address,
      cfg.verifier_public_key, transport, csp_address, log);
  ServiceSession& s = *inst.session;

  at_step(6, [&] {
    ByteWriter w;
    w.fixed(cfg.key_id).raw(cfg.model_key.view());
    s.call(op::kProvisionKey, w.bytes());
  });
  note(log, 6, "model key provisioned over the attested channel", true);
  at_step(6, [&] {
    ByteWriter w;
    w.lp(cfg.package_path).fixed(cfg.key_id);
    s.call(op::kLoadModel, w.bytes());
  });
  note(log, 6, "encrypted model " + cfg.package_path + " loaded in enclave",
       true);

  Bytes qb = at_step(7, [&] { return s.call(op::kAttestModel, {}); });
  AttestationQuote mq =
      at_step(7, [&] { return AttestationQuote::parse(qb); });
  check_followup_quote(mq, qb, inst.quote, cfg.verifier_address,
                       cfg.verifier_public_key, transport, 7);
  auto attested = crypto::Digest256::from(mq.report_data.view());
  if (active_defenses().model_digest_check &&
      attested != cfg.expected_model_digest) {
    throw StepAbort(7, ErrorCode::kModelDigestMismatch,
                    "enclave reports model " + attested.hex() +
                        ", expected " + cfg.expected_model_digest.hex());
  }
  note(log, 7, "attested model digest " + short_hex(attested) +
                   "... matches expected value",
       true);
  if (rag) {
    at_step(7, [&] {
      ByteWriter w;
      w.lp(rag->address)
          .fixed(rag->measurement)
          .lp(rag->verifier_address)
          .fixed(rag->verifier_public_key);
      s.call(op::kConfigureRag, w.bytes());
    });
    note(log, 7, "inference enclave attested the RAG service at " +
                     rag->address,
         true);
  }
  at_step(7, [&] { s.call(op::kPublish, {}); });
  note(log, 7, "service published at " + inst.handle.address, true);
  s.close();
  return make_descriptor(inst, attested, cfg.request.tee_type,
                         cfg.verifier_address, cfg.verifier_public_key);
}

}  // namespace

ServiceDescriptor provider_deploy(const ProviderConfig& cfg,
                                  net::Transport& transport,
                                  const std::string& csp_address,
                                  const StepLog& log) {
  return logged(log, [&] {
    return deploy_inference(cfg, transport, csp_address, log);
  });
}

ServiceDescriptor deploy_rag_service(const RagConfig& cfg,
                                     net::Transport& transport,
                                     const std::string& csp_address,
                                     const StepLog& log) {
  return logged(log, [&] {
    AttestedInstance inst = attest_instance(
        cfg.request, cfg.expected_measurement, cfg.verifier_address,
        cfg.verifier_public_key, transport, csp_address, log);
    ServiceSession& s = *inst.session;
    at_step(6, [&] {
      for (const auto& [key, doc] : cfg.documents) {
        ByteWriter w;
        w.u32(key).raw(encode_tokens(doc));
        s.call(op::kPutDocument, w.bytes());
      }
    });
    note(log, 6,
         std::to_string(cfg.documents.size()) +
             " documents provisioned over the attested channel",
         true);
    Bytes qb = at_step(7, [&] { return s.call(op::kAttestIndex, {}); });
    AttestationQuote q = at_step(7, [&] { return AttestationQuote::parse(qb); });
    check_followup_quote(q, qb, inst.quote, cfg.verifier_address,
                         cfg.verifier_public_key, transport, 7);
    crypto::Digest256 expected = rag_index_digest(cfg.documents);
    auto attested = crypto::Digest256::from(q.report_data.view());
    if (attested != expected) {
      throw StepAbort(7, ErrorCode::kDigestMismatch,
                      "index digest " + attested.hex() + ", expected " +
                          expected.hex());
    }
    note(log, 7, "attested index digest " + short_hex(attested) +
                     "... matches expected value",
         true);
    at_step(7, [&] { s.call(op::kPublish, {}); });
    note(log, 7, "RAG service published at " + inst.handle.address, true);
    s.close();
    return make_descriptor(inst, attested, cfg.request.tee_type,
                           cfg.verifier_address, cfg.verifier_public_key);
  });
}

RagChain deploy_rag_chain(const ProviderConfig& inference,
                          const RagConfig& rag, net::Transport& transport,
                          const std::string& csp_address, const StepLog& log) {
  RagChain chain;
  chain.rag = deploy_rag_service(rag, transport, csp_address, log);
  ProviderConfig cfg = inference;
  cfg.rag = chain.rag;
  chain.inference = logged(log, [&] {
    return deploy_inference(cfg, transport, csp_address, log);
  });
  return chain;
}

// --- user flow --------------------------------------------------------------

AttestationCheck descriptor_check(const ServiceDescriptor& d,
                                  net::Transport& transport) {
  AttestationCheck inner =
      check_with_verifier(RemoteVerifier(transport, d.verifier_address),
                          d.verifier_public_key, {d.measurement});
  return [inner, d](const AttestationQuote& q, ByteView qb,
                    const std::optional<Verdict>& attached) {
    AttestationOutcome out = inner(q, qb, attached);
    if (q.tee_type != static_cast<std::uint8_t>(d.tee_type)) {
      throw AttestationError({VerdictReason::kTeeTypeRejected},
                             "descriptor pins a different TEE type");
    }
    if (q.platform_id != d.platform_id) {
      throw AttestationError({VerdictReason::kUnknownPlatform},
                             "descriptor pins a different platform");
    }
    return out;
  };
}

UserResult user_prompt(const ServiceDescriptor& descriptor,
                       const TokenSequence& prompt,
                       std::uint32_t max_new_tokens,
                       net::Transport& transport) {
  AttestationOutcome outcome;
  auto session = ServiceSession::open(transport, descriptor.address,
                                      descriptor_check(descriptor, transport),
                                      &outcome);
  Bytes out = session->call(op::kPrompt,
                            encode_prompt_args(prompt, max_new_tokens));
  session->close();
  ByteReader r(out, ErrorCode::kProtocolError);
  UserResult result;
  result.completion = decode_tokens(r);
  r.expect_end();
  result.verdict = *outcome.verdict;
  result.measurement = session->channel().peer_measurement();
  return result;
}

}  // namespace fmtee
