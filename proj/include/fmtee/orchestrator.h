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

// The three roles wired together: the CSP host that launches enclaves, the
// in-enclave inference and RAG services, the model provider's deployment
// flow (steps 1-7), and the end user's attested prompt (steps 8-9).
//
// Deployment flow steps, as numbered in StepAbort:
//   1 request an instance from the CSP
//   2 receive the instance handle
//   3 open the attested channel (quote binds the channel key)
//   4 verifier checks the quote
//   5 measurement equals the provider's expected value
//   6 provision the model key over the channel, load the encrypted model
//   7 attested model digest equals the expected value; publish

#ifndef FMTEE_ORCHESTRATOR_H_
#define FMTEE_ORCHESTRATOR_H_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "fmtee/channel.h"
#include "fmtee/enclave.h"
#include "fmtee/inference.h"
#include "fmtee/manifest.h"
#include "fmtee/model_store.h"
#include "fmtee/net.h"
#include "fmtee/verifier.h"

namespace fmtee {

enum class ServiceKind : std::uint8_t { kInference = 1, kRag = 2 };

std::string_view service_kind_name(ServiceKind kind);
ServiceKind parse_service_kind(std::string_view text);

// Operation codes carried inside the secure channel. Requests are
// u8 op | arguments; responses are u8 status (0 or an ErrorCode) followed
// by the result, or by lp(detail) on error.
namespace op {
inline constexpr std::uint8_t kProvisionKey = 0x01;
inline constexpr std::uint8_t kLoadModel = 0x02;
inline constexpr std::uint8_t kAttestModel = 0x03;
inline constexpr std::uint8_t kPublish = 0x04;
inline constexpr std::uint8_t kPrompt = 0x05;
inline constexpr std::uint8_t kConfigureRag = 0x06;
inline constexpr std::uint8_t kEvalAccuracy = 0x07;
inline constexpr std::uint8_t kBindProvenance = 0x08;
inline constexpr std::uint8_t kPutDocument = 0x10;
inline constexpr std::uint8_t kAttestIndex = 0x11;
inline constexpr std::uint8_t kQuery = 0x12;
}  // namespace op

struct DeploymentRequest {
  std::string manifest_text;
  TeeType tee_type = TeeType::kApplication;
  ServiceKind kind = ServiceKind::kInference;
  FileTree files;

  Bytes serialize() const;
  static DeploymentRequest parse(ByteView bytes);
};

struct DeploymentHandle {
  std::uint32_t instance_id = 0;
  std::string address;
  PlatformId platform_id;

  Bytes serialize() const;
  static DeploymentHandle parse(ByteView bytes);
};

using RagIndex = std::map<Token, TokenSequence>;

// digest("fmtee-rag-index-v1" | per key ascending: u32 key | u32 n | tokens)
crypto::Digest256 rag_index_digest(const RagIndex& index);

// --- in-enclave services ----------------------------------------------------

// One attested-channel server per enclave. Requests from all connections
// are executed one at a time. If the enclave faults, the host side sends a
// plaintext ERROR frame and closes the connection.
class EnclaveService {
 public:
  EnclaveService(EnclaveContext ctx, net::Transport& transport);
  virtual ~EnclaveService();

  void start(const std::string& address);
  void stop();
  const std::string& address() const;

 protected:
  // Returns the response body; throw Error to report a status.
  virtual Bytes handle_op(std::uint8_t op, ByteReader& args) = 0;
  void require_unpublished() const;
  // Users are served only after step 7.
  void require_published() const;

  EnclaveContext ctx_;
  net::Transport& transport_;
  bool published_ = false;

 private:
  void serve(net::Stream& s);

  std::mutex op_mu_;
  std::unique_ptr<net::Server> server_;
};

class ServiceSession;

class InferenceService : public EnclaveService {
 public:
  InferenceService(EnclaveContext ctx, net::Transport& transport);
  ~InferenceService() override;

  ModelSlot& slot() { return slot_; }

 protected:
  Bytes handle_op(std::uint8_t op, ByteReader& args) override;

 private:
  TokenSequence with_retrieved_context(const TokenSequence& prompt);

  ModelSlot slot_;
  std::unique_ptr<ServiceSession> rag_;
};

class RagService : public EnclaveService {
 public:
  RagService(EnclaveContext ctx, net::Transport& transport);
  ~RagService() override;

 protected:
  Bytes handle_op(std::uint8_t op, ByteReader& args) override;

 private:
  std::map<Token, Region> documents_;
};

// --- CSP host ---------------------------------------------------------------

// Rewrites the requested file tree before launch: how a misbehaving CSP
// swaps software or packages.
using TreeMutator = std::function<void(FileTree&)>;

// Flips the low bit of byte `offset` of `path`.
TreeMutator modify_file_byte(std::string path, std::size_t offset = 0);
// Replaces `path` with `content`.
TreeMutator replace_file(std::string path, Bytes content);
// Flips bit `bit` of `path`, counted from the start of the file.
TreeMutator flip_file_bit(std::string path, std::size_t bit);

// Control protocol frames (payloads in FORMATS.md): DEPLOY_REQ/RESP and the
// privileged HOST_* endpoints that model a rogue administrator.
class CspHost {
 public:
  CspHost(net::Transport& transport, const std::string& address,
          std::vector<std::shared_ptr<const PlatformRoot>> platforms,
          TreeMutator misbehavior = {});
  ~CspHost();

  const std::string& address() const;
  void stop();
  void set_misbehavior(TreeMutator misbehavior);

  std::size_t instance_count() const;
  // Instance whose service listens on `address`.
  std::optional<std::uint32_t> find_instance(const std::string& address) const;

 private:
  // The CSP holds the enclave but never its owner token.
  struct Instance {
    std::shared_ptr<Enclave> enclave;
    std::shared_ptr<HostStorage> storage;
    std::unique_ptr<EnclaveService> service;
  };

  void serve(net::Stream& s);
  Bytes handle(const net::Frame& f);
  DeploymentHandle deploy(const DeploymentRequest& req);
  Instance& instance(std::uint32_t id);

  net::Transport& transport_;
  std::vector<std::shared_ptr<const PlatformRoot>> platforms_;
  mutable std::mutex mu_;
  TreeMutator misbehavior_;
  std::map<std::uint32_t, std::unique_ptr<Instance>> instances_;
  std::uint32_t next_id_ = 1;
  std::unique_ptr<net::Server> server_;
};

class CspClient {
 public:
  CspClient(net::Transport& transport, std::string address)
      : transport_(&transport), address_(std::move(address)) {}

  DeploymentHandle deploy(const DeploymentRequest& req) const;
  Bytes host_read(std::uint32_t instance, std::uint64_t offset,
                  std::uint64_t len) const;
  void host_write(std::uint32_t instance, std::uint64_t offset,
                  ByteView data) const;
  std::vector<Region> host_regions(std::uint32_t instance) const;
  void host_file_put(std::uint32_t instance, const std::string& path,
                     ByteView content) const;

 private:
  net::Frame call(std::uint8_t type, ByteView payload,
                  std::uint8_t expect) const;

  net::Transport* transport_;
  std::string address_;
};

// --- client side of the in-enclave services ---------------------------------

class ServiceSession {
 public:
  // Throws CONNECT_FAILED and every handshake error.
  static std::unique_ptr<ServiceSession> open(
      net::Transport& transport, const std::string& address,
      const AttestationCheck& check, AttestationOutcome* outcome = nullptr);

  // Throws Error(status, detail) for a non-zero status.
  Bytes call(std::uint8_t op, ByteView args);
  const SecureChannel& channel() const { return channel_; }
  // True once the service has hung up; waits for the peer to do so.
  bool peer_closed();
  void close() { stream_->close(); }

 private:
  ServiceSession(std::unique_ptr<net::Stream> stream, SecureChannel channel)
      : stream_(std::move(stream)), channel_(std::move(channel)) {}

  std::unique_ptr<net::Stream> stream_;
  SecureChannel channel_;
};

// --- provider and user flows ------------------------------------------------

// Published by the provider, handed to users (key = value file).
struct ServiceDescriptor {
  std::string address;
  crypto::Digest256 measurement;
  // The model digest for inference services, the index digest for RAG.
  crypto::Digest256 model_digest;
  TeeType tee_type = TeeType::kApplication;
  PlatformId platform_id;
  std::string verifier_address;
  crypto::SigningPublicKey verifier_public_key;

  std::string render() const;
  static ServiceDescriptor parse(std::string_view text);

  friend bool operator==(const ServiceDescriptor&,
                         const ServiceDescriptor&) = default;
};

struct ProviderConfig {
  DeploymentRequest request;
  crypto::Digest256 expected_measurement;
  crypto::Digest256 expected_model_digest;
  std::string verifier_address;
  crypto::SigningPublicKey verifier_public_key;
  crypto::AeadKey model_key;
  KeyId key_id;
  // Path of the .fmte package inside request.files.
  std::string package_path;
  // When set, the inference enclave attests and connects to this RAG
  // service before the deployment is published.
  std::optional<ServiceDescriptor> rag;
};

struct RagConfig {
  DeploymentRequest request;
  crypto::Digest256 expected_measurement;
  std::string verifier_address;
  crypto::SigningPublicKey verifier_public_key;
  RagIndex documents;
};

// Progress callback: step number (1-9), description, passed.
using StepLog = std::function<void(int step, const std::string& what, bool ok)>;

// Throws StepAbort(n, reason) at the first failing step; nothing after that
// step happens.
ServiceDescriptor provider_deploy(const ProviderConfig& cfg,
                                  net::Transport& transport,
                                  const std::string& csp_address,
                                  const StepLog& log = {});

ServiceDescriptor deploy_rag_service(const RagConfig& cfg,
                                     net::Transport& transport,
                                     const std::string& csp_address,
                                     const StepLog& log = {});

struct RagChain {
  ServiceDescriptor inference;
  ServiceDescriptor rag;
};

// Deploys the RAG service, then the inference service, which opens its own
// attested channel to the RAG service before being published.
RagChain deploy_rag_chain(const ProviderConfig& inference,
                          const RagConfig& rag, net::Transport& transport,
                          const std::string& csp_address,
                          const StepLog& log = {});

struct UserResult {
  TokenSequence completion;
  Verdict verdict;
  crypto::Digest256 measurement;
};

// Steps 8-9. Throws ATTESTATION_FAILED, CHANNEL_ERROR, SERVICE_CRASHED.
UserResult user_prompt(const ServiceDescriptor& descriptor,
                       const TokenSequence& prompt,
                       std::uint32_t max_new_tokens,
                       net::Transport& transport);

// Attestation check used by users: live verifier, descriptor-pinned
// measurement.
AttestationCheck descriptor_check(const ServiceDescriptor& d,
                                  net::Transport& transport);

// Request bodies shared by the flows and by tests.
Bytes encode_prompt_args(const TokenSequence& prompt,
                         std::uint32_t max_new_tokens);
Bytes encode_tokens(const TokenSequence& tokens);
TokenSequence decode_tokens(ByteReader& r);

}  // namespace fmtee

#endif  // FMTEE_ORCHESTRATOR_H_
