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

// Attestation verification: reference policies, signed verdicts, and the
// verifier service speaking VERIFY_REQ / VERIFY_RESP over the frame format.
//
// Policy file (same key = value syntax as manifests):
//
//   # repeated
//   accepted_measurement = <64 hex>
//   # repeated; application | vm
//   accepted_tee_type = application
//   # repeated, at least one; <platform id hex>:<root public key hex>
//   trusted_root = 0011...:aabb...

#ifndef FMTEE_VERIFIER_H_
#define FMTEE_VERIFIER_H_

#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "fmtee/crypto.h"
#include "fmtee/enclave.h"
#include "fmtee/net.h"

namespace fmtee {

struct TrustedRoot {
  PlatformId platform_id;
  crypto::SigningPublicKey public_key;

  friend auto operator<=>(const TrustedRoot&, const TrustedRoot&) = default;
};

struct ReferencePolicy {
  std::set<crypto::Digest256> accepted_measurements;
  std::set<TeeType> accepted_tee_types;
  std::set<TrustedRoot> trusted_roots;

  friend bool operator==(const ReferencePolicy&,
                         const ReferencePolicy&) = default;
};

// Throws SyntaxError, or INVARIANT_VIOLATION when no trusted_root is given.
ReferencePolicy parse_policy(std::string_view text);
std::string render_policy(const ReferencePolicy& p);

// Sorted, duplicate-free reasons the quote fails `policy`; empty means pass.
std::vector<VerdictReason> evaluate_policy(const AttestationQuote& q,
                                           const ReferencePolicy& policy);

struct Verdict {
  static constexpr std::uint8_t kVersion = 1;

  bool pass = false;
  std::vector<VerdictReason> reasons;
  crypto::Digest256 quote_digest;
  crypto::Signature signature;

  Bytes signed_message() const;
  Bytes serialize() const;
  // Also checks pass == reasons.empty() and that reasons are sorted.
  static Verdict parse(ByteView bytes, ErrorCode code = ErrorCode::kMalformed);
  bool verify_signature(const crypto::SigningPublicKey& verifier) const;

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

std::string describe_reasons(const std::vector<VerdictReason>& reasons);

class Verifier {
 public:
  Verifier(ReferencePolicy policy, crypto::SigningKeyPair key);

  const ReferencePolicy& policy() const { return policy_; }
  const crypto::SigningPublicKey& public_key() const {
    return key_.public_key();
  }

  Verdict verify_quote(const AttestationQuote& q) const;
  // Throws Error(code) when `quote_bytes` is not a well-formed quote.
  Verdict verify_serialized(ByteView quote_bytes,
                            ErrorCode code = ErrorCode::kMalformed) const;

 private:
  ReferencePolicy policy_;
  crypto::SigningKeyPair key_;
  mutable std::mutex sign_mu_;
};

// Serves VERIFY_REQ frames (payload: serialized quote) with VERIFY_RESP
// (payload: serialized verdict). A malformed request gets an ERROR frame and
// the connection stays usable.
class VerifierService {
 public:
  VerifierService(std::shared_ptr<const Verifier> verifier,
                  net::Transport& transport, const std::string& address);

  const std::string& address() const { return server_.address(); }
  void stop() { server_.stop(); }

 private:
  void handle(net::Stream& s);

  std::shared_ptr<const Verifier> verifier_;
  net::Server server_;
};

// Client side of the verifier protocol; one connection per call.
class RemoteVerifier {
 public:
  RemoteVerifier(net::Transport& transport, std::string address)
      : transport_(&transport), address_(std::move(address)) {}

  const std::string& address() const { return address_; }

  // Throws CONNECT_FAILED, PROTOCOL_ERROR or the error the service reports.
  Verdict verify(ByteView quote_bytes) const;

 private:
  net::Transport* transport_;
  std::string address_;
};

// Key file: one line of 64 hex characters holding the Ed25519 seed.
crypto::SigningKeyPair load_signing_key(const std::string& path);
void save_signing_key(const std::string& path,
                      const crypto::SigningKeyPair& key);

}  // namespace fmtee

#endif  // FMTEE_VERIFIER_H_
