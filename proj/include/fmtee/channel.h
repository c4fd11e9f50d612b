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

// Attested secure channel. The server's ephemeral X25519 key is bound into a
// quote (report_data = digest(public key)); the client checks the binding
// and the attestation before agreeing on keys derived from the transcript.
//
// Handshake:
//   client -> HELLO_CLIENT  u16 version | client public key(32) | random(32)
//   server -> HELLO_SERVER  server public key(32) | u32 len | quote
//                           | u8 has_verdict [| u32 len | verdict]
//   transcript digest = digest(lp(client_hello) | lp(server_hello))
//
// Data frames (type DATA): counter(8, BE) | length(2, BE) | ciphertext,
// with counter|length as associated data and nonce = nonce_from_counter.

#ifndef FMTEE_CHANNEL_H_
#define FMTEE_CHANNEL_H_

#include <functional>
#include <optional>
#include <set>

#include "fmtee/crypto.h"
#include "fmtee/enclave.h"
#include "fmtee/net.h"
#include "fmtee/verifier.h"

namespace fmtee {

inline constexpr std::uint16_t kChannelVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 10;
inline constexpr std::size_t kMaxChannelPlaintext =
    0xFFFF - crypto::kAeadTagSize;

struct ClientHello {
  crypto::ExchangePublicKey public_key;
  FixedBytes<32, struct HelloRandomTag> random;

  Bytes serialize() const;
  static ClientHello parse(ByteView bytes);
};

struct ServerHello {
  crypto::ExchangePublicKey public_key;
  Bytes quote;
  std::optional<Bytes> verdict;

  Bytes serialize() const;
  static ServerHello parse(ByteView bytes);
};

crypto::Digest256 transcript_digest(ByteView client_hello,
                                    ByteView server_hello);

class SecureChannel {
 public:
  enum class Role { kClient, kServer };

  SecureChannel(const crypto::SessionKeys& keys, Role role,
                crypto::Digest256 peer_measurement,
                std::uint64_t initial_send_counter = 0);

  // Throws MESSAGE_TOO_LARGE, COUNTER_EXHAUSTED.
  Bytes seal(ByteView plaintext);
  // Throws DECRYPT_FAIL, REPLAY_DETECTED.
  Bytes open(ByteView frame);

  // Frame-level helpers over a stream. recv maps a plaintext ERROR frame to
  // its code, turning ENCLAVE_CRASHED and INTEGRITY_FAULT into
  // SERVICE_CRASHED; end of stream is CHANNEL_ERROR.
  void send(net::Stream& s, ByteView plaintext);
  Bytes recv(net::Stream& s);

  // Measurement from the verified quote (client side); zero on the server.
  const crypto::Digest256& peer_measurement() const {
    return peer_measurement_;
  }
  std::uint64_t send_counter() const { return send_counter_; }

 private:
  crypto::AeadKey send_key_;
  crypto::AeadKey recv_key_;
  crypto::Digest256 peer_measurement_;
  std::uint64_t send_counter_;
  std::optional<std::uint64_t> last_received_;
};

// What the client learns from a successful attestation check.
struct AttestationOutcome {
  std::optional<Verdict> verdict;
};

// Decides whether a server's quote is acceptable. Throws AttestationError
// (ATTESTATION_FAILED) or any other Error to abort the handshake.
using AttestationCheck = std::function<AttestationOutcome(
    const AttestationQuote& quote, ByteView quote_bytes,
    const std::optional<Verdict>& attached_verdict)>;

// Local policy evaluation; no verifier involved.
AttestationCheck check_with_policy(ReferencePolicy policy);

// Accepts a verdict signed by `verifier_key` for exactly this quote, whose
// only permitted reason is MEASUREMENT_MISMATCH (the verifier's reference
// values need not match ours), and whose quote carries one of `accepted`.
// Uses `prefetched` if given, else the verdict attached to the server hello.
AttestationCheck check_with_verdict(
    crypto::SigningPublicKey verifier_key,
    std::set<crypto::Digest256> accepted,
    std::optional<Verdict> prefetched = std::nullopt);

// As check_with_verdict, fetching the verdict live from `verifier`.
AttestationCheck check_with_verifier(RemoteVerifier verifier,
                                     crypto::SigningPublicKey verifier_key,
                                     std::set<crypto::Digest256> accepted);

// Shared by the verdict-based checks. Throws AttestationError.
void accept_verdict(const Verdict& v, const AttestationQuote& quote,
                    ByteView quote_bytes,
                    const crypto::SigningPublicKey& verifier_key,
                    const std::set<crypto::Digest256>& accepted);

class ClientHandshake {
 public:
  ClientHandshake();
  const Bytes& client_hello() const { return hello_; }

  // Order of checks: framing (HANDSHAKE_MALFORMED), key binding
  // (KEY_BINDING_MISMATCH), attestation (ATTESTATION_FAILED), key agreement.
  SecureChannel finish(ByteView server_hello, const AttestationCheck& check,
                       AttestationOutcome* outcome = nullptr);

 private:
  crypto::ExchangeKeyPair key_;
  Bytes hello_;
};

// Produces an optional verdict to attach to the server hello.
using VerdictSource =
    std::function<std::optional<Bytes>(ByteView quote_bytes)>;

struct ServerHandshakeResult {
  Bytes server_hello;
  SecureChannel channel;
};

// Runs inside the enclave. Throws ENCLAVE_CRASHED, HANDSHAKE_MALFORMED.
ServerHandshakeResult handshake_server(const EnclaveContext& ctx,
                                       const crypto::ExchangeKeyPair& key,
                                       ByteView client_hello,
                                       const VerdictSource& attach = {});
ServerHandshakeResult handshake_server(const EnclaveContext& ctx,
                                       ByteView client_hello,
                                       const VerdictSource& attach = {});

// Stream drivers for the two sides.
SecureChannel connect_channel(net::Stream& s, const AttestationCheck& check,
                              AttestationOutcome* outcome = nullptr);
SecureChannel accept_channel(net::Stream& s, const EnclaveContext& ctx,
                             const VerdictSource& attach = {});

}  // namespace fmtee

#endif  // FMTEE_CHANNEL_H_
