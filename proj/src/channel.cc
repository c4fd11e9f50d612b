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

#include "fmtee/channel.h"

#include <algorithm>

#include "fmtee/defenses.h"

namespace fmtee {
namespace {

constexpr std::size_t kMaxQuoteSize = 4096;
constexpr std::size_t kMaxVerdictSize = 4096;

// Reads one frame of `type`, translating ERROR frames and end of stream.
Bytes read_typed(net::Stream& s, std::uint8_t type) {
  std::optional<net::Frame> f = net::read_frame(s);
  if (!f) throw Error(ErrorCode::kChannelError, "connection closed by peer");
  if (f->type == net::msg::kError) {
    Error e = net::decode_error(f->payload);
    if (e.code() == ErrorCode::kIntegrityFault ||
        e.code() == ErrorCode::kEnclaveCrashed) {
      throw Error(ErrorCode::kServiceCrashed,
                  std::string(error_code_name(e.code())) + ": " + e.detail());
    }
    throw e;
  }
  if (f->type != type) {
    throw Error(ErrorCode::kProtocolError,
                "unexpected frame type " + std::to_string(f->type));
  }
  return std::move(f->payload);
}

}  // namespace

// --- hellos -----------------------------------------------------------------

Bytes ClientHello::serialize() const {
  ByteWriter w;
  w.u16(kChannelVersion).fixed(public_key).fixed(random);
  return w.take();
}

ClientHello ClientHello::parse(ByteView bytes) {
  ByteReader r(bytes, ErrorCode::kHandshakeMalformed);
  if (r.u16() != kChannelVersion) {
    throw Error(ErrorCode::kHandshakeMalformed, "unsupported channel version");
  }
  ClientHello h;
  h.public_key = r.fixed<crypto::ExchangePublicKey>();
  h.random = r.fixed<decltype(h.random)>();
  r.expect_end();
  return h;
}

Bytes ServerHello::serialize() const {
  ByteWriter w;
  w.fixed(public_key).lp(quote).u8(verdict ? 1 : 0);
  if (verdict) w.lp(*verdict);
  return w.take();
}

ServerHello ServerHello::parse(ByteView bytes) {
  ByteReader r(bytes, ErrorCode::kHandshakeMalformed);
  ServerHello h;
  h.public_key = r.fixed<crypto::ExchangePublicKey>();
  h.quote = r.lp(kMaxQuoteSize);
  std::uint8_t has_verdict = r.u8();
  if (has_verdict > 1) {
    throw Error(ErrorCode::kHandshakeMalformed, "bad verdict flag");
  }
  if (has_verdict) h.verdict = r.lp(kMaxVerdictSize);
  r.expect_end();
  return h;
}

crypto::Digest256 transcript_digest(ByteView client_hello,
                                    ByteView server_hello) {
  ByteWriter w;
  w.lp(client_hello).lp(server_hello);
  return crypto::digest(w.bytes());
}

// --- SecureChannel ----------------------------------------------------------

SecureChannel::SecureChannel(const crypto::SessionKeys& keys, Role role,
                             crypto::Digest256 peer_measurement,
                             std::uint64_t initial_send_counter)
    : send_key_(role == Role::kClient ? keys.client_to_server
                                      : keys.server_to_client),
      recv_key_(role == Role::kClient ? keys.server_to_client
                                      : keys.client_to_server),
      peer_measurement_(peer_measurement),
      send_counter_(initial_send_counter) {}

Bytes SecureChannel::seal(ByteView plaintext) {
  if (plaintext.size() > kMaxChannelPlaintext) {
    throw Error(ErrorCode::kMessageTooLarge,
                std::to_string(plaintext.size()) + " bytes");
  }
  if (send_counter_ == UINT64_MAX) {
    throw Error(ErrorCode::kCounterExhausted, "send counter exhausted");
  }
  std::uint64_t counter = send_counter_++;
  ByteWriter header;
  header.u64(counter).u16(
      static_cast<std::uint16_t>(plaintext.size() + crypto::kAeadTagSize));
  Bytes ct;
  if (active_defenses().channel_encryption) {
    ct = crypto::aead_seal(send_key_, crypto::nonce_from_counter(counter),
                           plaintext, header.bytes());
  } else {
    ct.assign(plaintext.begin(), plaintext.end());
    ct.resize(ct.size() + crypto::kAeadTagSize, 0);
  }
  return concat({header.bytes(), ct});
}

Bytes SecureChannel::open(ByteView frame) {
  if (frame.size() < kFrameHeaderSize + crypto::kAeadTagSize) {
    throw Error(ErrorCode::kDecryptFail, "frame too short");
  }
  ByteView header = frame.first(kFrameHeaderSize);
  ByteView ct = frame.subspan(kFrameHeaderSize);
  ByteReader r(header);
  std::uint64_t counter = r.u64();
  std::uint16_t len = r.u16();
  Bytes plain;
  if (active_defenses().channel_encryption) {
    // Authenticate first: a corrupted counter or length field must surface
    // as tampering, not as a replay or framing error.
    plain = crypto::aead_open(recv_key_, crypto::nonce_from_counter(counter),
                              ct, header);
  } else {
    plain.assign(ct.begin(), ct.end() - crypto::kAeadTagSize);
  }
  if (len != ct.size()) {
    throw Error(ErrorCode::kDecryptFail, "length field disagrees with frame");
  }
  if (last_received_ && counter <= *last_received_) {
    throw Error(ErrorCode::kReplayDetected,
                "counter " + std::to_string(counter) + " already seen");
  }
  last_received_ = counter;
  return plain;
}

void SecureChannel::send(net::Stream& s, ByteView plaintext) {
  net::write_frame(s, net::msg::kData, seal(plaintext));
}

Bytes SecureChannel::recv(net::Stream& s) {
  return open(read_typed(s, net::msg::kData));
}

// --- attestation checks -----------------------------------------------------

AttestationCheck check_with_policy(ReferencePolicy policy) {
  return [policy = std::move(policy)](const AttestationQuote& quote, ByteView,
                                      const std::optional<Verdict>&) {
    std::vector<VerdictReason> reasons = evaluate_policy(quote, policy);
    if (!reasons.empty()) {
      throw AttestationError(reasons, "quote fails local policy");
    }
    return AttestationOutcome{};
  };
}

void accept_verdict(const Verdict& v, const AttestationQuote& quote,
                    ByteView quote_bytes,
                    const crypto::SigningPublicKey& verifier_key,
                    const std::set<crypto::Digest256>& accepted) {
  if (!v.verify_signature(verifier_key)) {
    throw AttestationError({VerdictReason::kSignatureInvalid},
                           "verdict not signed by the expected verifier");
  }
  if (v.quote_digest != crypto::digest(quote_bytes)) {
    throw AttestationError({VerdictReason::kSignatureInvalid},
                           "verdict covers a different quote");
  }
  std::vector<VerdictReason> blocking;
  for (VerdictReason r : v.reasons) {
    if (r != VerdictReason::kMeasurementMismatch) blocking.push_back(r);
  }
  if (!blocking.empty()) throw AttestationError(blocking, "verifier rejected");
  if (!accepted.count(quote.measurement)) {
    throw AttestationError({VerdictReason::kMeasurementMismatch},
                           "measurement " + quote.measurement.hex() +
                               " not accepted");
  }
}

AttestationCheck check_with_verdict(crypto::SigningPublicKey verifier_key,
                                    std::set<crypto::Digest256> accepted,
                                    std::optional<Verdict> prefetched) {
  return [=](const AttestationQuote& quote, ByteView quote_bytes,
             const std::optional<Verdict>& attached) {
    const std::optional<Verdict>& v = prefetched ? prefetched : attached;
    if (!v) {
      throw AttestationError({}, "no verdict available for the quote");
    }
    accept_verdict(*v, quote, quote_bytes, verifier_key, accepted);
    return AttestationOutcome{*v};
  };
}

AttestationCheck check_with_verifier(RemoteVerifier verifier,
                                     crypto::SigningPublicKey verifier_key,
                                     std::set<crypto::Digest256> accepted) {
  return [=](const AttestationQuote& quote, ByteView quote_bytes,
             const std::optional<Verdict>&) {
    Verdict v = verifier.verify(quote_bytes);
    accept_verdict(v, quote, quote_bytes, verifier_key, accepted);
    return AttestationOutcome{v};
  };
}

// --- handshake --------------------------------------------------------------

ClientHandshake::ClientHandshake()
    : key_(crypto::ExchangeKeyPair::generate()) {
  ClientHello h;
  h.public_key = key_.public_key();
  h.random = crypto::random_value<decltype(h.random)>();
  hello_ = h.serialize();
}

SecureChannel ClientHandshake::finish(ByteView server_hello,
                                      const AttestationCheck& check,
                                      AttestationOutcome* outcome) {
  ServerHello sh = ServerHello::parse(server_hello);
  AttestationQuote quote =
      AttestationQuote::parse(sh.quote, ErrorCode::kHandshakeMalformed);
  std::optional<Verdict> attached;
  if (sh.verdict) {
    attached = Verdict::parse(*sh.verdict, ErrorCode::kHandshakeMalformed);
  }
  if (quote.report_data != to_report_data(crypto::digest(sh.public_key.view()))) {
    throw Error(ErrorCode::kKeyBindingMismatch,
                "quote report_data does not bind the server key");
  }
  AttestationOutcome result = check(quote, sh.quote, attached);
  if (outcome) *outcome = result;
  crypto::SharedSecret shared = crypto::key_agree(key_, sh.public_key);
  crypto::SessionKeys keys = crypto::derive_session_keys(
      shared, transcript_digest(hello_, server_hello));
  return SecureChannel(keys, SecureChannel::Role::kClient, quote.measurement);
}

ServerHandshakeResult handshake_server(const EnclaveContext& ctx,
                                       const crypto::ExchangeKeyPair& key,
                                       ByteView client_hello,
                                       const VerdictSource& attach) {
  ClientHello ch = ClientHello::parse(client_hello);
  ServerHello sh;
  sh.public_key = key.public_key();
  sh.quote = ctx->get_quote(ctx.token,
                            to_report_data(crypto::digest(sh.public_key.view())))
                 .serialize();
  if (attach) sh.verdict = attach(sh.quote);
  Bytes server_hello = sh.serialize();
  crypto::SharedSecret shared = crypto::key_agree(key, ch.public_key);
  crypto::SessionKeys keys = crypto::derive_session_keys(
      shared, transcript_digest(client_hello, server_hello));
  return ServerHandshakeResult{
      std::move(server_hello),
      SecureChannel(keys, SecureChannel::Role::kServer, crypto::Digest256{})};
}

ServerHandshakeResult handshake_server(const EnclaveContext& ctx,
                                       ByteView client_hello,
                                       const VerdictSource& attach) {
  return handshake_server(ctx, crypto::ExchangeKeyPair::generate(),
                          client_hello, attach);
}

SecureChannel connect_channel(net::Stream& s, const AttestationCheck& check,
                              AttestationOutcome* outcome) {
  ClientHandshake hs;
  net::write_frame(s, net::msg::kHelloClient, hs.client_hello());
  Bytes server_hello = read_typed(s, net::msg::kHelloServer);
  return hs.finish(server_hello, check, outcome);
}

SecureChannel accept_channel(net::Stream& s, const EnclaveContext& ctx,
                             const VerdictSource& attach) {
  std::optional<net::Frame> f = net::read_frame(s);
  if (!f) throw Error(ErrorCode::kChannelError, "client went away");
  if (f->type != net::msg::kHelloClient) {
    throw Error(ErrorCode::kHandshakeMalformed, "expected HELLO_CLIENT");
  }
  ServerHandshakeResult r = handshake_server(ctx, f->payload, attach);
  net::write_frame(s, net::msg::kHelloServer, r.server_hello);
  return std::move(r.channel);
}

}  // namespace fmtee
