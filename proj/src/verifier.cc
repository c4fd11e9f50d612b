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

#include "fmtee/verifier.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "fmtee/kv.h"

namespace fmtee {
namespace {

constexpr std::string_view kVerdictDomain = "fmtee-verdict-v1";

template <typename T>
T parse_hex_field(const KvEntry& e, std::string_view text) {
  try {
    return T::from_hex(trim(text));
  } catch (const Error&) {
    throw SyntaxError(e.line, e.key + ": expected " +
                                  std::to_string(2 * T::kSize) +
                                  " hex characters");
  }
}

}  // namespace

ReferencePolicy parse_policy(std::string_view text) {
  ReferencePolicy p;
  for (const KvEntry& e : parse_kv(text)) {
    if (e.key == "accepted_measurement") {
      p.accepted_measurements.insert(
          parse_hex_field<crypto::Digest256>(e, e.value));
    } else if (e.key == "accepted_tee_type") {
      try {
        p.accepted_tee_types.insert(parse_tee_type(e.value));
      } catch (const Error& err) {
        throw SyntaxError(e.line, err.detail());
      }
    } else if (e.key == "trusted_root") {
      auto colon = e.value.find(':');
      if (colon == std::string::npos) {
        throw SyntaxError(e.line, "trusted_root must be <platform>:<key>");
      }
      p.trusted_roots.insert(TrustedRoot{
          parse_hex_field<PlatformId>(e, e.value.substr(0, colon)),
          parse_hex_field<crypto::SigningPublicKey>(e,
                                                    e.value.substr(colon + 1)),
      });
    } else {
      throw SyntaxError(e.line, "unknown key '" + e.key + "'");
    }
  }
  if (p.trusted_roots.empty()) {
    throw Error(ErrorCode::kInvariantViolation,
                "policy needs at least one trusted_root");
  }
  return p;
}

std::string render_policy(const ReferencePolicy& p) {
  std::ostringstream out;
  for (const auto& m : p.accepted_measurements) {
    out << "accepted_measurement = " << m.hex() << "\n";
  }
  for (TeeType t : p.accepted_tee_types) {
    out << "accepted_tee_type = " << tee_type_name(t) << "\n";
  }
  for (const TrustedRoot& r : p.trusted_roots) {
    out << "trusted_root = " << r.platform_id.hex() << ":"
        << r.public_key.hex() << "\n";
  }
  return out.str();
}

std::vector<VerdictReason> evaluate_policy(const AttestationQuote& q,
                                           const ReferencePolicy& policy) {
  std::vector<VerdictReason> reasons;
  bool known_platform = false;
  bool signature_ok = false;
  for (const TrustedRoot& root : policy.trusted_roots) {
    if (root.platform_id != q.platform_id) continue;
    known_platform = true;
    if (q.verify_signature(root.public_key)) {
      signature_ok = true;
      break;
    }
  }
  if (!signature_ok) reasons.push_back(VerdictReason::kSignatureInvalid);
  if (!known_platform) reasons.push_back(VerdictReason::kUnknownPlatform);
  if (!policy.accepted_measurements.count(q.measurement)) {
    reasons.push_back(VerdictReason::kMeasurementMismatch);
  }
  bool tee_ok = std::any_of(
      policy.accepted_tee_types.begin(), policy.accepted_tee_types.end(),
      [&](TeeType t) { return static_cast<std::uint8_t>(t) == q.tee_type; });
  if (!tee_ok) reasons.push_back(VerdictReason::kTeeTypeRejected);
  std::sort(reasons.begin(), reasons.end());
  return reasons;
}

// --- Verdict ----------------------------------------------------------------

Bytes Verdict::signed_message() const {
  Bytes body = serialize();
  body.resize(body.size() - crypto::Signature::kSize);
  return concat({as_bytes(kVerdictDomain), body});
}

Bytes Verdict::serialize() const {
  ByteWriter w;
  w.u8(kVersion).u8(pass ? 1 : 0).u8(static_cast<std::uint8_t>(reasons.size()));
  for (VerdictReason r : reasons) w.u8(static_cast<std::uint8_t>(r));
  w.fixed(quote_digest).fixed(signature);
  return w.take();
}

Verdict Verdict::parse(ByteView bytes, ErrorCode code) {
  ByteReader r(bytes, code);
  if (r.u8() != kVersion) throw Error(code, "unsupported verdict version");
  Verdict v;
  std::uint8_t result = r.u8();
  if (result > 1) throw Error(code, "verdict result must be 0 or 1");
  v.pass = result == 1;
  std::uint8_t n = r.u8();
  for (std::uint8_t i = 0; i < n; ++i) {
    std::uint8_t raw = r.u8();
    if (raw < 1 || raw > 4) throw Error(code, "unknown verdict reason");
    auto reason = static_cast<VerdictReason>(raw);
    if (!v.reasons.empty() && reason <= v.reasons.back()) {
      throw Error(code, "verdict reasons must be sorted and unique");
    }
    v.reasons.push_back(reason);
  }
  if (v.pass != v.reasons.empty()) {
    throw Error(code, "verdict result disagrees with reasons");
  }
  v.quote_digest = r.fixed<crypto::Digest256>();
  v.signature = r.fixed<crypto::Signature>();
  r.expect_end();
  return v;
}

bool Verdict::verify_signature(const crypto::SigningPublicKey& verifier) const {
  return crypto::verify(verifier, signed_message(), signature.view());
}

std::string describe_reasons(const std::vector<VerdictReason>& reasons) {
  std::string out;
  for (VerdictReason r : reasons) {
    if (!out.empty()) out += ",";
    out += verdict_reason_name(r);
  }
  return out.empty() ? "none" : out;
}

// --- Verifier ---------------------------------------------------------------

Verifier::Verifier(ReferencePolicy policy, crypto::SigningKeyPair key)
    : policy_(std::move(policy)), key_(std::move(key)) {
  if (policy_.trusted_roots.empty()) {
    throw Error(ErrorCode::kInvariantViolation,
                "policy needs at least one trusted root");
  }
}

Verdict Verifier::verify_quote(const AttestationQuote& q) const {
  Verdict v;
  v.reasons = evaluate_policy(q, policy_);
  v.pass = v.reasons.empty();
  v.quote_digest = crypto::digest(q.serialize());
  std::lock_guard lock(sign_mu_);
  v.signature = key_.sign(v.signed_message());
  return v;
}

Verdict Verifier::verify_serialized(ByteView quote_bytes,
                                    ErrorCode code) const {
  return verify_quote(AttestationQuote::parse(quote_bytes, code));
}

// --- service ----------------------------------------------------------------

VerifierService::VerifierService(std::shared_ptr<const Verifier> verifier,
                                 net::Transport& transport,
                                 const std::string& address)
    : verifier_(std::move(verifier)),
      server_(transport.listen(address),
              [this](net::Stream& s) { handle(s); }) {}

void VerifierService::handle(net::Stream& s) {
  for (;;) {
    std::optional<net::Frame> f;
    try {
      f = net::read_frame(s);
    } catch (const Error& e) {
      // The byte stream is no longer aligned to frames; report and hang up.
      net::write_frame(s, net::msg::kError,
                       net::encode_error(e.code(), e.detail()));
      return;
    }
    if (!f) return;
    if (f->type != net::msg::kVerifyReq) {
      net::write_frame(s, net::msg::kError,
                       net::encode_error(ErrorCode::kProtocolError,
                                         "expected VERIFY_REQ"));
      continue;
    }
    try {
      Verdict v =
          verifier_->verify_serialized(f->payload, ErrorCode::kProtocolError);
      net::write_frame(s, net::msg::kVerifyResp, v.serialize());
    } catch (const Error& e) {
      net::write_frame(s, net::msg::kError,
                       net::encode_error(e.code(), e.detail()));
    }
  }
}

Verdict RemoteVerifier::verify(ByteView quote_bytes) const {
  auto s = transport_->connect(address_);
  net::write_frame(*s, net::msg::kVerifyReq, quote_bytes);
  std::optional<net::Frame> f = net::read_frame(*s);
  s->close();
  if (!f) throw Error(ErrorCode::kProtocolError, "verifier closed connection");
  if (f->type == net::msg::kError) throw net::decode_error(f->payload);
  if (f->type != net::msg::kVerifyResp) {
    throw Error(ErrorCode::kProtocolError, "unexpected verifier reply");
  }
  return Verdict::parse(f->payload, ErrorCode::kProtocolError);
}

// --- key files --------------------------------------------------------------

crypto::SigningKeyPair load_signing_key(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path);
  std::string line;
  std::getline(in, line);
  try {
    return crypto::SigningKeyPair::from_seed(
        crypto::KeySeed::from_hex(trim(line)));
  } catch (const Error&) {
    throw Error(ErrorCode::kMalformed, path + ": expected 64 hex characters");
  }
}

void save_signing_key(const std::string& path,
                      const crypto::SigningKeyPair& key) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << key.seed().hex() << "\n";
}

}  // namespace fmtee
