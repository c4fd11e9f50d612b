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

#ifndef FMTEE_ERROR_H_
#define FMTEE_ERROR_H_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fmtee {

// Numeric values travel on the wire inside service error responses; do not
// renumber.
enum class ErrorCode : std::uint8_t {
  kSyntaxError = 1,
  kDuplicateKey = 2,
  kInvariantViolation = 3,
  kValidationFailed = 4,
  kRejectedPublicKey = 5,
  kDecryptFail = 6,
  kEnclaveCrashed = 7,
  kNotOwner = 8,
  kIntegrityFault = 9,
  kSealMismatch = 10,
  kOutOfEnclaveMemory = 11,
  kFileNotAllowed = 12,
  kBindFailed = 13,
  kAttestationFailed = 14,
  kKeyBindingMismatch = 15,
  kHandshakeMalformed = 16,
  kReplayDetected = 17,
  kCounterExhausted = 18,
  kMessageTooLarge = 19,
  kKeyNotProvisioned = 20,
  kDigestMismatch = 21,
  kNoModelLoaded = 22,
  kEmptyContext = 23,
  kBatchSizeMismatch = 24,
  kEmptyDataset = 25,
  kInvalidArgument = 26,
  kProtocolError = 27,
  kChannelError = 28,
  kServiceCrashed = 29,
  kMeasurementMismatch = 30,
  kModelDigestMismatch = 31,
  kAbortAtStep = 32,
  kFixtureUnhealthy = 33,
  kTargetFailed = 34,
  kTooFewSamples = 35,
  kEmptyInput = 36,
  kConfigMismatch = 37,
  kMalformed = 38,
  kIoError = 39,
  kConnectFailed = 40,
  kUnsupportedOperation = 41,
};

std::string_view error_code_name(ErrorCode code);

// Process exit status for a failure with this code: 2 attestation,
// 3 integrity, 4 protocol, 1 everything else (usage, configuration, I/O).
int exit_code_for(ErrorCode code);

// Reasons a quote fails policy evaluation. Ordered by numeric value when
// reported, so verdicts compare equal regardless of evaluation order.
enum class VerdictReason : std::uint8_t {
  kSignatureInvalid = 1,
  kUnknownPlatform = 2,
  kMeasurementMismatch = 3,
  kTeeTypeRejected = 4,
};

std::string_view verdict_reason_name(VerdictReason reason);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

// SYNTAX_ERROR carrying the 1-based line of the offending input.
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t line, std::string detail);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// ATTESTATION_FAILED with the verdict reasons that caused it.
class AttestationError : public Error {
 public:
  explicit AttestationError(std::vector<VerdictReason> reasons,
                            std::string detail = {});
  const std::vector<VerdictReason>& reasons() const noexcept {
    return reasons_;
  }

 private:
  std::vector<VerdictReason> reasons_;
};

// ABORT_AT_STEP(n, reason) raised by the deployment flow.
class StepAbort : public Error {
 public:
  StepAbort(int step, ErrorCode reason, std::string detail = {});
  int step() const noexcept { return step_; }
  ErrorCode reason() const noexcept { return reason_; }

 private:
  int step_;
  ErrorCode reason_;
};

}  // namespace fmtee

#endif  // FMTEE_ERROR_H_
