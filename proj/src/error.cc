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

#include "fmtee/error.h"

#include <string>

namespace fmtee {
namespace {

std::string compose(ErrorCode code, const std::string& detail) {
  std::string out(error_code_name(code));
  if (!detail.empty()) {
    out += ": ";
    out += detail;
  }
  return out;
}

std::string join_reasons(const std::vector<VerdictReason>& reasons) {
  std::string out = "[";
  for (std::size_t i = 0; i < reasons.size(); ++i) {
    if (i) out += ", ";
    out += verdict_reason_name(reasons[i]);
  }
  return out + "]";
}

}  // namespace

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSyntaxError: return "SYNTAX_ERROR";
    case ErrorCode::kDuplicateKey: return "DUPLICATE_KEY";
    case ErrorCode::kInvariantViolation: return "INVARIANT_VIOLATION";
    case ErrorCode::kValidationFailed: return "VALIDATION_FAILED";
    case ErrorCode::kRejectedPublicKey: return "REJECTED_PUBLIC_KEY";
    case ErrorCode::kDecryptFail: return "DECRYPT_FAIL";
    case ErrorCode::kEnclaveCrashed: return "ENCLAVE_CRASHED";
    case ErrorCode::kNotOwner: return "NOT_OWNER";
    case ErrorCode::kIntegrityFault: return "INTEGRITY_FAULT";
    case ErrorCode::kSealMismatch: return "SEAL_MISMATCH";
    case ErrorCode::kOutOfEnclaveMemory: return "OUT_OF_ENCLAVE_MEMORY";
    case ErrorCode::kFileNotAllowed: return "FILE_NOT_ALLOWED";
    case ErrorCode::kBindFailed: return "BIND_FAILED";
    case ErrorCode::kAttestationFailed: return "ATTESTATION_FAILED";
    case ErrorCode::kKeyBindingMismatch: return "KEY_BINDING_MISMATCH";
    case ErrorCode::kHandshakeMalformed: return "HANDSHAKE_MALFORMED";
    case ErrorCode::kReplayDetected: return "REPLAY_DETECTED";
    case ErrorCode::kCounterExhausted: return "COUNTER_EXHAUSTED";
    case ErrorCode::kMessageTooLarge: return "MESSAGE_TOO_LARGE";
    case ErrorCode::kKeyNotProvisioned: return "KEY_NOT_PROVISIONED";
    case ErrorCode::kDigestMismatch: return "DIGEST_MISMATCH";
    case ErrorCode::kNoModelLoaded: return "NO_MODEL_LOADED";
    case ErrorCode::kEmptyContext: return "EMPTY_CONTEXT";
    case ErrorCode::kBatchSizeMismatch: return "BATCH_SIZE_MISMATCH";
    case ErrorCode::kEmptyDataset: return "EMPTY_DATASET";
    case ErrorCode::kInvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::kProtocolError: return "PROTOCOL_ERROR";
    case ErrorCode::kChannelError: return "CHANNEL_ERROR";
    case ErrorCode::kServiceCrashed: return "SERVICE_CRASHED";
    case ErrorCode::kMeasurementMismatch: return "MEASUREMENT_MISMATCH";
    case ErrorCode::kModelDigestMismatch: return "MODEL_DIGEST_MISMATCH";
    case ErrorCode::kAbortAtStep: return "ABORT_AT_STEP";
    case ErrorCode::kFixtureUnhealthy: return "FIXTURE_UNHEALTHY";
    case ErrorCode::kTargetFailed: return "TARGET_FAILED";
    case ErrorCode::kTooFewSamples: return "TOO_FEW_SAMPLES";
    case ErrorCode::kEmptyInput: return "EMPTY_INPUT";
    case ErrorCode::kConfigMismatch: return "CONFIG_MISMATCH";
    case ErrorCode::kMalformed: return "MALFORMED";
    case ErrorCode::kIoError: return "IO_ERROR";
    case ErrorCode::kConnectFailed: return "CONNECT_FAILED";
    case ErrorCode::kUnsupportedOperation: return "UNSUPPORTED_OPERATION";
  }
  return "UNKNOWN_ERROR";
}

std::string_view verdict_reason_name(VerdictReason reason) {
  switch (reason) {
    case VerdictReason::kSignatureInvalid: return "SIGNATURE_INVALID";
    case VerdictReason::kUnknownPlatform: return "UNKNOWN_PLATFORM";
    case VerdictReason::kMeasurementMismatch: return "MEASUREMENT_MISMATCH";
    case VerdictReason::kTeeTypeRejected: return "TEE_TYPE_REJECTED";
  }
  return "UNKNOWN_REASON";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kAttestationFailed:
    case ErrorCode::kKeyBindingMismatch:
    case ErrorCode::kMeasurementMismatch:
    case ErrorCode::kModelDigestMismatch:
    case ErrorCode::kRejectedPublicKey:
    case ErrorCode::kSealMismatch:
      return 2;
    case ErrorCode::kDecryptFail:
    case ErrorCode::kIntegrityFault:
    case ErrorCode::kEnclaveCrashed:
    case ErrorCode::kServiceCrashed:
    case ErrorCode::kDigestMismatch:
    case ErrorCode::kReplayDetected:
      return 3;
    case ErrorCode::kProtocolError:
    case ErrorCode::kChannelError:
    case ErrorCode::kHandshakeMalformed:
    case ErrorCode::kConnectFailed:
    case ErrorCode::kMessageTooLarge:
    case ErrorCode::kCounterExhausted:
    case ErrorCode::kMalformed:
      return 4;
    default:
      return 1;
  }
}

Error::Error(ErrorCode code, std::string detail)
    : std::runtime_error(compose(code, detail)),
      code_(code),
      detail_(std::move(detail)) {}

SyntaxError::SyntaxError(std::size_t line, std::string detail)
    : Error(ErrorCode::kSyntaxError,
            "line " + std::to_string(line) + ": " + detail),
      line_(line) {}

AttestationError::AttestationError(std::vector<VerdictReason> reasons,
                                   std::string detail)
    : Error(ErrorCode::kAttestationFailed,
            join_reasons(reasons) + (detail.empty() ? "" : " " + detail)),
      reasons_(std::move(reasons)) {}

StepAbort::StepAbort(int step, ErrorCode reason, std::string detail)
    : Error(ErrorCode::kAbortAtStep,
            "step " + std::to_string(step) + ", " +
                std::string(error_code_name(reason)) +
                (detail.empty() ? "" : " (" + detail + ")")),
      step_(step),
      reason_(reason) {}

}  // namespace fmtee
