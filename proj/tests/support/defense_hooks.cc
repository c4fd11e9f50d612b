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

#include "defense_hooks.h"

#include <atomic>

namespace fmtee {
namespace {

const DefenseSettings kAllEnabled{};
std::atomic<const DefenseSettings*> g_current{&kAllEnabled};

}  // namespace

const DefenseSettings& active_defenses() { return *g_current.load(); }

namespace testing {

ScopedDefenses::ScopedDefenses(const DefenseSettings& settings)
    : previous_(g_current.load()) {
  // Leaked on purpose: service threads may still read it after we restore.
  g_current.store(new DefenseSettings(settings));
}

ScopedDefenses::~ScopedDefenses() { g_current.store(previous_); }

DefenseSettings without_defense_for(AttackKind kind) {
  DefenseSettings s;
  switch (kind) {
    case AttackKind::kEavesdropNetwork: s.channel_encryption = false; break;
    case AttackKind::kEavesdropMemory: s.memory_encryption = false; break;
    case AttackKind::kTamperMemory: s.memory_integrity = false; break;
    case AttackKind::kTamperPackage: s.package_authentication = false; break;
    case AttackKind::kCspSwapModel: s.model_digest_check = false; break;
    case AttackKind::kCspSwapSoftware: s.measurement_check = false; break;
  }
  return s;
}

const char* defense_for(AttackKind kind) {
  switch (kind) {
    case AttackKind::kEavesdropNetwork: return "channel_encryption";
    case AttackKind::kEavesdropMemory: return "memory_encryption";
    case AttackKind::kTamperMemory: return "memory_integrity";
    case AttackKind::kTamperPackage: return "package_authentication";
    case AttackKind::kCspSwapModel: return "model_digest_check";
    case AttackKind::kCspSwapSoftware: return "measurement_check";
  }
  return "?";
}

}  // namespace testing
}  // namespace fmtee
