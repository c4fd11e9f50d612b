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

#ifndef FMTEE_DEFENSES_H_
#define FMTEE_DEFENSES_H_

namespace fmtee {

// Switches for each protection the adversary harness exercises. Production
// binaries always see every field true: the library only carries a weak
// default definition of active_defenses(), and the override lives in the
// test-support library (tests/support), which the CLI never links.
struct DefenseSettings {
  bool channel_encryption = true;
  bool memory_encryption = true;
  bool memory_integrity = true;
  bool package_authentication = true;
  bool measurement_check = true;
  bool model_digest_check = true;
};

const DefenseSettings& active_defenses();

}  // namespace fmtee

#endif  // FMTEE_DEFENSES_H_
