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

#pragma once

#include <random>
#include <string>
#include <vector>

#include "detrap/Image.hpp"
#include "detrap/Instrument.hpp"
#include "detrap/Layout.hpp"
#include "detrap/Machine.hpp"

namespace fixtures
{

  using namespace detrap;

  const MemoryMap& defaultMap();
  const std::vector<TriggerConfig>& defaultPolicy();

  Machine makeMachine(const std::string& programText);
  Machine makeMachine(const std::string& programText, const MemoryMap& map);

  /// hello: main prints "hi\n" through the trusted console routine.
  std::string helloProgram(bool instrumented);

  /// A straight line of `calls` invocations of one non-leaf function.
  std::string callChainProgram(unsigned calls, bool instrumented);

  /// Only leaf functions (no shadow-stack traffic at all).
  std::string leafOnlyProgram(bool instrumented);

  /// Nested non-leaf calls `depth` functions deep.
  std::string nestedCallProgram(unsigned depth, bool instrumented);

  /// Mixed leaf and non-leaf call tree.
  std::string mixedProgram(bool instrumented);

  /// Recursion to `depth`, 16-byte frames.
  std::string recursionProgram(unsigned depth, bool instrumented);

  /// main overwrites its own on-stack ra copy with the address of the
  /// `payload` function before returning.
  std::string attackProgram(bool instrumented);

  /// switch dispatch through a 4-entry jumptable; selector in a0 decides
  /// which case runs, each case returns a distinct value.
  std::string switchProgram(bool instrumented);

  /// indirect call through a jumptable with the pointer-form CFI check.
  std::string icallProgram(bool instrumented);

  /// Exception handler fixtures: main executes an undecodable word; the
  /// handler edits its frame copy per `mode`:
  ///   "skip"    - bump the saved pc by 4 (resume after the bad word)
  ///   "divert"  - set the saved pc to an arbitrary address
  ///   "corrupt" - overwrite the frame's ra and SSP slots, then skip
  std::string handlerProgram(const std::string& mode);

  /// Interrupt handler that stores a flag to untrusted data.
  std::string interruptProgram(bool handlerWritesFrame);

  /// Handler that dispatches on the saved cause: exceptions get the pc+4
  /// edit, interrupts store a flag and leave the frame alone. main raises
  /// one illegal-instruction exception.
  std::string dualHandlerProgram();

  /// Random straight-line skeleton set for generative tests.
  std::vector<FunctionSkeleton> randomSkeletons(std::mt19937& rng,
                                                unsigned count);

  /// Program text from a skeleton set (trusted stub + functions).
  std::string programFromSkeletons(const std::vector<FunctionSkeleton>& fns,
                                   bool instrumented);

}
