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

#include <set>
#include <string>
#include <vector>

namespace detrap
{

  /// A function to be emitted: a body of plain assembly lines. The emitter
  /// owns the prologue and epilogue; the body must not write ra (except via
  /// calls) or the shadow stack pointer.
  struct FunctionSkeleton
  {
    std::string name;
    bool leaf = false;
    uint32_t frameSize = 16;            // bytes, multiple of 16
    std::vector<std::string> body;
    bool externalLinkage = false;
  };

  /// Output of instrumenting one function: assembly lines destined for the
  /// untrusted code section and for the trusted code section (the return
  /// address save trampoline).
  struct InstrumentedFragments
  {
    std::vector<std::string> untrusted;
    std::vector<std::string> trusted;
  };

  /// Emit the protected form of a function.
  ///
  /// Non-leaf functions get a split prologue: the function label jumps to a
  /// trusted trampoline that pushes ra onto the shadow stack, increments the
  /// shadow stack pointer, and jumps back to <name>$postjump, which sets up
  /// the stack frame and stores a second copy of ra to the untrusted stack.
  /// The epilogue pops ra from the shadow stack (the untrusted copy is never
  /// used for control flow). Direct calls to functions in nonLeafFunctions
  /// are retargeted to the callee's trampoline; for internal functions whose
  /// call sites are all retargeted, the prologue jump is omitted.
  ///
  /// Leaf functions keep ra in the register and get no trampoline.
  ///
  /// Throws SkeletonError if the body writes ra or the shadow stack pointer,
  /// a leaf body contains calls, or the frame size is invalid.
  InstrumentedFragments
  instrumentFunction(const FunctionSkeleton& fn,
                     const std::set<std::string>& nonLeafFunctions,
                     unsigned sspReg = 18);

  /// Emit the conventional unprotected form (classic prologue/epilogue with
  /// ra spilled to and reloaded from the untrusted stack). Used as the
  /// baseline for overhead accounting and for differential tests.
  std::vector<std::string>
  emitBaselineFunction(const FunctionSkeleton& fn);

  /// Build a complete image text from a set of functions: a trusted start
  /// stub that calls `entryFunction` and halts with its return value, a
  /// trusted console putchar routine, trampolines (when instrumented), and
  /// the functions themselves in untrusted code.
  struct ProgramBuild
  {
    std::vector<FunctionSkeleton> functions;
    std::string entryFunction = "main";
    std::string handlerFunction;        // optional untrusted trap handler
    std::vector<std::string> rodataLines;   // labels/.word lines for rodata
    std::vector<std::string> extraTrustedLines;
    std::vector<std::string> extraUntrustedLines;
  };

  std::string buildProgramText(const ProgramBuild& build, bool instrumented);

  /// Dynamic instruction overhead of one protected non-leaf call over the
  /// baseline form: three trampoline instructions plus one epilogue
  /// instruction.
  constexpr unsigned perCallOverhead = 4;

}
