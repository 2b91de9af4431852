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

#include <string>
#include <vector>

#include "detrap/Cfg.hpp"
#include "detrap/Image.hpp"
#include "detrap/Layout.hpp"

namespace detrap
{

  enum class Severity : uint8_t { Error, Warning };

  struct Finding
  {
    std::string rule;      // R1..R7, DECODE, UNREACHABLE
    uint32_t address = 0;
    std::string message;
    Severity severity = Severity::Error;
  };

  struct ScanReport
  {
    std::vector<Finding> findings;

    bool pass() const
    {
      for (const auto& finding : findings)
        if (finding.severity == Severity::Error)
          return false;
      return true;
    }

    unsigned countRule(const std::string& rule) const
    {
      unsigned n = 0;
      for (const auto& finding : findings)
        if (finding.rule == rule)
          ++n;
      return n;
    }
  };

  /// Static verification of untrusted code:
  ///   R1 return-address integrity: at every return, ra is either untouched
  ///      since the preceding call or was reloaded by the canonical
  ///      shadow-stack epilogue.
  ///   R2 SSP discipline: the shadow stack pointer is written only by the
  ///      canonical epilogue decrement paired with its reload.
  ///   R3 CSR policy: no modifying access to the debug/trap CSRs; set/clear
  ///      forms with a hard-wired zero source read without modifying.
  ///   R4 no mret.
  ///   R5 indirect jumps/calls are statically resolved, bounds-checked
  ///      jumptable dispatches, or whitelisted.
  ///   R6 static and jumptable destinations are 4-aligned inside code.
  ///   R7 bounds-check operands must not come from stack spills.
  ///
  /// Findings in trusted code are reported as warnings for the rules that
  /// apply there (decode failures, R1, R5, R6); the SSP/CSR/mret privileges
  /// belong to trusted code by design and are not reported for it.
  ScanReport scan(const Image& img, const MemoryMap& map,
                  const Whitelist& whitelist = {});

  /// Render as `RULE 0x<addr> message` lines.
  std::string formatReport(const ScanReport& report);

}
