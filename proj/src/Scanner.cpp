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

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include "detrap/Scanner.hpp"

using namespace detrap;

namespace
{

  std::string hexAddr(uint32_t addr)
  {
    std::ostringstream oss;
    oss << "0x" << std::setfill('0') << std::setw(8) << std::hex << addr;
    return oss.str();
  }

  // CSRs governing debugging and trap handling.
  bool isProtectedCsr(uint16_t csr)
  {
    return csr == csrTselect or csr == csrTdata1 or csr == csrTdata2 or
           csr == csrMtvec or csr == csrMepc or csr == csrMcause or
           csr == csrMstatus;
  }

  struct Scanner
  {
    const Image& img;
    const MemoryMap& map;
    const Whitelist& whitelist;
    Cfg cfg;
    ScanReport report;

    Scanner(const Image& image, const MemoryMap& memoryMap,
            const Whitelist& wl)
      : img(image), map(memoryMap), whitelist(wl), cfg(buildCfg(image, wl))
    { }

    void add(const char* rule, uint32_t addr, const std::string& message,
             Severity severity)
    {
      report.findings.push_back({ rule, addr, message, severity });
    }

    bool destinationOk(uint32_t dest) const
    {
      if (dest % 4 != 0)
        return false;
      const auto* section = img.sectionAt(dest);
      return section != nullptr and section->isCode();
    }

    void checkDecodeErrors()
    {
      for (uint32_t addr : cfg.decodeErrors)
        {
          bool trusted = img.isTrustedAddr(addr);
          add("DECODE", addr, "reachable word does not decode",
              trusted ? Severity::Warning : Severity::Error);
        }
    }

    // R1: provenance of ra at every return.
    void checkReturns()
    {
      for (const auto& [start, block] : cfg.blocks)
        {
          if (block.raStateIn == RaState::Bottom)
            continue;
          for (const auto& at : block.instrs)
            {
              if (not at.instr.isReturn())
                continue;
              auto [ra, ssp] = transferBlock(block, block.raStateIn,
                                             block.sspDeltaIn, at.addr);
              (void)ssp;
              if (ra == RaState::Clobbered)
                add("R1", at.addr,
                    "return with ra neither pristine nor reloaded from the "
                    "shadow stack",
                    block.trusted ? Severity::Warning : Severity::Error);
            }
        }
    }

    // R2: the shadow stack pointer is written only by the canonical
    // epilogue pair `addi x18, x18, -4; lw ra, 0(x18)`.
    void checkSspDiscipline()
    {
      for (const auto& [start, block] : cfg.blocks)
        {
          if (block.trusted)
            continue;   // trampolines legitimately increment the SSP
          for (size_t i = 0; i < block.instrs.size(); ++i)
            {
              const auto& at = block.instrs[i];
              if (not instrWritesReg(at.instr, regSsp))
                continue;

              bool canonicalDec = at.instr.op == Op::Addi and
                at.instr.rs1 == regSsp and at.instr.imm == -4;
              bool pairedWithReload = canonicalDec and
                i + 1 < block.instrs.size() and
                block.instrs[i + 1].instr.op == Op::Lw and
                block.instrs[i + 1].instr.rd == regRa and
                block.instrs[i + 1].instr.rs1 == regSsp and
                block.instrs[i + 1].instr.imm == 0;

              if (not pairedWithReload)
                add("R2", at.addr,
                    canonicalDec ?
                    "shadow stack pointer decrement without the paired "
                    "reload of ra" :
                    "shadow stack pointer written outside the canonical "
                    "epilogue",
                    Severity::Error);
            }
        }
    }

    // R3/R4: privileged instruction policy.
    void checkPrivileged()
    {
      for (const auto& [start, block] : cfg.blocks)
        {
          if (block.trusted)
            continue;
          for (const auto& at : block.instrs)
            {
              ClassTags tags = classify(at.instr);
              if (tags.isMret)
                add("R4", at.addr, "mret in untrusted code",
                    Severity::Error);
              if (tags.isCsrAccess and not tags.csrIsPureRead and
                  isProtectedCsr(at.instr.csr))
                add("R3", at.addr,
                    "modifying access to protected CSR " +
                    csrName(at.instr.csr),
                    Severity::Error);
            }
        }
    }

    // R5/R6 over indirect sites; R6 over direct branches and jumptables.
    void checkControlFlow()
    {
      for (const auto& [start, block] : cfg.blocks)
        {
          Severity severity = block.trusted ? Severity::Warning :
            Severity::Error;
          for (const auto& at : block.instrs)
            {
              const Instr& instr = at.instr;
              if (instr.opClass == OpClass::Branch or
                  instr.opClass == OpClass::Jal)
                {
                  uint32_t dest = at.addr + uint32_t(instr.imm);
                  if (not destinationOk(dest))
                    add("R6", at.addr,
                        "branch destination " + hexAddr(dest) +
                        " misaligned or outside code", severity);
                }

              if (instr.opClass == OpClass::Jalr and not instr.isReturn())
                {
                  auto it = cfg.indirectSites.find(at.addr);
                  if (it == cfg.indirectSites.end())
                    continue;   // not a block terminator; unreachable here
                  const auto& res = it->second;
                  switch (res.kind)
                    {
                    case IndirectResolution::Kind::Resolved:
                    case IndirectResolution::Kind::ConstantSlot:
                    case IndirectResolution::Kind::Whitelisted:
                      for (uint32_t dest : res.dests)
                        if (not destinationOk(dest))
                          add("R6", at.addr,
                              "indirect destination " + hexAddr(dest) +
                              " misaligned or outside code", severity);
                      break;
                    case IndirectResolution::Kind::Jumptable:
                      if (not res.boundsChecked or not res.alignChecked)
                        add("R5", at.addr, res.detail, severity);
                      break;
                    case IndirectResolution::Kind::Unresolved:
                      add("R5", at.addr,
                          res.detail.empty() ?
                          "indirect jump with unknown destination" :
                          res.detail,
                          severity);
                      break;
                    }
                }
            }
        }

      for (const auto& jt : img.jumptables)
        for (uint32_t i = 0; i < jt.entryCount; ++i)
          {
            uint32_t slot = jt.base + 4 * i;
            auto word = img.readWord(slot);
            if (not word or not destinationOk(*word))
              add("R6", slot,
                  "jumptable entry " + (word ? hexAddr(*word) :
                                        std::string("<unreadable>")) +
                  " misaligned or outside code",
                  Severity::Error);
          }
    }

    // R7: operands of unsigned bounds checks must not be stack spills.
    void checkSpills()
    {
      for (const auto& [start, block] : cfg.blocks)
        {
          if (block.trusted)
            continue;
          const auto& last = block.instrs.back();
          if (last.instr.op != Op::Bltu and last.instr.op != Op::Bgeu)
            continue;

          // Within the block, find the most recent definition of each
          // compared register and flag loads relative to the stack pointer.
          for (unsigned operand : { last.instr.rs1, last.instr.rs2 })
            {
              if (operand == 0)
                continue;
              const DecodedAt* def = nullptr;
              for (const auto& at : block.instrs)
                {
                  if (at.addr == last.addr)
                    break;
                  if (instrWritesReg(at.instr, operand))
                    def = &at;
                }
              if (def != nullptr and
                  def->instr.opClass == OpClass::Load and
                  def->instr.rs1 == regSp)
                add("R7", def->addr,
                    "bounds-check operand loaded from the stack",
                    Severity::Error);
            }
        }
    }

    void checkUnreachable()
    {
      for (const auto& [addr, size] : cfg.unreachableGaps)
        add("UNREACHABLE", addr,
            "unreachable symbol-less bytes (" + std::to_string(size) + ")",
            Severity::Warning);
    }

    ScanReport run()
    {
      checkDecodeErrors();
      checkReturns();
      checkSspDiscipline();
      checkPrivileged();
      checkControlFlow();
      checkSpills();
      checkUnreachable();

      std::sort(report.findings.begin(), report.findings.end(),
                [](const Finding& a, const Finding& b) {
                  if (a.address != b.address)
                    return a.address < b.address;
                  return a.rule < b.rule;
                });
      return std::move(report);
    }
  };

}


ScanReport
detrap::scan(const Image& img, const MemoryMap& map,
             const Whitelist& whitelist)
{
  Scanner scanner(img, map, whitelist);
  return scanner.run();
}


std::string
detrap::formatReport(const ScanReport& report)
{
  std::ostringstream out;
  for (const auto& finding : report.findings)
    out << finding.rule << ' ' << hexAddr(finding.address) << ' '
        << finding.message
        << (finding.severity == Severity::Warning ? " (warning)" : "")
        << '\n';
  return out.str();
}
