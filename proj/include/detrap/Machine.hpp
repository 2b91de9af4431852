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

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "detrap/Image.hpp"
#include "detrap/Isa.hpp"
#include "detrap/Layout.hpp"
#include "detrap/Triggers.hpp"

namespace detrap
{

  /// Why a run was terminated by the trusted runtime.
  enum class TerminationReason : uint8_t
  {
    WriteViolation,     // write-protection chain fired
    ShadowOverflow,     // store on the top shadow-stack entry
    TrustedFault,       // exception with origin pc in privileged code
    HandlerViolation,   // untrusted handler broke the trap-frame rules
    LongjmpViolation,   // longjmp without a valid trusted-map entry
    MretViolation,      // mret executed by untrusted code
    UnhandledTrap,      // exception in untrusted code with no handler
  };

  const char* terminationReasonName(TerminationReason reason);

  enum class MachineStatus : uint8_t { Running, Halted, Terminated };

  /// Machine exception/interrupt causes (mcause values).
  namespace trapCause
  {
    constexpr uint32_t fetchMisaligned = 0;
    constexpr uint32_t fetchFault = 1;
    constexpr uint32_t illegalInstruction = 2;
    constexpr uint32_t breakpoint = 3;
    constexpr uint32_t loadMisaligned = 4;
    constexpr uint32_t loadFault = 5;
    constexpr uint32_t storeMisaligned = 6;
    constexpr uint32_t storeFault = 7;
    constexpr uint32_t ecallMachine = 11;
    constexpr uint32_t timerInterrupt = 0x80000007;
  }

  struct StepOutcome
  {
    enum class Kind : uint8_t { Retired, Trapped, Halted, Terminated };
    Kind kind = Kind::Retired;
    uint32_t cause = 0;   // mcause when kind == Trapped
  };

  /// Trap frame layout on the shadow stack (and the untrusted copy):
  /// word 0 = saved pc (mepc), word 1 = mcause, words 2..32 = x1..x31.
  struct TrapFrame
  {
    static constexpr uint32_t wordCount = 33;
    static constexpr uint32_t byteSize = wordCount * 4;
    static constexpr uint32_t pcOffset = 0;
    static constexpr uint32_t causeOffset = 4;

    static constexpr uint32_t regOffset(unsigned reg)
    { return 8 + 4 * (reg - 1); }
  };

  /// One setjmp snapshot in the trusted map.
  struct JmpEntry
  {
    uint32_t bufId = 0;
    uint32_t pc = 0;
    uint32_t sp = 0;
    uint32_t ssp = 0;
    std::array<uint32_t, 12> calleeSaved{};   // x8, x9, x18..x27
    bool valid = false;
  };

  /// Deterministic RV32 interpreter with the trigger unit evaluated before
  /// any side effect of each instruction commits, plus the trusted-runtime
  /// model: trap dispatch, shadow-stack trap frames, the untrusted handler
  /// protocol, and the setjmp/longjmp trusted map.
  ///
  /// The trusted runtime executes at host level; its architectural effects
  /// (trap frames, register restores) are written into simulated state. The
  /// untrusted trap handler returns through a sentinel address installed in
  /// ra; reaching it hands control back to the trusted runtime.
  class Machine
  {
  public:
    /// Console output byte: MMIO base + 0x1000, writable by trusted code.
    static constexpr uint32_t consoleOffset = 0x1000;

    /// Sentinel return address for the untrusted trap handler.
    static constexpr uint32_t handlerReturnGate = 0xfffffff0;

    /// Build a machine: memory from the image (bss zeroed), pc at the entry
    /// point, sp at the top of the untrusted stack, the shadow stack pointer
    /// at the shadow-stack base, and the policy installed through the WARL
    /// trigger CSRs. Throws LoadError when a section lies outside its
    /// region and PolicyTruncated when the policy does not survive WARL
    /// legalization intact.
    Machine(const Image& img, const MemoryMap& map,
            const std::vector<TriggerConfig>& policy,
            unsigned triggerCount = 4, unsigned maxChainLength = 2);

    StepOutcome step();

    /// Step until the machine stops or maxSteps is exhausted (then
    /// hitStepLimit() reports true).
    void run(uint64_t maxSteps);

    /// Raise a timer interrupt: taken before the next fetch when
    /// mstatus.MIE is set and the trusted runtime is not already handling a
    /// trap; otherwise it stays pending.
    void injectInterrupt();

    /// Trusted-runtime entry points for setjmp/longjmp (Appendix-style
    /// trusted map). Record snapshots the current pc/sp/SSP/callee-saved
    /// registers under bufId. Apply restores them, then invalidates every
    /// entry whose saved SSP is above the restored one; applying an unknown
    /// or invalidated bufId terminates with LongjmpViolation.
    void setjmpRecord(uint32_t bufId);
    void longjmpApply(uint32_t bufId);

    /// Epilogue hook of a function that called setjmp: drop entries made
    /// during its activation (those with saved SSP above the current SSP).
    void setjmpEpilogueHook();

    // Inspection.
    MachineStatus status() const        { return status_; }
    uint32_t haltCode() const           { return haltCode_; }
    std::optional<TerminationReason> terminationReason() const
    { return terminationReason_; }
    bool hitStepLimit() const           { return hitStepLimit_; }

    uint32_t pc() const                 { return pc_; }
    uint32_t reg(unsigned index) const  { return regs_.at(index); }
    void setReg(unsigned index, uint32_t value)
    { if (index != 0) regs_.at(index) = value; }
    void setPc(uint32_t pc)             { pc_ = pc; }

    uint64_t retired() const            { return retired_; }
    uint64_t traps() const              { return traps_; }
    uint64_t policyViolations() const   { return policyViolations_; }

    const std::string& console() const  { return console_; }
    const MemoryMap& map() const        { return map_; }
    const TriggerFile& triggers() const { return triggerFile_; }
    const std::vector<JmpEntry>& trustedMap() const { return trustedMap_; }
    bool interruptPending() const       { return interruptPending_; }

    uint32_t peekCsr(uint16_t csr) const;
    uint8_t peekByte(uint32_t addr) const;
    std::vector<uint8_t> snapshot(uint32_t lo, uint32_t hi) const;
    void pokeWord(uint32_t addr, uint32_t value);

    /// Count how often the instruction at an address retires (used for
    /// trampoline-entry accounting).
    void watchAddress(uint32_t addr)
    { watched_[addr] = 0; }
    uint64_t watchedCount(uint32_t addr) const;

    /// Trace sink: when set, one line per retired instruction.
    void setTrace(std::string* sink)
    { trace_ = sink; }

  private:
    enum class HandlerMode : uint8_t { None, Exception, Interrupt };

    bool readMem(uint32_t addr, unsigned size, uint32_t& value) const;
    bool writeMem(uint32_t addr, unsigned size, uint32_t value);

    void terminate(TerminationReason reason);
    StepOutcome takeTrap(uint32_t cause, uint32_t originPc, uint32_t tval);
    bool pushShadowFrame(uint32_t cause, uint32_t epc);
    void finishHandler();

    std::optional<uint32_t> csrRead(uint16_t csr) const;
    bool csrWrite(uint16_t csr, uint32_t value);

    StepOutcome execute(const Instr& instr, const InstrContext& ctx);

    MemoryMap map_;
    TriggerFile triggerFile_;
    std::vector<uint8_t> memory_;

    uint32_t pc_ = 0;
    std::array<uint32_t, 32> regs_{};

    uint32_t mstatus_ = 0x8;   // MIE set
    uint32_t mtvec_ = 0;
    uint32_t mscratch_ = 0;
    uint32_t mepc_ = 0;
    uint32_t mcause_ = 0;
    uint32_t mtval_ = 0;
    uint64_t mcycle_ = 0;

    MachineStatus status_ = MachineStatus::Running;
    uint32_t haltCode_ = 0;
    std::optional<TerminationReason> terminationReason_;
    bool hitStepLimit_ = false;

    uint64_t retired_ = 0;
    uint64_t traps_ = 0;
    uint64_t policyViolations_ = 0;

    bool interruptPending_ = false;
    HandlerMode handlerMode_ = HandlerMode::None;
    uint32_t shadowFrameBase_ = 0;
    uint32_t untrustedFrameBase_ = 0;
    std::optional<uint32_t> untrustedHandler_;

    std::vector<JmpEntry> trustedMap_;
    std::string console_;
    std::map<uint32_t, uint64_t> watched_;
    std::string* trace_ = nullptr;
  };

}
