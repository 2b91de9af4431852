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

#include <cstdint>
#include <optional>
#include <vector>

namespace detrap
{

  /// What a trigger compares against.
  enum class TriggerTarget : uint8_t
  {
    ExecPc = 0, ExecOpcode = 1, LoadAddr = 2, StoreAddr = 3,
    LoadData = 4, StoreData = 5
  };

  /// How the trigger compares. All comparisons are unsigned.
  enum class TriggerRelation : uint8_t
  {
    Eq = 0, Neq = 1, Geq = 2, Lt = 3, Mask = 4
  };

  const char* triggerTargetName(TriggerTarget target);
  const char* triggerRelationName(TriggerRelation relation);
  std::optional<TriggerTarget> triggerTargetByName(const std::string& name);
  std::optional<TriggerRelation> triggerRelationByName(const std::string& name);

  /// One debug trigger. The chain flag links this trigger with the
  /// next-indexed one; a chained group only fires when every member matches
  /// the same instruction.
  struct TriggerConfig
  {
    TriggerTarget target = TriggerTarget::ExecPc;
    TriggerRelation relation = TriggerRelation::Eq;
    uint32_t compare = 0;
    uint32_t mask = 0;       // Mask relation only; no CSR mapping
    bool chain = false;
    bool enabled = false;

    bool operator==(const TriggerConfig&) const = default;
  };

  /// Everything a trigger can observe about one instruction. The simulator
  /// presents the program counter, the fetched opcode, and the instruction's
  /// memory access (if any) as a single atomic context so that chains mixing
  /// PC and memory conditions evaluate against the same instruction.
  struct InstrContext
  {
    uint32_t pc = 0;
    uint32_t opcode = 0;

    struct MemAccess
    {
      bool isStore = false;
      uint32_t address = 0;
      uint32_t data = 0;
    };
    std::optional<MemAccess> memAccess;

    static InstrContext exec(uint32_t pc, uint32_t opcode = 0)
    { return InstrContext{ pc, opcode, std::nullopt }; }

    static InstrContext store(uint32_t pc, uint32_t addr, uint32_t data = 0,
                              uint32_t opcode = 0)
    { return InstrContext{ pc, opcode, MemAccess{ true, addr, data } }; }

    static InstrContext load(uint32_t pc, uint32_t addr, uint32_t data = 0,
                             uint32_t opcode = 0)
    { return InstrContext{ pc, opcode, MemAccess{ false, addr, data } }; }
  };

  /// Result of a firing trigger chain.
  struct TriggerHit
  {
    unsigned firstIndex = 0;
    unsigned chainLength = 1;

    bool operator==(const TriggerHit&) const = default;
  };

  /// The trigger unit: a small file of WARL trigger registers plus the
  /// match/chain evaluation logic.
  ///
  /// tdata1 packing (project-local): [31:28] type=2 (match control),
  /// [27] enabled, [26:24] target, [23:21] relation, [20] chain. Other bits
  /// read as zero. tdata2 holds the compare value. The Mask relation's mask
  /// has no CSR mapping and is set through setTrigger only.
  class TriggerFile
  {
  public:
    explicit TriggerFile(unsigned count = 4, unsigned maxChainLength = 2);

    unsigned count() const
    { return unsigned(triggers_.size()); }

    unsigned maxChainLength() const
    { return maxChainLength_; }

    /// WARL CSR interface. Never faults; any value is accepted and
    /// legalized. Unknown csr indices are ignored on write and read as 0.
    void writeCsr(uint16_t csr, uint32_t value);
    uint32_t readCsr(uint16_t csr) const;

    /// Install a trigger directly (legalized like a CSR write).
    void setTrigger(unsigned index, const TriggerConfig& config);
    const TriggerConfig& trigger(unsigned index) const
    { return triggers_.at(index); }

    unsigned tselect() const
    { return tselect_; }

    /// Evaluate all triggers against one instruction context. Pure: no
    /// state changes. Returns the lowest-indexed chain run in which every
    /// trigger is enabled and matches, or nothing.
    std::optional<TriggerHit> evaluate(const InstrContext& ctx) const;

    /// Pack/unpack between TriggerConfig (ignoring compare/mask) and the
    /// tdata1 layout above.
    static uint32_t packTdata1(const TriggerConfig& config);
    static TriggerConfig unpackTdata1(uint32_t value);

  private:
    // Re-apply the file-level chain constraints (max run length, last
    // trigger unchained) after any single-trigger update.
    void legalizeChains();

    std::vector<TriggerConfig> triggers_;
    unsigned tselect_ = 0;
    unsigned maxChainLength_ = 2;
  };

  /// True when the trigger's condition holds for the context.
  bool triggerMatches(const TriggerConfig& config, const InstrContext& ctx);

}
