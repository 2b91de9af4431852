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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "detrap/Image.hpp"
#include "detrap/Isa.hpp"

namespace detrap
{

  /// Provenance of the return-address register along a path.
  enum class RaState : uint8_t
  {
    Bottom,         // not yet computed
    Pristine,       // unmodified since the preceding call
    SavedToShadow,  // reloaded from the shadow stack by a canonical epilogue
    Clobbered,
  };

  RaState joinRaState(RaState a, RaState b);

  enum class EdgeKind : uint8_t
  {
    FallThrough, Branch, Call, CallFallThrough, Return,
    IndirectResolved, IndirectJumptable
  };

  struct DecodedAt
  {
    uint32_t addr = 0;
    Instr instr;
  };

  struct BasicBlock
  {
    uint32_t start = 0;
    uint32_t end = 0;               // one past the last instruction
    std::vector<DecodedAt> instrs;
    bool trusted = false;

    // Entry facts from the fixpoint dataflow.
    RaState raStateIn = RaState::Bottom;
    std::optional<int32_t> sspDeltaIn = 0;   // nullopt = unknown

    const DecodedAt& terminator() const
    { return instrs.back(); }
  };

  struct Edge
  {
    uint32_t from = 0;     // address of the transferring instruction
    uint32_t to = 0;       // destination address (0 for returns)
    EdgeKind kind = EdgeKind::FallThrough;

    auto operator<=>(const Edge&) const = default;
  };

  /// How an indirect jump or call site was resolved.
  struct IndirectResolution
  {
    enum class Kind : uint8_t
    {
      Resolved,       // destination statically computed (auipc chain)
      ConstantSlot,   // load from one fixed in-bounds jumptable slot
      Jumptable,      // fans out to every entry of one jumptable
      Whitelisted,
      Unresolved,
    };

    Kind kind = Kind::Unresolved;
    std::vector<uint32_t> dests;
    size_t jumptableIndex = 0;          // for ConstantSlot/Jumptable
    bool boundsChecked = false;         // Jumptable: bound covers the table
    bool alignChecked = false;          // Jumptable: offset alignment ensured
    std::vector<uint32_t> checkAddrs;   // bounds-check branch addresses
    std::string detail;
  };

  /// Vetted indirect jumps that bypass the jumptable discipline.
  struct Whitelist
  {
    struct Site
    {
      std::string symbol;
      uint32_t pc = 0;
      std::vector<uint32_t> dests;
    };
    std::vector<Site> sites;

    const Site* at(uint32_t pc) const
    {
      for (const auto& site : sites)
        if (site.pc == pc)
          return &site;
      return nullptr;
    }
  };

  /// Parse `allow <symbol> <pc-hex> -> <dest-hex>[,<dest-hex>...]` lines.
  /// The symbol must exist in the image. Throws ParseError.
  Whitelist parseWhitelist(const std::string& text, const Image& img);

  struct Cfg
  {
    std::map<uint32_t, BasicBlock> blocks;   // keyed by start address
    std::vector<Edge> edges;                 // sorted, unique
    std::map<uint32_t, IndirectResolution> indirectSites;
    std::vector<uint32_t> decodeErrors;      // reachable undecodable words
    std::vector<std::pair<uint32_t, uint32_t>> unreachableGaps;   // addr,size

    const BasicBlock* blockContaining(uint32_t addr) const;
    std::vector<const Edge*> edgesFrom(uint32_t instrAddr) const;
    std::vector<const Edge*> edgesInto(uint32_t blockStart) const;
  };

  /// Recover the control-flow graph of all reachable code: roots are the
  /// entry point, function symbols, jumptable entries, and the untrusted
  /// handler. Direct edges are resolved statically; auipc-based indirect
  /// jumps are resolved to their computed destination; jumptable dispatches
  /// fan out to every table entry. Whitelisted sites contribute their
  /// declared destinations.
  Cfg buildCfg(const Image& img, const Whitelist& whitelist = {});

  /// True when the instruction architecturally writes the register.
  bool instrWritesReg(const Instr& instr, unsigned reg);

  /// Transfer the block-entry facts through the block. With stopBefore set,
  /// stops just before that instruction address (for per-site queries).
  std::pair<RaState, std::optional<int32_t>>
  transferBlock(const BasicBlock& block, RaState ra,
                std::optional<int32_t> sspDelta,
                std::optional<uint32_t> stopBefore = std::nullopt);

}
