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
#include <deque>
#include <set>
#include <sstream>

#include "detrap/Cfg.hpp"
#include "detrap/Errors.hpp"

using namespace detrap;


RaState
detrap::joinRaState(RaState a, RaState b)
{
  if (a == RaState::Bottom)
    return b;
  if (b == RaState::Bottom)
    return a;
  return a == b ? a : RaState::Clobbered;
}


const BasicBlock*
Cfg::blockContaining(uint32_t addr) const
{
  auto it = blocks.upper_bound(addr);
  if (it == blocks.begin())
    return nullptr;
  --it;
  return addr < it->second.end ? &it->second : nullptr;
}


std::vector<const Edge*>
Cfg::edgesFrom(uint32_t instrAddr) const
{
  std::vector<const Edge*> out;
  for (const auto& edge : edges)
    if (edge.from == instrAddr)
      out.push_back(&edge);
  return out;
}


std::vector<const Edge*>
Cfg::edgesInto(uint32_t blockStart) const
{
  std::vector<const Edge*> out;
  for (const auto& edge : edges)
    if (edge.to == blockStart and edge.kind != EdgeKind::Return)
      out.push_back(&edge);
  return out;
}


Whitelist
detrap::parseWhitelist(const std::string& text, const Image& img)
{
  Whitelist wl;
  std::istringstream input(text);
  std::string line;
  unsigned lineNo = 0;

  auto parseHex = [](std::string tok) -> std::optional<uint32_t> {
    if (tok.size() > 2 and tok[0] == '0' and (tok[1] == 'x' or tok[1] == 'X'))
      tok = tok.substr(2);
    if (tok.empty())
      return std::nullopt;
    uint64_t value = 0;
    for (char c : tok)
      {
        char lc = std::tolower(static_cast<unsigned char>(c));
        int digit;
        if (lc >= '0' and lc <= '9')
          digit = lc - '0';
        else if (lc >= 'a' and lc <= 'f')
          digit = lc - 'a' + 10;
        else
          return std::nullopt;
        value = value * 16 + digit;
        if (value > 0xffffffffull)
          return std::nullopt;
      }
    return uint32_t(value);
  };

  while (std::getline(input, line))
    {
      ++lineNo;
      auto hash = line.find('#');
      if (hash != std::string::npos)
        line.erase(hash);

      std::istringstream fields(line);
      std::string word;
      std::vector<std::string> tokens;
      while (fields >> word)
        tokens.push_back(word);
      if (tokens.empty())
        continue;

      if (tokens.size() != 5 or tokens[0] != "allow" or tokens[3] != "->")
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(lineNo) +
                    ": expected `allow <symbol> <pc> -> <dest>[,<dest>...]`");

      Whitelist::Site site;
      site.symbol = tokens[1];
      if (img.symbolByName(site.symbol) == nullptr)
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(lineNo) + ": UNKNOWN-SYMBOL " +
                    site.symbol);

      auto pc = parseHex(tokens[2]);
      if (not pc)
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(lineNo) + ": bad pc " +
                    tokens[2]);
      site.pc = *pc;

      std::istringstream dests(tokens[4]);
      std::string dest;
      while (std::getline(dests, dest, ','))
        {
          auto addr = parseHex(dest);
          if (not addr)
            throw Error(ErrorCode::ParseError,
                        "line " + std::to_string(lineNo) + ": bad dest " +
                        dest);
          site.dests.push_back(*addr);
        }
      if (site.dests.empty())
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(lineNo) + ": no destinations");
      wl.sites.push_back(std::move(site));
    }

  return wl;
}


bool
detrap::instrWritesReg(const Instr& instr, unsigned reg)
{
  if (instr.rd != reg or reg == 0)
    return false;
  switch (instr.opClass)
    {
    case OpClass::Store:
    case OpClass::Branch:
    case OpClass::Fence:
    case OpClass::System:
      return false;
    default:
      return true;
    }
}


std::pair<RaState, std::optional<int32_t>>
detrap::transferBlock(const BasicBlock& block, RaState ra,
                      std::optional<int32_t> sspDelta,
                      std::optional<uint32_t> stopBefore)
{
  const DecodedAt* prev = nullptr;
  for (const auto& at : block.instrs)
    {
      if (stopBefore and at.addr == *stopBefore)
        break;
      const Instr& instr = at.instr;

      if (instr.isCall())
        ra = RaState::Pristine;
      else if (instrWritesReg(instr, regRa))
        {
          bool canonicalPop = instr.op == Op::Lw and instr.rs1 == regSsp and
            instr.imm == 0 and prev != nullptr and
            prev->instr.op == Op::Addi and prev->instr.rd == regSsp and
            prev->instr.rs1 == regSsp and prev->instr.imm == -4;
          ra = canonicalPop ? RaState::SavedToShadow : RaState::Clobbered;
        }

      if (instrWritesReg(instr, regSsp))
        {
          if (instr.op == Op::Addi and instr.rs1 == regSsp and sspDelta)
            sspDelta = *sspDelta + instr.imm;
          else
            sspDelta = std::nullopt;
        }
      prev = &at;
    }
  return { ra, sspDelta };
}


namespace
{

  bool isTerminator(const Instr& instr)
  {
    return instr.opClass == OpClass::Jal or instr.opClass == OpClass::Jalr or
           instr.opClass == OpClass::Branch or instr.op == Op::Mret;
  }

  // ---- Linear symbolic values over block-entry registers -------------

  struct Affine
  {
    bool valid = false;
    int64_t constant = 0;
    std::map<unsigned, int64_t> terms;

    static Affine constVal(int64_t c)
    {
      Affine a;
      a.valid = true;
      a.constant = c;
      return a;
    }

    static Affine var(unsigned reg)
    {
      Affine a;
      a.valid = true;
      a.terms[reg] = 1;
      return a;
    }

    bool isConst() const
    { return valid and terms.empty(); }

    void normalize()
    {
      for (auto it = terms.begin(); it != terms.end();)
        it = it->second == 0 ? terms.erase(it) : std::next(it);
    }

    Affine plus(const Affine& other) const
    {
      if (not valid or not other.valid)
        return {};
      Affine out = *this;
      out.constant += other.constant;
      for (const auto& [reg, coeff] : other.terms)
        out.terms[reg] += coeff;
      out.normalize();
      return out;
    }

    Affine minus(const Affine& other) const
    {
      if (not valid or not other.valid)
        return {};
      Affine out = *this;
      out.constant -= other.constant;
      for (const auto& [reg, coeff] : other.terms)
        out.terms[reg] -= coeff;
      out.normalize();
      return out;
    }

    Affine scaled(int64_t factor) const
    {
      if (not valid)
        return {};
      Affine out = *this;
      out.constant *= factor;
      for (auto& [reg, coeff] : out.terms)
        coeff *= factor;
      out.normalize();
      return out;
    }

    bool operator==(const Affine&) const = default;
  };

  struct Fact
  {
    enum class Kind : uint8_t { UnsignedLess, AlignedTo4 };
    Kind kind = Kind::UnsignedLess;
    Affine lhs;
    int64_t bound = 0;          // UnsignedLess only
    uint32_t checkAddr = 0;
  };

  struct TraceState
  {
    std::array<Affine, 32> regs;
    std::array<Affine, 32> loadedFrom;   // load address, when reg came from lw
    std::array<Affine, 32> maskedLow2;   // operand, when reg = operand & 3

    TraceState()
    {
      for (unsigned r = 0; r < 32; ++r)
        regs[r] = Affine::var(r);
      regs[0] = Affine::constVal(0);
    }

    void clobber(unsigned rd)
    {
      if (rd == 0)
        return;
      regs[rd] = {};
      loadedFrom[rd] = {};
      maskedLow2[rd] = {};
    }

    void assign(unsigned rd, const Affine& value)
    {
      if (rd == 0)
        return;
      clobber(rd);
      regs[rd] = value;
    }
  };

  void evalInstr(TraceState& state, const DecodedAt& at, const Image& img)
  {
    const Instr& instr = at.instr;
    switch (instr.op)
      {
      case Op::Lui:
        state.assign(instr.rd, Affine::constVal(uint32_t(instr.imm)));
        break;
      case Op::Auipc:
        state.assign(instr.rd,
                     Affine::constVal(uint32_t(at.addr) +
                                      uint32_t(instr.imm)));
        break;
      case Op::Addi:
        state.assign(instr.rd,
                     state.regs[instr.rs1].plus(
                       Affine::constVal(instr.imm)));
        break;
      case Op::Add:
        state.assign(instr.rd,
                     state.regs[instr.rs1].plus(state.regs[instr.rs2]));
        break;
      case Op::Sub:
        state.assign(instr.rd,
                     state.regs[instr.rs1].minus(state.regs[instr.rs2]));
        break;
      case Op::Slli:
        state.assign(instr.rd,
                     state.regs[instr.rs1].scaled(int64_t(1) << instr.imm));
        break;
      case Op::Andi:
        if (instr.imm == 3)
          {
            Affine operand = state.regs[instr.rs1];
            state.clobber(instr.rd);
            if (instr.rd != 0)
              state.maskedLow2[instr.rd] = operand;
          }
        else if (state.regs[instr.rs1].isConst())
          state.assign(instr.rd,
                       Affine::constVal(state.regs[instr.rs1].constant &
                                        instr.imm));
        else
          state.clobber(instr.rd);
        break;
      case Op::Lw:
        {
          Affine addr = state.regs[instr.rs1].plus(
            Affine::constVal(instr.imm));
          state.clobber(instr.rd);
          if (instr.rd != 0)
            {
              state.loadedFrom[instr.rd] = addr;
              // A load from a constant, readable slot is itself constant.
              if (addr.isConst())
                if (auto word = img.readWord(uint32_t(addr.constant)))
                  state.regs[instr.rd] = Affine::constVal(*word);
            }
        }
        break;
      default:
        if (instr.opClass == OpClass::Store or
            instr.opClass == OpClass::Branch or instr.op == Op::Fence)
          break;   // no register written
        state.clobber(instr.rd);
        break;
      }
  }

  // Fact implied by a conditional branch for the edge leading to `next`.
  std::optional<Fact> factForEdge(const TraceState& state,
                                  const DecodedAt& branch, uint32_t nextStart)
  {
    const Instr& instr = branch.instr;
    if (instr.opClass != OpClass::Branch)
      return std::nullopt;

    uint32_t takenAddr = branch.addr + uint32_t(instr.imm);
    uint32_t fallAddr = branch.addr + 4;
    bool viaTaken = nextStart == takenAddr;
    bool viaFall = nextStart == fallAddr;
    if (viaTaken == viaFall)
      return std::nullopt;   // ambiguous (taken == fall-through)

    auto lessFact = [&](unsigned lo, unsigned hi) -> std::optional<Fact> {
      const Affine& lhs = state.regs[lo];
      const Affine& rhs = state.regs[hi];
      if (not lhs.valid or not rhs.isConst())
        return std::nullopt;
      Fact fact;
      fact.kind = Fact::Kind::UnsignedLess;
      fact.lhs = lhs;
      fact.bound = rhs.constant;
      fact.checkAddr = branch.addr;
      return fact;
    };

    auto zeroFact = [&](unsigned reg) -> std::optional<Fact> {
      if (not state.maskedLow2[reg].valid)
        return std::nullopt;
      Fact fact;
      fact.kind = Fact::Kind::AlignedTo4;
      fact.lhs = state.maskedLow2[reg];
      fact.checkAddr = branch.addr;
      return fact;
    };

    switch (instr.op)
      {
      case Op::Bltu:
        if (viaTaken)
          return lessFact(instr.rs1, instr.rs2);
        break;
      case Op::Bgeu:
        if (viaFall)
          return lessFact(instr.rs1, instr.rs2);
        break;
      case Op::Beq:
        if (viaTaken and instr.rs2 == 0)
          return zeroFact(instr.rs1);
        break;
      case Op::Bne:
        if (viaFall and instr.rs2 == 0)
          return zeroFact(instr.rs1);
        break;
      default:
        break;
      }
    return std::nullopt;
  }

}


namespace
{

  struct Builder
  {
    const Image& img;
    const Whitelist& whitelist;
    Cfg cfg;

    std::set<uint32_t> roots;
    std::map<uint32_t, Instr> discovered;
    std::set<uint32_t> decodeErrors;
    std::set<Edge> edges;

    explicit Builder(const Image& image, const Whitelist& wl)
      : img(image), whitelist(wl)
    { }

    bool inCode(uint32_t addr) const
    {
      const auto* section = img.sectionAt(addr);
      return section != nullptr and section->isCode();
    }

    void collectRoots()
    {
      auto add = [&](uint32_t addr) {
        if (addr % 4 == 0 and inCode(addr))
          roots.insert(addr);
      };

      add(img.entryPoint);
      if (img.untrustedHandler)
        add(*img.untrustedHandler);
      for (const auto& symbol : img.symbols)
        if (symbol.kind == SymbolKind::Function)
          add(symbol.address);
      for (const auto& jt : img.jumptables)
        for (uint32_t i = 0; i < jt.entryCount; ++i)
          if (auto word = img.readWord(jt.base + 4 * i))
            add(*word);
      for (const auto& site : whitelist.sites)
        for (uint32_t dest : site.dests)
          add(dest);
    }

    void sweep()
    {
      std::deque<uint32_t> queue(roots.begin(), roots.end());
      while (not queue.empty())
        {
          uint32_t addr = queue.front();
          queue.pop_front();

          while (true)
            {
              if (addr % 4 != 0 or not inCode(addr))
                break;
              if (discovered.count(addr) or decodeErrors.count(addr))
                break;

              auto word = img.readWord(addr);
              if (not word)
                break;
              Instr instr;
              if (not tryDecode(*word, instr))
                {
                  decodeErrors.insert(addr);
                  break;
                }
              discovered.emplace(addr, instr);

              if (instr.opClass == OpClass::Branch)
                {
                  uint32_t target = addr + uint32_t(instr.imm);
                  edges.insert({ addr, target, EdgeKind::Branch });
                  edges.insert({ addr, addr + 4, EdgeKind::FallThrough });
                  queue.push_back(target);
                  queue.push_back(addr + 4);
                  break;
                }
              if (instr.opClass == OpClass::Jal)
                {
                  uint32_t target = addr + uint32_t(instr.imm);
                  if (instr.rd == 0)
                    {
                      edges.insert({ addr, target, EdgeKind::Branch });
                      queue.push_back(target);
                    }
                  else
                    {
                      edges.insert({ addr, target, EdgeKind::Call });
                      edges.insert({ addr, addr + 4,
                                     EdgeKind::CallFallThrough });
                      queue.push_back(target);
                      queue.push_back(addr + 4);
                    }
                  break;
                }
              if (instr.opClass == OpClass::Jalr)
                {
                  if (instr.isReturn())
                    edges.insert({ addr, 0, EdgeKind::Return });
                  else if (instr.rd != 0)
                    {
                      edges.insert({ addr, addr + 4,
                                     EdgeKind::CallFallThrough });
                      queue.push_back(addr + 4);
                    }
                  break;
                }
              if (instr.op == Op::Mret)
                break;

              addr += 4;
            }
        }
    }

    void formBlocks()
    {
      std::set<uint32_t> leaders = roots;
      for (const auto& edge : edges)
        if (edge.to != 0)
          leaders.insert(edge.to);

      cfg.blocks.clear();
      BasicBlock* current = nullptr;
      uint32_t prevAddr = 0;
      bool prevTerminated = true;

      for (const auto& [addr, instr] : discovered)
        {
          bool startNew = prevTerminated or leaders.count(addr) or
            addr != prevAddr + 4;
          if (startNew)
            {
              BasicBlock block;
              block.start = addr;
              block.trusted = img.isTrustedAddr(addr);
              current = &cfg.blocks.emplace(addr, std::move(block))
                .first->second;
            }
          current->instrs.push_back({ addr, instr });
          current->end = addr + 4;
          prevAddr = addr;
          prevTerminated = isTerminator(instr);
        }

      // A block that runs into a leader needs a plain fall-through edge.
      for (auto& [start, block] : cfg.blocks)
        {
          const auto& last = block.instrs.back();
          if (not isTerminator(last.instr) and
              discovered.count(block.end))
            edges.insert({ last.addr, block.end, EdgeKind::FallThrough });
        }
    }

    // Straight-line predecessor chain ending at `block`, longest first.
    std::vector<const BasicBlock*> traceChain(const BasicBlock* block)
    {
      std::vector<const BasicBlock*> chain{ block };
      const BasicBlock* cursor = block;
      for (unsigned depth = 0; depth < 4; ++depth)
        {
          std::vector<const Edge*> in;
          for (const auto& edge : edges)
            if (edge.to == cursor->start and
                (edge.kind == EdgeKind::FallThrough or
                 edge.kind == EdgeKind::Branch))
              in.push_back(&edge);
          if (in.size() != 1)
            break;
          const BasicBlock* prev = cfg.blockContaining(in.front()->from);
          if (prev == nullptr or prev == cursor)
            break;
          chain.insert(chain.begin(), prev);
          cursor = prev;
        }
      return chain;
    }

    IndirectResolution resolveSite(const DecodedAt& site)
    {
      IndirectResolution res;

      if (const auto* wlSite = whitelist.at(site.addr))
        {
          res.kind = IndirectResolution::Kind::Whitelisted;
          res.dests = wlSite->dests;
          res.detail = "whitelisted via " + wlSite->symbol;
          return res;
        }

      const BasicBlock* block = cfg.blockContaining(site.addr);
      if (block == nullptr)
        return res;

      auto chain = traceChain(block);
      TraceState state;
      std::vector<Fact> facts;

      for (size_t i = 0; i < chain.size(); ++i)
        {
          for (const auto& at : chain[i]->instrs)
            {
              if (at.addr == site.addr)
                break;
              // Facts derive from the state just before the terminator.
              if (i + 1 < chain.size() and
                  at.addr == chain[i]->terminator().addr)
                {
                  if (auto fact = factForEdge(state, at, chain[i + 1]->start))
                    facts.push_back(*fact);
                }
              evalInstr(state, at, img);
            }
        }

      unsigned targetReg = site.instr.rs1;
      const Affine& value = state.regs[targetReg];
      const Affine& loadAddr = state.loadedFrom[targetReg];

      if (value.isConst())
        {
          uint32_t dest =
            (uint32_t(value.constant) + uint32_t(site.instr.imm)) & ~1u;
          res.kind = IndirectResolution::Kind::Resolved;
          res.dests = { dest };
          res.detail = "statically computed destination";
          return res;
        }

      if (not loadAddr.valid)
        {
          res.detail = "target register has unknown provenance";
          return res;
        }

      // Constant slot of a known table.
      if (loadAddr.isConst())
        {
          uint32_t slot = uint32_t(loadAddr.constant);
          for (size_t jtIx = 0; jtIx < img.jumptables.size(); ++jtIx)
            {
              const auto& jt = img.jumptables[jtIx];
              if (slot >= jt.base and slot + 4 <= jt.limit() and
                  (slot - jt.base) % 4 == 0)
                {
                  if (auto word = img.readWord(slot))
                    {
                      res.kind = IndirectResolution::Kind::ConstantSlot;
                      res.jumptableIndex = jtIx;
                      res.dests = { *word };
                      res.detail = "fixed jumptable slot";
                      return res;
                    }
                }
            }
          res.detail = "constant load address outside every jumptable";
          return res;
        }

      // Dynamic offset into a table: need bounds (and alignment) evidence.
      // The byte offset `rem` covers both dispatch shapes: a scaled index
      // (table base plus 4*i) and a raw checked pointer (p minus base).
      for (size_t jtIx = 0; jtIx < img.jumptables.size(); ++jtIx)
        {
          const auto& jt = img.jumptables[jtIx];
          Affine rem = loadAddr.minus(Affine::constVal(jt.base));
          if (not rem.valid or rem.terms.size() != 1)
            continue;

          int64_t coeff = rem.terms.begin()->second;
          unsigned var = rem.terms.begin()->first;
          if (coeff != 1 and coeff != 4)
            continue;

          // An unsigned bound on rem also proves it non-negative.
          bool bounds = false;
          bool aligned = coeff == 4 and rem.constant % 4 == 0;
          for (const auto& fact : facts)
            {
              if (fact.kind == Fact::Kind::UnsignedLess)
                {
                  // Fact over the byte offset itself.
                  if (fact.lhs == rem and
                      fact.bound <= int64_t(jt.entryCount) * 4)
                    bounds = true;
                  // Fact over the unscaled index.
                  Affine index = Affine::var(var);
                  if (coeff == 4 and rem.constant == 0 and
                      fact.lhs == index and
                      fact.bound <= int64_t(jt.entryCount))
                    bounds = true;
                }
              else if (fact.kind == Fact::Kind::AlignedTo4 and
                       fact.lhs == rem)
                aligned = true;
            }

          res.kind = IndirectResolution::Kind::Jumptable;
          res.jumptableIndex = jtIx;
          res.boundsChecked = bounds;
          res.alignChecked = aligned;
          for (const auto& fact : facts)
            res.checkAddrs.push_back(fact.checkAddr);
          for (uint32_t i = 0; i < jt.entryCount; ++i)
            if (auto word = img.readWord(jt.base + 4 * i))
              res.dests.push_back(*word);
          if (not bounds)
            res.detail = "jumptable dispatch without an in-bounds check";
          else if (not aligned)
            res.detail = "jumptable dispatch without an alignment check";
          else
            res.detail = "bounds-checked jumptable dispatch";
          return res;
        }

      res.detail = "load address not anchored to a jumptable";
      return res;
    }

    void resolveIndirects()
    {
      for (const auto& [start, block] : cfg.blocks)
        {
          const auto& last = block.instrs.back();
          if (last.instr.opClass != OpClass::Jalr or last.instr.isReturn())
            continue;

          IndirectResolution res = resolveSite(last);

          bool propagating = last.instr.rd == 0;
          bool usable =
            res.kind == IndirectResolution::Kind::Resolved or
            res.kind == IndirectResolution::Kind::ConstantSlot or
            res.kind == IndirectResolution::Kind::Whitelisted or
            (res.kind == IndirectResolution::Kind::Jumptable and
             res.boundsChecked and res.alignChecked);
          if (usable)
            for (uint32_t dest : res.dests)
              {
                EdgeKind kind = not propagating ? EdgeKind::Call :
                  res.kind == IndirectResolution::Kind::Jumptable ?
                  EdgeKind::IndirectJumptable : EdgeKind::IndirectResolved;
                edges.insert({ last.addr, dest, kind });
              }

          cfg.indirectSites[last.addr] = std::move(res);
        }
    }

    void dataflow()
    {
      // Seed every root as a potential activation entry.
      for (uint32_t root : roots)
        if (auto it = cfg.blocks.find(root); it != cfg.blocks.end())
          {
            it->second.raStateIn = RaState::Pristine;
            it->second.sspDeltaIn = 0;
          }

      bool changed = true;
      unsigned iterations = 0;
      while (changed and iterations < 1000)
        {
          changed = false;
          ++iterations;
          for (const auto& edge : edges)
            {
              if (edge.to == 0)
                continue;
              auto destIt = cfg.blocks.find(edge.to);
              if (destIt == cfg.blocks.end())
                continue;
              BasicBlock& dest = destIt->second;

              RaState incomingRa;
              std::optional<int32_t> incomingSsp;
              if (edge.kind == EdgeKind::Call)
                {
                  incomingRa = RaState::Pristine;   // fresh activation
                  incomingSsp = 0;
                }
              else
                {
                  const BasicBlock* src = cfg.blockContaining(edge.from);
                  if (src == nullptr or src->raStateIn == RaState::Bottom)
                    continue;
                  auto [ra, ssp] = transferBlock(*src, src->raStateIn,
                                                 src->sspDeltaIn);
                  incomingRa = ra;
                  incomingSsp = ssp;
                }

              RaState joined = joinRaState(dest.raStateIn, incomingRa);
              std::optional<int32_t> joinedSsp = dest.sspDeltaIn;
              if (dest.raStateIn == RaState::Bottom)
                joinedSsp = incomingSsp;
              else if (joinedSsp != incomingSsp)
                joinedSsp = std::nullopt;

              if (joined != dest.raStateIn or joinedSsp != dest.sspDeltaIn)
                {
                  dest.raStateIn = joined;
                  dest.sspDeltaIn = joinedSsp;
                  changed = true;
                }
            }
        }
    }

    void findGaps()
    {
      for (const auto& section : img.sections)
        {
          if (not section.isCode() or section.bytes.empty())
            continue;

          std::vector<std::pair<uint32_t, uint32_t>> covered;
          for (const auto& [start, block] : cfg.blocks)
            if (start >= section.base and start < section.limit())
              covered.push_back({ block.start, block.end });
          for (uint32_t err : decodeErrors)
            if (section.contains(err))
              covered.push_back({ err, err + 4 });
          for (const auto& jt : img.jumptables)
            if (section.contains(jt.base))
              covered.push_back({ jt.base, jt.limit() });

          std::sort(covered.begin(), covered.end());
          uint32_t cursor = section.base;
          auto flushGap = [&](uint32_t gapEnd) {
            if (gapEnd <= cursor)
              return;
            bool hasSymbol = false;
            for (const auto& symbol : img.symbols)
              if (symbol.address >= cursor and symbol.address < gapEnd)
                hasSymbol = true;
            if (not hasSymbol)
              cfg.unreachableGaps.push_back({ cursor, gapEnd - cursor });
          };

          for (const auto& [lo, hi] : covered)
            {
              flushGap(lo);
              cursor = std::max(cursor, hi);
            }
          flushGap(section.limit());
        }
    }

    Cfg build()
    {
      collectRoots();

      // Indirect resolution can surface new destinations; iterate until the
      // reachable set is stable.
      for (unsigned round = 0; round < 8; ++round)
        {
          discovered.clear();
          decodeErrors.clear();
          edges.clear();
          cfg.blocks.clear();
          cfg.indirectSites.clear();

          sweep();
          formBlocks();
          resolveIndirects();

          std::set<uint32_t> newRoots;
          for (const auto& [addr, res] : cfg.indirectSites)
            for (uint32_t dest : res.dests)
              if (dest % 4 == 0 and inCode(dest) and
                  not discovered.count(dest))
                newRoots.insert(dest);

          if (newRoots.empty())
            break;
          roots.insert(newRoots.begin(), newRoots.end());
        }

      dataflow();
      findGaps();

      cfg.decodeErrors.assign(decodeErrors.begin(), decodeErrors.end());
      cfg.edges.assign(edges.begin(), edges.end());
      return std::move(cfg);
    }
  };

}


Cfg
detrap::buildCfg(const Image& img, const Whitelist& whitelist)
{
  Builder builder(img, whitelist);
  return builder.build();
}
