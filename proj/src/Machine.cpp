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

#include <iomanip>
#include <sstream>

#include "detrap/Errors.hpp"
#include "detrap/Machine.hpp"

using namespace detrap;

namespace
{
  constexpr uint32_t mieBit = 0x8;
  constexpr uint32_t mpieBit = 0x80;
}


const char*
detrap::terminationReasonName(TerminationReason reason)
{
  switch (reason)
    {
    case TerminationReason::WriteViolation:   return "WriteViolation";
    case TerminationReason::ShadowOverflow:   return "ShadowOverflow";
    case TerminationReason::TrustedFault:     return "TrustedFault";
    case TerminationReason::HandlerViolation: return "HandlerViolation";
    case TerminationReason::LongjmpViolation: return "LongjmpViolation";
    case TerminationReason::MretViolation:    return "MretViolation";
    case TerminationReason::UnhandledTrap:    return "UnhandledTrap";
    }
  return "?";
}


Machine::Machine(const Image& img, const MemoryMap& map,
                 const std::vector<TriggerConfig>& policy,
                 unsigned triggerCount, unsigned maxChainLength)
  : map_(map), triggerFile_(triggerCount, maxChainLength),
    memory_(map.end(), 0)
{
  for (const auto& section : img.sections)
    {
      if (section.kind == SectionKind::Mmio)
        throw Error(ErrorCode::LoadError,
                    "section " + section.name + " overlaps MMIO");
      const auto& region = map_.region(section.kind);
      if (section.base < region.base or section.limit() > region.limit)
        throw Error(ErrorCode::LoadError,
                    "section " + section.name + " outside its region");
      std::copy(section.bytes.begin(), section.bytes.end(),
                memory_.begin() + section.base);
    }

  if (policy.size() > triggerFile_.count())
    throw Error(ErrorCode::PolicyTruncated,
                "POLICY-TRUNCATED: " + std::to_string(policy.size()) +
                " triggers on a " + std::to_string(triggerFile_.count()) +
                "-trigger file");

  for (unsigned i = 0; i < policy.size(); ++i)
    {
      triggerFile_.writeCsr(csrTselect, i);
      triggerFile_.writeCsr(csrTdata1, TriggerFile::packTdata1(policy[i]));
      triggerFile_.writeCsr(csrTdata2, policy[i].compare);

      TriggerConfig readBack =
        TriggerFile::unpackTdata1(triggerFile_.readCsr(csrTdata1));
      readBack.compare = triggerFile_.readCsr(csrTdata2);
      readBack.mask = policy[i].mask;
      if (not (readBack == policy[i]))
        throw Error(ErrorCode::PolicyTruncated,
                    "POLICY-TRUNCATED: trigger " + std::to_string(i) +
                    " did not survive WARL legalization");
    }
  triggerFile_.writeCsr(csrTselect, 0);

  pc_ = img.entryPoint;
  regs_.fill(0);
  regs_[regSp] = map_.region(SectionKind::UntrustedStack).limit;
  regs_[regSsp] = map_.region(SectionKind::ShadowStack).base;
  untrustedHandler_ = img.untrustedHandler;
}


bool
Machine::readMem(uint32_t addr, unsigned size, uint32_t& value) const
{
  if (addr + size > memory_.size() or addr + size < addr)
    return false;
  value = 0;
  for (unsigned i = 0; i < size; ++i)
    value |= uint32_t(memory_[addr + i]) << (8 * i);
  return true;
}


bool
Machine::writeMem(uint32_t addr, unsigned size, uint32_t value)
{
  if (addr + size > memory_.size() or addr + size < addr)
    return false;
  for (unsigned i = 0; i < size; ++i)
    memory_[addr + i] = uint8_t((value >> (8 * i)) & 0xff);

  uint32_t consoleAddr = map_.region(SectionKind::Mmio).base + consoleOffset;
  if (addr == consoleAddr)
    console_.push_back(char(value & 0xff));
  return true;
}


void
Machine::terminate(TerminationReason reason)
{
  status_ = MachineStatus::Terminated;
  terminationReason_ = reason;
}


bool
Machine::pushShadowFrame(uint32_t cause, uint32_t epc)
{
  uint32_t base = regs_[regSsp];
  // The trusted runtime never writes the top shadow-stack entry; a frame
  // that would reach it is an imminent overflow.
  if (base + TrapFrame::byteSize > map_.shadowStackTopEntry or
      base < map_.region(SectionKind::ShadowStack).base)
    {
      terminate(TerminationReason::ShadowOverflow);
      return false;
    }

  writeMem(base + TrapFrame::pcOffset, 4, epc);
  writeMem(base + TrapFrame::causeOffset, 4, cause);
  for (unsigned r = 1; r < 32; ++r)
    writeMem(base + TrapFrame::regOffset(r), 4, regs_[r]);

  shadowFrameBase_ = base;
  regs_[regSsp] = base + TrapFrame::byteSize;
  return true;
}


StepOutcome
Machine::takeTrap(uint32_t cause, uint32_t originPc, uint32_t tval)
{
  traps_ += 1;
  mcause_ = cause;
  mepc_ = originPc;
  mtval_ = tval;

  bool interrupt = (cause & 0x80000000u) != 0;

  if (not interrupt)
    {
      if (map_.inPrivilegedCode(originPc))
        {
          terminate(TerminationReason::TrustedFault);
          return { StepOutcome::Kind::Trapped, cause };
        }
      if (handlerMode_ != HandlerMode::None)
        {
          // The trusted handler is not reentrant.
          terminate(TerminationReason::HandlerViolation);
          return { StepOutcome::Kind::Trapped, cause };
        }
      if (not untrustedHandler_)
        {
          terminate(TerminationReason::UnhandledTrap);
          return { StepOutcome::Kind::Trapped, cause };
        }
    }

  if (not pushShadowFrame(cause, originPc))
    return { StepOutcome::Kind::Trapped, cause };

  if (interrupt)
    {
      interruptPending_ = false;
      if (not untrustedHandler_)
        {
          // Nothing to run; unwind immediately and resume.
          regs_[regSsp] = shadowFrameBase_;
          return { StepOutcome::Kind::Trapped, cause };
        }
      handlerMode_ = HandlerMode::Interrupt;
      // Handler reads the frame in place on the shadow stack; any store to
      // it trips the write-protection chain.
      regs_[10] = shadowFrameBase_;
    }
  else
    {
      // Copy the frame onto the untrusted stack for the handler to edit.
      uint32_t spTop = (regs_[regSp] - TrapFrame::byteSize) & ~15u;
      if (spTop < map_.writeLimitedTop or
          spTop + TrapFrame::byteSize > memory_.size())
        {
          terminate(TerminationReason::UnhandledTrap);
          return { StepOutcome::Kind::Trapped, cause };
        }
      for (uint32_t off = 0; off < TrapFrame::byteSize; off += 4)
        {
          uint32_t word = 0;
          readMem(shadowFrameBase_ + off, 4, word);
          writeMem(spTop + off, 4, word);
        }
      handlerMode_ = HandlerMode::Exception;
      untrustedFrameBase_ = spTop;
      regs_[regSp] = spTop;
      regs_[10] = spTop;
    }

  // Architectural interrupt-enable stack.
  if (mstatus_ & mieBit)
    mstatus_ |= mpieBit;
  else
    mstatus_ &= ~mpieBit;
  mstatus_ &= ~mieBit;

  regs_[regRa] = handlerReturnGate;
  pc_ = *untrustedHandler_;
  return { StepOutcome::Kind::Trapped, cause };
}


void
Machine::finishHandler()
{
  uint32_t savedPc = 0;
  readMem(shadowFrameBase_ + TrapFrame::pcOffset, 4, savedPc);

  if (handlerMode_ == HandlerMode::Exception)
    {
      uint32_t editedPc = 0;
      readMem(untrustedFrameBase_ + TrapFrame::pcOffset, 4, editedPc);
      if (editedPc != savedPc and editedPc != savedPc + 4)
        {
          terminate(TerminationReason::HandlerViolation);
          return;
        }

      // General registers come from the editable copy; ra and the shadow
      // stack pointer always come from the protected frame.
      for (unsigned r = 2; r < 32; ++r)
        {
          if (r == regSsp)
            continue;
          uint32_t value = 0;
          readMem(untrustedFrameBase_ + TrapFrame::regOffset(r), 4, value);
          regs_[r] = value;
        }
      uint32_t shadowRa = 0, shadowSsp = 0;
      readMem(shadowFrameBase_ + TrapFrame::regOffset(regRa), 4, shadowRa);
      readMem(shadowFrameBase_ + TrapFrame::regOffset(regSsp), 4, shadowSsp);
      regs_[regRa] = shadowRa;
      regs_[regSsp] = shadowSsp;
      pc_ = editedPc;
    }
  else
    {
      // Interrupt: the frame is read-only; restore everything from it.
      for (unsigned r = 1; r < 32; ++r)
        {
          uint32_t value = 0;
          readMem(shadowFrameBase_ + TrapFrame::regOffset(r), 4, value);
          regs_[r] = value;
        }
      pc_ = savedPc;
    }

  // Pop the shadow frame.
  regs_[regSsp] = shadowFrameBase_;
  handlerMode_ = HandlerMode::None;

  if (mstatus_ & mpieBit)
    mstatus_ |= mieBit;
  else
    mstatus_ &= ~mieBit;
  mstatus_ |= mpieBit;
}


std::optional<uint32_t>
Machine::csrRead(uint16_t csr) const
{
  switch (csr)
    {
    case csrMstatus:  return mstatus_;
    case csrMtvec:    return mtvec_;
    case csrMscratch: return mscratch_;
    case csrMepc:     return mepc_;
    case csrMcause:   return mcause_;
    case csrMtval:    return mtval_;
    case csrMcycle:   return uint32_t(mcycle_);
    case csrMinstret: return uint32_t(retired_);
    case csrTselect:
    case csrTdata1:
    case csrTdata2:
      return triggerFile_.readCsr(csr);
    }
  return std::nullopt;
}


bool
Machine::csrWrite(uint16_t csr, uint32_t value)
{
  switch (csr)
    {
    case csrMstatus:  mstatus_ = value; return true;
    case csrMtvec:    mtvec_ = value; return true;
    case csrMscratch: mscratch_ = value; return true;
    case csrMepc:     mepc_ = value; return true;
    case csrMcause:   mcause_ = value; return true;
    case csrMtval:    mtval_ = value; return true;
    case csrMcycle:   mcycle_ = value; return true;
    case csrMinstret: retired_ = value; return true;
    case csrTselect:
    case csrTdata1:
    case csrTdata2:
      triggerFile_.writeCsr(csr, value);
      return true;
    }
  return false;
}


uint32_t
Machine::peekCsr(uint16_t csr) const
{
  return csrRead(csr).value_or(0);
}


uint8_t
Machine::peekByte(uint32_t addr) const
{
  return addr < memory_.size() ? memory_[addr] : 0;
}


std::vector<uint8_t>
Machine::snapshot(uint32_t lo, uint32_t hi) const
{
  if (lo >= hi or hi > memory_.size())
    return {};
  return std::vector<uint8_t>(memory_.begin() + lo, memory_.begin() + hi);
}


void
Machine::pokeWord(uint32_t addr, uint32_t value)
{
  writeMem(addr, 4, value);
}


uint64_t
Machine::watchedCount(uint32_t addr) const
{
  auto it = watched_.find(addr);
  return it == watched_.end() ? 0 : it->second;
}


void
Machine::injectInterrupt()
{
  if (status_ == MachineStatus::Running)
    interruptPending_ = true;
}


StepOutcome
Machine::step()
{
  if (status_ == MachineStatus::Halted)
    return { StepOutcome::Kind::Halted, 0 };
  if (status_ == MachineStatus::Terminated)
    return { StepOutcome::Kind::Terminated, 0 };

  mcycle_ += 1;

  // Untrusted handler finished: hand control back to the trusted runtime.
  if (handlerMode_ != HandlerMode::None and pc_ == handlerReturnGate)
    {
      finishHandler();
      if (status_ != MachineStatus::Running)
        return { StepOutcome::Kind::Terminated, 0 };
    }

  // Pending interrupt, unless the trusted runtime is mid-handling.
  if (interruptPending_ and handlerMode_ == HandlerMode::None and
      (mstatus_ & mieBit))
    return takeTrap(trapCause::timerInterrupt, pc_, 0);

  // Fetch.
  if (pc_ % 4 != 0)
    return takeTrap(trapCause::fetchMisaligned, pc_, pc_);
  uint32_t word = 0;
  if (not readMem(pc_, 4, word))
    return takeTrap(trapCause::fetchFault, pc_, pc_);

  Instr instr;
  if (not tryDecode(word, instr))
    return takeTrap(trapCause::illegalInstruction, pc_, word);

  // Full per-instruction context: pc, opcode, and the memory access the
  // instruction is about to perform.
  InstrContext ctx;
  ctx.pc = pc_;
  ctx.opcode = word;
  if (instr.opClass == OpClass::Load)
    {
      uint32_t addr = regs_[instr.rs1] + uint32_t(instr.imm);
      unsigned size = instr.op == Op::Lb or instr.op == Op::Lbu ? 1 :
        instr.op == Op::Lh or instr.op == Op::Lhu ? 2 : 4;
      uint32_t data = 0;
      readMem(addr, size, data);
      if (instr.op == Op::Lb)
        data = uint32_t(int32_t(int8_t(data)));
      else if (instr.op == Op::Lh)
        data = uint32_t(int32_t(int16_t(data)));
      ctx.memAccess = InstrContext::MemAccess{ false, addr, data };
    }
  else if (instr.opClass == OpClass::Store)
    {
      uint32_t addr = regs_[instr.rs1] + uint32_t(instr.imm);
      uint32_t data = regs_[instr.rs2];
      if (instr.op == Op::Sb)
        data &= 0xff;
      else if (instr.op == Op::Sh)
        data &= 0xffff;
      ctx.memAccess = InstrContext::MemAccess{ true, addr, data };
    }

  // Triggers fire before the instruction's effects commit.
  if (auto hit = triggerFile_.evaluate(ctx))
    {
      policyViolations_ += 1;
      traps_ += 1;
      mcause_ = trapCause::breakpoint;
      mepc_ = pc_;
      mtval_ = ctx.memAccess ? ctx.memAccess->address : pc_;

      // Classify the fired chain: the single equality trigger on the top
      // shadow-stack entry guards overflow; anything else is the
      // write-protection policy.
      bool overflowGuard = false;
      for (unsigned k = hit->firstIndex;
           k < hit->firstIndex + hit->chainLength; ++k)
        {
          const auto& config = triggerFile_.trigger(k);
          if (config.target == TriggerTarget::StoreAddr and
              config.relation == TriggerRelation::Eq)
            overflowGuard = true;
        }
      terminate(overflowGuard ? TerminationReason::ShadowOverflow :
                TerminationReason::WriteViolation);
      return { StepOutcome::Kind::Trapped, trapCause::breakpoint };
    }

  return execute(instr, ctx);
}


StepOutcome
Machine::execute(const Instr& instr, const InstrContext& ctx)
{
  uint32_t nextPc = pc_ + 4;
  auto rs1 = regs_[instr.rs1];
  auto rs2 = regs_[instr.rs2];
  uint32_t result = 0;
  bool writeRd = false;

  switch (instr.op)
    {
    case Op::Lui:
      result = uint32_t(instr.imm);
      writeRd = true;
      break;
    case Op::Auipc:
      result = pc_ + uint32_t(instr.imm);
      writeRd = true;
      break;

    case Op::Jal:
      result = pc_ + 4;
      writeRd = true;
      nextPc = pc_ + uint32_t(instr.imm);
      break;
    case Op::Jalr:
      result = pc_ + 4;
      writeRd = true;
      nextPc = (rs1 + uint32_t(instr.imm)) & ~1u;
      break;

    case Op::Beq:  if (rs1 == rs2) nextPc = pc_ + uint32_t(instr.imm); break;
    case Op::Bne:  if (rs1 != rs2) nextPc = pc_ + uint32_t(instr.imm); break;
    case Op::Blt:
      if (int32_t(rs1) < int32_t(rs2)) nextPc = pc_ + uint32_t(instr.imm);
      break;
    case Op::Bge:
      if (int32_t(rs1) >= int32_t(rs2)) nextPc = pc_ + uint32_t(instr.imm);
      break;
    case Op::Bltu: if (rs1 < rs2) nextPc = pc_ + uint32_t(instr.imm); break;
    case Op::Bgeu: if (rs1 >= rs2) nextPc = pc_ + uint32_t(instr.imm); break;

    case Op::Lb: case Op::Lh: case Op::Lw: case Op::Lbu: case Op::Lhu:
      {
        const auto& access = *ctx.memAccess;
        unsigned size = instr.op == Op::Lb or instr.op == Op::Lbu ? 1 :
          instr.op == Op::Lh or instr.op == Op::Lhu ? 2 : 4;
        if (access.address % size != 0)
          return takeTrap(trapCause::loadMisaligned, pc_, access.address);
        uint32_t raw = 0;
        if (not readMem(access.address, size, raw))
          return takeTrap(trapCause::loadFault, pc_, access.address);
        if (instr.op == Op::Lb)
          result = uint32_t(int32_t(int8_t(raw)));
        else if (instr.op == Op::Lh)
          result = uint32_t(int32_t(int16_t(raw)));
        else
          result = raw;
        writeRd = true;
      }
      break;

    case Op::Sb: case Op::Sh: case Op::Sw:
      {
        const auto& access = *ctx.memAccess;
        unsigned size = instr.op == Op::Sb ? 1 : instr.op == Op::Sh ? 2 : 4;
        if (access.address % size != 0)
          return takeTrap(trapCause::storeMisaligned, pc_, access.address);
        if (not writeMem(access.address, size, access.data))
          return takeTrap(trapCause::storeFault, pc_, access.address);
      }
      break;

    case Op::Addi:  result = rs1 + uint32_t(instr.imm); writeRd = true; break;
    case Op::Slti:
      result = int32_t(rs1) < instr.imm ? 1 : 0;
      writeRd = true;
      break;
    case Op::Sltiu:
      result = rs1 < uint32_t(instr.imm) ? 1 : 0;
      writeRd = true;
      break;
    case Op::Xori:  result = rs1 ^ uint32_t(instr.imm); writeRd = true; break;
    case Op::Ori:   result = rs1 | uint32_t(instr.imm); writeRd = true; break;
    case Op::Andi:  result = rs1 & uint32_t(instr.imm); writeRd = true; break;
    case Op::Slli:  result = rs1 << unsigned(instr.imm); writeRd = true; break;
    case Op::Srli:  result = rs1 >> unsigned(instr.imm); writeRd = true; break;
    case Op::Srai:
      result = uint32_t(int32_t(rs1) >> unsigned(instr.imm));
      writeRd = true;
      break;

    case Op::Add:   result = rs1 + rs2; writeRd = true; break;
    case Op::Sub:   result = rs1 - rs2; writeRd = true; break;
    case Op::Sll:   result = rs1 << (rs2 & 31); writeRd = true; break;
    case Op::Slt:
      result = int32_t(rs1) < int32_t(rs2) ? 1 : 0;
      writeRd = true;
      break;
    case Op::Sltu:  result = rs1 < rs2 ? 1 : 0; writeRd = true; break;
    case Op::Xor:   result = rs1 ^ rs2; writeRd = true; break;
    case Op::Srl:   result = rs1 >> (rs2 & 31); writeRd = true; break;
    case Op::Sra:
      result = uint32_t(int32_t(rs1) >> (rs2 & 31));
      writeRd = true;
      break;
    case Op::Or:    result = rs1 | rs2; writeRd = true; break;
    case Op::And:   result = rs1 & rs2; writeRd = true; break;

    case Op::Mul:
      result = uint32_t(int64_t(int32_t(rs1)) * int64_t(int32_t(rs2)));
      writeRd = true;
      break;
    case Op::Mulh:
      result = uint32_t((int64_t(int32_t(rs1)) * int64_t(int32_t(rs2))) >> 32);
      writeRd = true;
      break;
    case Op::Mulhsu:
      result = uint32_t((int64_t(int32_t(rs1)) * int64_t(uint64_t(rs2))) >> 32);
      writeRd = true;
      break;
    case Op::Mulhu:
      result = uint32_t((uint64_t(rs1) * uint64_t(rs2)) >> 32);
      writeRd = true;
      break;
    case Op::Div:
      if (rs2 == 0)
        result = 0xffffffff;
      else if (rs1 == 0x80000000 and rs2 == 0xffffffff)
        result = 0x80000000;
      else
        result = uint32_t(int32_t(rs1) / int32_t(rs2));
      writeRd = true;
      break;
    case Op::Divu:
      result = rs2 == 0 ? 0xffffffff : rs1 / rs2;
      writeRd = true;
      break;
    case Op::Rem:
      if (rs2 == 0)
        result = rs1;
      else if (rs1 == 0x80000000 and rs2 == 0xffffffff)
        result = 0;
      else
        result = uint32_t(int32_t(rs1) % int32_t(rs2));
      writeRd = true;
      break;
    case Op::Remu:
      result = rs2 == 0 ? rs1 : rs1 % rs2;
      writeRd = true;
      break;

    case Op::Ecall:
      if (map_.inPrivilegedCode(pc_))
        {
          // Environment exit: trusted code hands back a status code.
          status_ = MachineStatus::Halted;
          haltCode_ = regs_[10];
          if (trace_ != nullptr)
            {
              std::ostringstream line;
              line << "pc=0x" << std::hex << std::setfill('0')
                   << std::setw(8) << pc_ << " instr=0x" << std::setw(8)
                   << instr.raw << '\n';
              trace_->append(line.str());
            }
          retired_ += 1;
          return { StepOutcome::Kind::Halted, 0 };
        }
      return takeTrap(trapCause::ecallMachine, pc_, 0);

    case Op::Ebreak:
      return takeTrap(trapCause::breakpoint, pc_, pc_);

    case Op::Mret:
      if (not map_.inPrivilegedCode(pc_))
        {
          // Scanned code never contains mret; this backstops unscanned code.
          terminate(TerminationReason::MretViolation);
          return { StepOutcome::Kind::Terminated, 0 };
        }
      nextPc = mepc_;
      if (mstatus_ & mpieBit)
        mstatus_ |= mieBit;
      else
        mstatus_ &= ~mieBit;
      mstatus_ |= mpieBit;
      break;

    case Op::Fence:
      break;

    case Op::Csrrw: case Op::Csrrs: case Op::Csrrc:
    case Op::Csrrwi: case Op::Csrrsi: case Op::Csrrci:
      {
        auto current = csrRead(instr.csr);
        if (not current)
          return takeTrap(trapCause::illegalInstruction, pc_, instr.raw);

        bool immediate = instr.op == Op::Csrrwi or instr.op == Op::Csrrsi or
          instr.op == Op::Csrrci;
        uint32_t operand = immediate ? instr.rs1 : regs_[instr.rs1];

        bool doWrite;
        uint32_t newValue = *current;
        if (instr.op == Op::Csrrw or instr.op == Op::Csrrwi)
          {
            newValue = operand;
            doWrite = true;
          }
        else if (instr.op == Op::Csrrs or instr.op == Op::Csrrsi)
          {
            newValue = *current | operand;
            doWrite = instr.rs1 != 0;
          }
        else
          {
            newValue = *current & ~operand;
            doWrite = instr.rs1 != 0;
          }

        if (doWrite and not csrWrite(instr.csr, newValue))
          return takeTrap(trapCause::illegalInstruction, pc_, instr.raw);
        result = *current;
        writeRd = true;
      }
      break;
    }

  if (writeRd and instr.rd != 0)
    regs_[instr.rd] = result;

  if (trace_ != nullptr)
    {
      std::ostringstream line;
      line << "pc=0x" << std::hex << std::setfill('0') << std::setw(8) << pc_
           << " instr=0x" << std::setw(8) << instr.raw;
      if (ctx.memAccess and ctx.memAccess->isStore)
        line << " store addr=0x" << std::setw(8) << ctx.memAccess->address;
      line << '\n';
      trace_->append(line.str());
    }

  if (auto it = watched_.find(pc_); it != watched_.end())
    it->second += 1;

  retired_ += 1;
  pc_ = nextPc;
  return { StepOutcome::Kind::Retired, 0 };
}


void
Machine::run(uint64_t maxSteps)
{
  hitStepLimit_ = false;
  for (uint64_t i = 0; i < maxSteps; ++i)
    {
      if (status_ != MachineStatus::Running)
        return;
      step();
    }
  if (status_ == MachineStatus::Running)
    hitStepLimit_ = true;
}


void
Machine::setjmpRecord(uint32_t bufId)
{
  JmpEntry* slot = nullptr;
  for (auto& entry : trustedMap_)
    if (entry.bufId == bufId)
      slot = &entry;
  if (slot == nullptr)
    {
      trustedMap_.push_back({});
      slot = &trustedMap_.back();
    }

  slot->bufId = bufId;
  slot->pc = pc_;
  slot->sp = regs_[regSp];
  slot->ssp = regs_[regSsp];
  static constexpr unsigned calleeSavedRegs[12] = {
    8, 9, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27 };
  for (unsigned i = 0; i < 12; ++i)
    slot->calleeSaved[i] = regs_[calleeSavedRegs[i]];
  slot->valid = true;
}


void
Machine::longjmpApply(uint32_t bufId)
{
  JmpEntry* entry = nullptr;
  for (auto& candidate : trustedMap_)
    if (candidate.bufId == bufId and candidate.valid)
      entry = &candidate;

  if (entry == nullptr)
    {
      terminate(TerminationReason::LongjmpViolation);
      return;
    }

  pc_ = entry->pc;
  regs_[regSp] = entry->sp;
  regs_[regSsp] = entry->ssp;
  static constexpr unsigned calleeSavedRegs[12] = {
    8, 9, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27 };
  for (unsigned i = 0; i < 12; ++i)
    regs_[calleeSavedRegs[i]] = entry->calleeSaved[i];
  regs_[10] = 1;   // longjmp resumes with a nonzero setjmp result

  // Entries for frames above the restored shadow stack pointer are stale.
  for (auto& candidate : trustedMap_)
    if (candidate.valid and candidate.ssp > regs_[regSsp])
      candidate.valid = false;
}


void
Machine::setjmpEpilogueHook()
{
  for (auto& candidate : trustedMap_)
    if (candidate.valid and candidate.ssp > regs_[regSsp])
      candidate.valid = false;
}
