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

#include <array>
#include <cassert>
#include <sstream>

#include "detrap/Errors.hpp"
#include "detrap/Isa.hpp"

using namespace detrap;


const char*
detrap::errorCodeName(ErrorCode code)
{
  switch (code)
    {
    case ErrorCode::IllegalInstruction: return "IllegalInstruction";
    case ErrorCode::UnencodableField:   return "UnencodableField";
    case ErrorCode::ParseError:         return "ParseError";
    case ErrorCode::RangeError:         return "RangeError";
    case ErrorCode::UnknownSymbol:      return "UnknownSymbol";
    case ErrorCode::SpecError:          return "SpecError";
    case ErrorCode::OverlapError:       return "OverlapError";
    case ErrorCode::FormatError:        return "FormatError";
    case ErrorCode::UnsupportedFeature: return "UnsupportedFeature";
    case ErrorCode::LoadError:          return "LoadError";
    case ErrorCode::PolicyTruncated:    return "PolicyTruncated";
    case ErrorCode::SkeletonError:      return "SkeletonError";
    }
  return "Error";
}


const char*
detrap::opName(Op op)
{
  switch (op)
    {
    case Op::Lui: return "lui";       case Op::Auipc: return "auipc";
    case Op::Jal: return "jal";       case Op::Jalr: return "jalr";
    case Op::Beq: return "beq";       case Op::Bne: return "bne";
    case Op::Blt: return "blt";       case Op::Bge: return "bge";
    case Op::Bltu: return "bltu";     case Op::Bgeu: return "bgeu";
    case Op::Lb: return "lb";         case Op::Lh: return "lh";
    case Op::Lw: return "lw";         case Op::Lbu: return "lbu";
    case Op::Lhu: return "lhu";
    case Op::Sb: return "sb";         case Op::Sh: return "sh";
    case Op::Sw: return "sw";
    case Op::Addi: return "addi";     case Op::Slti: return "slti";
    case Op::Sltiu: return "sltiu";   case Op::Xori: return "xori";
    case Op::Ori: return "ori";       case Op::Andi: return "andi";
    case Op::Slli: return "slli";     case Op::Srli: return "srli";
    case Op::Srai: return "srai";
    case Op::Add: return "add";       case Op::Sub: return "sub";
    case Op::Sll: return "sll";       case Op::Slt: return "slt";
    case Op::Sltu: return "sltu";     case Op::Xor: return "xor";
    case Op::Srl: return "srl";       case Op::Sra: return "sra";
    case Op::Or: return "or";         case Op::And: return "and";
    case Op::Mul: return "mul";       case Op::Mulh: return "mulh";
    case Op::Mulhsu: return "mulhsu"; case Op::Mulhu: return "mulhu";
    case Op::Div: return "div";       case Op::Divu: return "divu";
    case Op::Rem: return "rem";       case Op::Remu: return "remu";
    case Op::Ecall: return "ecall";   case Op::Ebreak: return "ebreak";
    case Op::Mret: return "mret";
    case Op::Csrrw: return "csrrw";   case Op::Csrrs: return "csrrs";
    case Op::Csrrc: return "csrrc";   case Op::Csrrwi: return "csrrwi";
    case Op::Csrrsi: return "csrrsi"; case Op::Csrrci: return "csrrci";
    case Op::Fence: return "fence";
    }
  return "?";
}


bool
Instr::isReturn() const
{
  return op == Op::Jalr and rd == regZero and rs1 == regRa and imm == 0;
}


bool
Instr::isCall() const
{
  return (op == Op::Jal or op == Op::Jalr) and rd == regRa;
}


bool
Instr::isIndirectJump() const
{
  return op == Op::Jalr and not isReturn() and not isCall();
}


namespace
{

  constexpr uint32_t opcodeOf(uint32_t w)  { return w & 0x7f; }
  constexpr uint32_t rdOf(uint32_t w)      { return (w >> 7) & 0x1f; }
  constexpr uint32_t funct3Of(uint32_t w)  { return (w >> 12) & 0x7; }
  constexpr uint32_t rs1Of(uint32_t w)     { return (w >> 15) & 0x1f; }
  constexpr uint32_t rs2Of(uint32_t w)     { return (w >> 20) & 0x1f; }
  constexpr uint32_t funct7Of(uint32_t w)  { return (w >> 25) & 0x7f; }

  constexpr int32_t immI(uint32_t w)
  { return int32_t(w) >> 20; }

  constexpr int32_t immS(uint32_t w)
  { return ((int32_t(w) >> 20) & ~0x1f) | int32_t(rdOf(w)); }

  constexpr int32_t immB(uint32_t w)
  {
    int32_t imm = (int32_t(w) >> 31) << 12;         // imm[12]
    imm |= int32_t((w >> 25) & 0x3f) << 5;          // imm[10:5]
    imm |= int32_t((w >> 8) & 0xf) << 1;            // imm[4:1]
    imm |= int32_t((w >> 7) & 0x1) << 11;           // imm[11]
    return imm;
  }

  constexpr int32_t immU(uint32_t w)
  { return int32_t(w & 0xfffff000); }

  constexpr int32_t immJ(uint32_t w)
  {
    int32_t imm = (int32_t(w) >> 31) << 20;         // imm[20]
    imm |= int32_t((w >> 21) & 0x3ff) << 1;         // imm[10:1]
    imm |= int32_t((w >> 20) & 0x1) << 11;          // imm[11]
    imm |= int32_t(w & 0xff000);                    // imm[19:12]
    return imm;
  }

  bool decodeBranchOp(uint32_t f3, Op& op)
  {
    switch (f3)
      {
      case 0: op = Op::Beq; return true;
      case 1: op = Op::Bne; return true;
      case 4: op = Op::Blt; return true;
      case 5: op = Op::Bge; return true;
      case 6: op = Op::Bltu; return true;
      case 7: op = Op::Bgeu; return true;
      }
    return false;
  }

  bool decodeLoadOp(uint32_t f3, Op& op)
  {
    switch (f3)
      {
      case 0: op = Op::Lb; return true;
      case 1: op = Op::Lh; return true;
      case 2: op = Op::Lw; return true;
      case 4: op = Op::Lbu; return true;
      case 5: op = Op::Lhu; return true;
      }
    return false;
  }

  struct FieldLimits
  {
    static bool regOk(unsigned r)
    { return r < 32; }

    static bool immIOk(int32_t v)
    { return v >= -2048 and v <= 2047; }

    static bool immBOk(int32_t v)
    { return v >= -4096 and v <= 4094 and (v & 1) == 0; }

    static bool immJOk(int32_t v)
    { return v >= -1048576 and v <= 1048574 and (v & 1) == 0; }

    static bool immUOk(int32_t v)
    { return (v & 0xfff) == 0; }

    static bool shamtOk(int32_t v)
    { return v >= 0 and v <= 31; }
  };

  uint32_t packR(uint32_t opcode, uint32_t f3, uint32_t f7,
                 unsigned rd, unsigned rs1, unsigned rs2)
  {
    return opcode | (rd << 7) | (f3 << 12) | (rs1 << 15) | (rs2 << 20) |
           (f7 << 25);
  }

  uint32_t packI(uint32_t opcode, uint32_t f3, unsigned rd, unsigned rs1,
                 int32_t imm)
  {
    return opcode | (rd << 7) | (f3 << 12) | (rs1 << 15) |
           (uint32_t(imm & 0xfff) << 20);
  }

  uint32_t packS(uint32_t opcode, uint32_t f3, unsigned rs1, unsigned rs2,
                 int32_t imm)
  {
    return opcode | ((imm & 0x1f) << 7) | (f3 << 12) | (rs1 << 15) |
           (rs2 << 20) | (uint32_t((imm >> 5) & 0x7f) << 25);
  }

  uint32_t packB(uint32_t opcode, uint32_t f3, unsigned rs1, unsigned rs2,
                 int32_t imm)
  {
    uint32_t w = opcode | (f3 << 12) | (rs1 << 15) | (rs2 << 20);
    w |= ((imm >> 11) & 1) << 7;
    w |= ((imm >> 1) & 0xf) << 8;
    w |= uint32_t((imm >> 5) & 0x3f) << 25;
    w |= uint32_t((imm >> 12) & 1) << 31;
    return w;
  }

  uint32_t packJ(uint32_t opcode, unsigned rd, int32_t imm)
  {
    uint32_t w = opcode | (rd << 7);
    w |= uint32_t(imm & 0xff000);
    w |= ((imm >> 11) & 1) << 20;
    w |= uint32_t((imm >> 1) & 0x3ff) << 21;
    w |= uint32_t((imm >> 20) & 1) << 31;
    return w;
  }

}


bool
detrap::tryDecode(uint32_t word, Instr& out)
{
  if ((word & 3) != 3)
    return false;   // compressed or reserved

  Instr instr;
  instr.raw = word;
  instr.rd = rdOf(word);
  instr.rs1 = rs1Of(word);
  instr.rs2 = rs2Of(word);
  uint32_t f3 = funct3Of(word);
  uint32_t f7 = funct7Of(word);

  switch (opcodeOf(word))
    {
    case 0x37:
      instr.op = Op::Lui;
      instr.opClass = OpClass::Lui;
      instr.imm = immU(word);
      instr.rs1 = instr.rs2 = 0;
      break;

    case 0x17:
      instr.op = Op::Auipc;
      instr.opClass = OpClass::Auipc;
      instr.imm = immU(word);
      instr.rs1 = instr.rs2 = 0;
      break;

    case 0x6f:
      instr.op = Op::Jal;
      instr.opClass = OpClass::Jal;
      instr.imm = immJ(word);
      instr.rs1 = instr.rs2 = 0;
      break;

    case 0x67:
      if (f3 != 0)
        return false;
      instr.op = Op::Jalr;
      instr.opClass = OpClass::Jalr;
      instr.imm = immI(word);
      instr.rs2 = 0;
      break;

    case 0x63:
      if (not decodeBranchOp(f3, instr.op))
        return false;
      instr.opClass = OpClass::Branch;
      instr.imm = immB(word);
      instr.rd = 0;
      break;

    case 0x03:
      if (not decodeLoadOp(f3, instr.op))
        return false;
      instr.opClass = OpClass::Load;
      instr.imm = immI(word);
      instr.rs2 = 0;
      break;

    case 0x23:
      if (f3 > 2)
        return false;
      instr.op = f3 == 0 ? Op::Sb : f3 == 1 ? Op::Sh : Op::Sw;
      instr.opClass = OpClass::Store;
      instr.imm = immS(word);
      instr.rd = 0;
      break;

    case 0x13:
      instr.opClass = OpClass::OpImm;
      instr.imm = immI(word);
      instr.rs2 = 0;
      switch (f3)
        {
        case 0: instr.op = Op::Addi; break;
        case 1:
          if (f7 != 0)
            return false;
          instr.op = Op::Slli;
          instr.imm = int32_t(rs2Of(word));
          break;
        case 2: instr.op = Op::Slti; break;
        case 3: instr.op = Op::Sltiu; break;
        case 4: instr.op = Op::Xori; break;
        case 5:
          if (f7 == 0)
            instr.op = Op::Srli;
          else if (f7 == 0x20)
            instr.op = Op::Srai;
          else
            return false;
          instr.imm = int32_t(rs2Of(word));
          instr.rs2 = 0;
          break;
        case 6: instr.op = Op::Ori; break;
        case 7: instr.op = Op::Andi; break;
        }
      break;

    case 0x33:
      instr.imm = 0;
      if (f7 == 1)
        {
          instr.opClass = OpClass::MulDiv;
          static constexpr Op mulOps[8] = { Op::Mul, Op::Mulh, Op::Mulhsu,
            Op::Mulhu, Op::Div, Op::Divu, Op::Rem, Op::Remu };
          instr.op = mulOps[f3];
        }
      else if (f7 == 0 or f7 == 0x20)
        {
          instr.opClass = OpClass::Op;
          if (f7 == 0x20 and f3 != 0 and f3 != 5)
            return false;
          static constexpr Op baseOps[8] = { Op::Add, Op::Sll, Op::Slt,
            Op::Sltu, Op::Xor, Op::Srl, Op::Or, Op::And };
          instr.op = baseOps[f3];
          if (f7 == 0x20)
            instr.op = f3 == 0 ? Op::Sub : Op::Sra;
        }
      else
        return false;
      break;

    case 0x73:
      if (f3 == 0)
        {
          instr.opClass = OpClass::System;
          instr.rd = instr.rs1 = instr.rs2 = 0;
          if (word == 0x00000073)
            instr.op = Op::Ecall;
          else if (word == 0x00100073)
            instr.op = Op::Ebreak;
          else if (word == 0x30200073)
            instr.op = Op::Mret;
          else
            return false;
        }
      else if (f3 != 4)
        {
          instr.opClass = OpClass::Csr;
          static constexpr Op csrOps[8] = { Op::Addi, Op::Csrrw, Op::Csrrs,
            Op::Csrrc, Op::Addi, Op::Csrrwi, Op::Csrrsi, Op::Csrrci };
          instr.op = csrOps[f3];
          instr.csr = uint16_t((word >> 20) & 0xfff);
          instr.rs2 = 0;
          instr.imm = 0;
        }
      else
        return false;
      break;

    case 0x0f:
      if (f3 != 0)
        return false;
      instr.op = Op::Fence;
      instr.opClass = OpClass::Fence;
      instr.imm = immI(word);
      instr.rs2 = 0;
      break;

    default:
      return false;
    }

  out = instr;
  return true;
}


Instr
detrap::decode(uint32_t word)
{
  Instr instr;
  if (not tryDecode(word, instr))
    {
      std::ostringstream oss;
      oss << "unsupported encoding 0x" << std::hex << word;
      throw Error(ErrorCode::IllegalInstruction, oss.str());
    }
  return instr;
}


uint32_t
detrap::encode(const Instr& instr)
{
  auto fail = [&](const char* what) -> uint32_t {
    throw Error(ErrorCode::UnencodableField,
                std::string(what) + " in " + opName(instr.op));
  };

  if (not FieldLimits::regOk(instr.rd) or not FieldLimits::regOk(instr.rs1) or
      not FieldLimits::regOk(instr.rs2))
    return fail("register index out of range");

  switch (instr.op)
    {
    case Op::Lui:
    case Op::Auipc:
      if (not FieldLimits::immUOk(instr.imm))
        return fail("U-type immediate");
      return (instr.op == Op::Lui ? 0x37u : 0x17u) | (instr.rd << 7) |
             uint32_t(instr.imm);

    case Op::Jal:
      if (not FieldLimits::immJOk(instr.imm))
        return fail("J-type immediate");
      return packJ(0x6f, instr.rd, instr.imm);

    case Op::Jalr:
      if (not FieldLimits::immIOk(instr.imm))
        return fail("I-type immediate");
      return packI(0x67, 0, instr.rd, instr.rs1, instr.imm);

    case Op::Beq: case Op::Bne: case Op::Blt: case Op::Bge:
    case Op::Bltu: case Op::Bgeu:
      {
        if (not FieldLimits::immBOk(instr.imm))
          return fail("B-type immediate");
        static constexpr uint32_t f3[] = { 0, 1, 4, 5, 6, 7 };
        uint32_t ix = unsigned(instr.op) - unsigned(Op::Beq);
        return packB(0x63, f3[ix], instr.rs1, instr.rs2, instr.imm);
      }

    case Op::Lb: case Op::Lh: case Op::Lw: case Op::Lbu: case Op::Lhu:
      {
        if (not FieldLimits::immIOk(instr.imm))
          return fail("I-type immediate");
        static constexpr uint32_t f3[] = { 0, 1, 2, 4, 5 };
        uint32_t ix = unsigned(instr.op) - unsigned(Op::Lb);
        return packI(0x03, f3[ix], instr.rd, instr.rs1, instr.imm);
      }

    case Op::Sb: case Op::Sh: case Op::Sw:
      {
        if (not FieldLimits::immIOk(instr.imm))
          return fail("S-type immediate");
        uint32_t f3 = unsigned(instr.op) - unsigned(Op::Sb);
        return packS(0x23, f3, instr.rs1, instr.rs2, instr.imm);
      }

    case Op::Addi: case Op::Slti: case Op::Sltiu: case Op::Xori:
    case Op::Ori: case Op::Andi:
      {
        if (not FieldLimits::immIOk(instr.imm))
          return fail("I-type immediate");
        static constexpr uint32_t f3map[] = { 0, 2, 3, 4, 6, 7 };
        uint32_t ix = unsigned(instr.op) - unsigned(Op::Addi);
        return packI(0x13, f3map[ix], instr.rd, instr.rs1, instr.imm);
      }

    case Op::Slli:
    case Op::Srli:
    case Op::Srai:
      {
        if (not FieldLimits::shamtOk(instr.imm))
          return fail("shift amount");
        uint32_t f3 = instr.op == Op::Slli ? 1 : 5;
        uint32_t f7 = instr.op == Op::Srai ? 0x20 : 0;
        return packR(0x13, f3, f7, instr.rd, instr.rs1, unsigned(instr.imm));
      }

    case Op::Add: case Op::Sub: case Op::Sll: case Op::Slt: case Op::Sltu:
    case Op::Xor: case Op::Srl: case Op::Sra: case Op::Or: case Op::And:
      {
        static constexpr uint32_t f3map[] = { 0, 0, 1, 2, 3, 4, 5, 5, 6, 7 };
        uint32_t ix = unsigned(instr.op) - unsigned(Op::Add);
        uint32_t f7 = (instr.op == Op::Sub or instr.op == Op::Sra) ? 0x20 : 0;
        return packR(0x33, f3map[ix], f7, instr.rd, instr.rs1, instr.rs2);
      }

    case Op::Mul: case Op::Mulh: case Op::Mulhsu: case Op::Mulhu:
    case Op::Div: case Op::Divu: case Op::Rem: case Op::Remu:
      {
        uint32_t f3 = unsigned(instr.op) - unsigned(Op::Mul);
        return packR(0x33, f3, 1, instr.rd, instr.rs1, instr.rs2);
      }

    case Op::Ecall:  return 0x00000073;
    case Op::Ebreak: return 0x00100073;
    case Op::Mret:   return 0x30200073;

    case Op::Csrrw: case Op::Csrrs: case Op::Csrrc:
    case Op::Csrrwi: case Op::Csrrsi: case Op::Csrrci:
      {
        if (instr.csr > 0xfff)
          return fail("csr index");
        static constexpr uint32_t f3map[] = { 1, 2, 3, 5, 6, 7 };
        uint32_t ix = unsigned(instr.op) - unsigned(Op::Csrrw);
        return packI(0x73, f3map[ix], instr.rd, instr.rs1,
                     int32_t(instr.csr));
      }

    case Op::Fence:
      if (not FieldLimits::immIOk(instr.imm))
        return fail("fence fields");
      return packI(0x0f, 0, instr.rd, instr.rs1, instr.imm);
    }

  return fail("unknown op");
}


ClassTags
detrap::classify(const Instr& instr)
{
  ClassTags tags;
  tags.isReturn = instr.isReturn();
  tags.isCall = instr.isCall();
  tags.isIndirectJump = instr.isIndirectJump();
  tags.isConditionalBranch = instr.opClass == OpClass::Branch;
  tags.isCsrAccess = instr.opClass == OpClass::Csr;
  tags.isMret = instr.op == Op::Mret;
  tags.isLoad = instr.opClass == OpClass::Load;
  tags.isStore = instr.opClass == OpClass::Store;

  if (tags.isCsrAccess)
    {
      // A set/clear form whose source is hard-wired zero reads the CSR
      // without modifying it.
      bool setClear = instr.op == Op::Csrrs or instr.op == Op::Csrrc or
                      instr.op == Op::Csrrsi or instr.op == Op::Csrrci;
      tags.csrIsPureRead = setClear and instr.rs1 == 0;
    }

  return tags;
}


std::string
detrap::disassemble(const Instr& instr)
{
  std::ostringstream oss;
  oss << opName(instr.op);
  auto reg = [](unsigned r) { return "x" + std::to_string(r); };

  switch (instr.opClass)
    {
    case OpClass::Lui:
    case OpClass::Auipc:
      oss << ' ' << reg(instr.rd) << ", 0x" << std::hex
          << (uint32_t(instr.imm) >> 12);
      break;
    case OpClass::Jal:
      oss << ' ' << reg(instr.rd) << ", " << instr.imm;
      break;
    case OpClass::Jalr:
      oss << ' ' << reg(instr.rd) << ", " << instr.imm << '(' <<
        reg(instr.rs1) << ')';
      break;
    case OpClass::Branch:
      oss << ' ' << reg(instr.rs1) << ", " << reg(instr.rs2) << ", "
          << instr.imm;
      break;
    case OpClass::Load:
      oss << ' ' << reg(instr.rd) << ", " << instr.imm << '(' <<
        reg(instr.rs1) << ')';
      break;
    case OpClass::Store:
      oss << ' ' << reg(instr.rs2) << ", " << instr.imm << '(' <<
        reg(instr.rs1) << ')';
      break;
    case OpClass::OpImm:
      oss << ' ' << reg(instr.rd) << ", " << reg(instr.rs1) << ", "
          << instr.imm;
      break;
    case OpClass::Op:
    case OpClass::MulDiv:
      oss << ' ' << reg(instr.rd) << ", " << reg(instr.rs1) << ", "
          << reg(instr.rs2);
      break;
    case OpClass::System:
      break;
    case OpClass::Csr:
      if (instr.op == Op::Csrrwi or instr.op == Op::Csrrsi or
          instr.op == Op::Csrrci)
        oss << ' ' << reg(instr.rd) << ", " << csrName(instr.csr) << ", "
            << unsigned(instr.rs1);
      else
        oss << ' ' << reg(instr.rd) << ", " << csrName(instr.csr) << ", "
            << reg(instr.rs1);
      break;
    case OpClass::Fence:
      break;
    }
  return oss.str();
}


std::optional<uint16_t>
detrap::csrIndexByName(std::string_view name)
{
  struct Entry { const char* name; uint16_t index; };
  static constexpr Entry table[] = {
    { "mstatus", csrMstatus }, { "mtvec", csrMtvec },
    { "mscratch", csrMscratch }, { "mepc", csrMepc },
    { "mcause", csrMcause }, { "mtval", csrMtval },
    { "tselect", csrTselect }, { "tdata1", csrTdata1 },
    { "tdata2", csrTdata2 }, { "mcycle", csrMcycle },
    { "minstret", csrMinstret },
  };
  for (const auto& e : table)
    if (name == e.name)
      return e.index;
  return std::nullopt;
}


std::string
detrap::csrName(uint16_t index)
{
  switch (index)
    {
    case csrMstatus: return "mstatus";
    case csrMtvec: return "mtvec";
    case csrMscratch: return "mscratch";
    case csrMepc: return "mepc";
    case csrMcause: return "mcause";
    case csrMtval: return "mtval";
    case csrTselect: return "tselect";
    case csrTdata1: return "tdata1";
    case csrTdata2: return "tdata2";
    case csrMcycle: return "mcycle";
    case csrMinstret: return "minstret";
    }
  std::ostringstream oss;
  oss << "0x" << std::hex << index;
  return oss.str();
}


std::optional<unsigned>
detrap::parseRegister(std::string_view name)
{
  static constexpr const char* abi[] = {
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2",
    "s0", "s1", "a0", "a1", "a2", "a3", "a4", "a5",
    "a6", "a7", "s2", "s3", "s4", "s5", "s6", "s7",
    "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6"
  };
  for (unsigned i = 0; i < 32; ++i)
    if (name == abi[i])
      return i;
  if (name == "fp")
    return 8;
  if (name.size() >= 2 and name[0] == 'x')
    {
      unsigned value = 0;
      for (char c : name.substr(1))
        {
          if (c < '0' or c > '9')
            return std::nullopt;
          value = value * 10 + unsigned(c - '0');
          if (value > 31)
            return std::nullopt;
        }
      return value;
    }
  return std::nullopt;
}


std::string
detrap::registerName(unsigned index)
{
  return "x" + std::to_string(index);
}
