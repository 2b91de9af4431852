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
#include <string>
#include <string_view>

namespace detrap
{

  /// Register aliases used throughout the toolkit.
  constexpr unsigned regZero = 0;   // x0, hard-wired zero
  constexpr unsigned regRa   = 1;   // x1, return address
  constexpr unsigned regSp   = 2;   // x2, stack pointer
  constexpr unsigned regSsp  = 18;  // x18, shadow stack pointer

  /// Major opcode classes of the supported rv32im + zicsr subset.
  enum class OpClass : uint8_t
  {
    Lui, Auipc, Jal, Jalr, Branch, Load, Store, OpImm, Op, MulDiv,
    System, Csr, Fence
  };

  /// One value per supported instruction.
  enum class Op : uint8_t
  {
    Lui, Auipc, Jal, Jalr,
    Beq, Bne, Blt, Bge, Bltu, Bgeu,
    Lb, Lh, Lw, Lbu, Lhu,
    Sb, Sh, Sw,
    Addi, Slti, Sltiu, Xori, Ori, Andi, Slli, Srli, Srai,
    Add, Sub, Sll, Slt, Sltu, Xor, Srl, Sra, Or, And,
    Mul, Mulh, Mulhsu, Mulhu, Div, Divu, Rem, Remu,
    Ecall, Ebreak, Mret,
    Csrrw, Csrrs, Csrrc, Csrrwi, Csrrsi, Csrrci,
    Fence
  };

  const char* opName(Op op);

  /// Decoded instruction. For the csr*i forms, rs1 holds the 5-bit zero
  /// extended immediate. For shifts, imm holds the shift amount. For LUI and
  /// AUIPC, imm holds the full 32-bit value (low 12 bits zero).
  struct Instr
  {
    Op op = Op::Addi;
    OpClass opClass = OpClass::OpImm;
    uint8_t rd = 0;
    uint8_t rs1 = 0;
    uint8_t rs2 = 0;
    int32_t imm = 0;
    uint16_t csr = 0;      // Csr class only
    uint32_t raw = 0;      // encoding, filled by decode

    bool isReturn() const;         // jalr x0, 0(x1) exactly
    bool isCall() const;           // jal/jalr with rd=x1
    bool isIndirectJump() const;   // any other jalr
    bool isMret() const
    { return op == Op::Mret; }

    bool operator==(const Instr& other) const
    {
      return op == other.op and rd == other.rd and rs1 == other.rs1 and
             rs2 == other.rs2 and imm == other.imm and csr == other.csr;
    }
  };

  /// Classification tags used by the machine and the scanner.
  struct ClassTags
  {
    bool isCall = false;
    bool isReturn = false;
    bool isIndirectJump = false;
    bool isConditionalBranch = false;
    bool isCsrAccess = false;
    bool csrIsPureRead = false;   // set/clear form with hard-wired zero source
    bool isMret = false;
    bool isLoad = false;
    bool isStore = false;
  };

  /// Decode a 32-bit word. Returns false for anything outside the supported
  /// subset (including 16-bit compressed encodings). Successful decodes are
  /// canonical: encode(decode(w)) == w.
  bool tryDecode(uint32_t word, Instr& out);

  /// Like tryDecode but throws Error(IllegalInstruction) on failure.
  Instr decode(uint32_t word);

  /// Encode an instruction. Throws Error(UnencodableField) when a register
  /// index or immediate is outside the range of the instruction format.
  uint32_t encode(const Instr& instr);

  ClassTags classify(const Instr& instr);

  /// Render in canonical assembly form, e.g. "jalr x1, 8(x6)".
  std::string disassemble(const Instr& instr);

  /// CSR indices shared by the machine and the scanner.
  constexpr uint16_t csrMstatus  = 0x300;
  constexpr uint16_t csrMtvec    = 0x305;
  constexpr uint16_t csrMscratch = 0x340;
  constexpr uint16_t csrMepc     = 0x341;
  constexpr uint16_t csrMcause   = 0x342;
  constexpr uint16_t csrMtval    = 0x343;
  constexpr uint16_t csrTselect  = 0x7a0;
  constexpr uint16_t csrTdata1   = 0x7a1;
  constexpr uint16_t csrTdata2   = 0x7a2;
  constexpr uint16_t csrMcycle   = 0xb00;
  constexpr uint16_t csrMinstret = 0xb02;

  std::optional<uint16_t> csrIndexByName(std::string_view name);
  std::string csrName(uint16_t index);   // falls back to hex for unknown CSRs

  /// Accepts xN and ABI names (ra, sp, t0, s2, a0, ...).
  std::optional<unsigned> parseRegister(std::string_view name);
  std::string registerName(unsigned index);   // "x18" style

}
