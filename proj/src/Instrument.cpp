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

#include <cctype>
#include <sstream>

#include "detrap/Errors.hpp"
#include "detrap/Instrument.hpp"
#include "detrap/Isa.hpp"

using namespace detrap;

namespace
{

  std::vector<std::string> splitTokens(const std::string& line)
  {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : line)
      {
        if (c == '#')
          break;
        if (std::isspace(static_cast<unsigned char>(c)) or c == ',' or
            c == '(' or c == ')')
          {
            if (not current.empty())
              {
                tokens.push_back(current);
                current.clear();
              }
          }
        else
          current.push_back(c);
      }
    if (not current.empty())
      tokens.push_back(current);
    return tokens;
  }

  bool isCallMnemonic(const std::string& m)
  {
    return m == "call" or m == "jal" or m == "jalr";
  }

  // Registers written by this line, conservatively.
  void checkBodyLine(const FunctionSkeleton& fn, const std::string& line,
                     unsigned sspReg)
  {
    auto tokens = splitTokens(line);
    if (tokens.empty())
      return;
    // Strip any leading label.
    while (not tokens.empty() and tokens.front().back() == ':')
      tokens.erase(tokens.begin());
    if (tokens.empty())
      return;

    const std::string& mnemonic = tokens.front();
    bool isCall = isCallMnemonic(mnemonic);
    if (fn.leaf and isCall)
      throw Error(ErrorCode::SkeletonError,
                  fn.name + ": leaf body contains a call: " + line);

    // Which operand is the destination register, if any.
    static const std::set<std::string> noDest = {
      "sb", "sh", "sw", "beq", "bne", "blt", "bge", "bltu", "bgeu",
      "beqz", "bnez", "j", "jr", "ret", "nop", "ecall", "ebreak", "mret",
      "fence", "call"
    };
    if (noDest.count(mnemonic) or tokens.size() < 2)
      return;

    auto dest = parseRegister(tokens[1]);
    if (not dest)
      return;
    if (*dest == sspReg)
      throw Error(ErrorCode::SkeletonError,
                  fn.name + ": body writes the shadow stack pointer: " + line);
    if (*dest == regRa and not isCall)
      throw Error(ErrorCode::SkeletonError,
                  fn.name + ": body writes ra: " + line);
  }

  // Retarget direct calls to instrumented non-leaf functions.
  std::string retargetCalls(const std::string& line,
                            const std::set<std::string>& nonLeaf)
  {
    auto tokens = splitTokens(line);
    if (tokens.size() == 2 and tokens[0] == "call")
      if (nonLeaf.count(tokens[1]))
        return "call " + tokens[1] + "$trampoline";
    if (tokens.size() == 3 and tokens[0] == "jal" and tokens[1] == "ra")
      if (nonLeaf.count(tokens[2]))
        return "jal ra, " + tokens[2] + "$trampoline";
    return line;
  }

  void validateSkeleton(const FunctionSkeleton& fn, unsigned sspReg)
  {
    if (fn.name.empty())
      throw Error(ErrorCode::SkeletonError, "function has no name");
    if (fn.frameSize % 16 != 0)
      throw Error(ErrorCode::SkeletonError,
                  fn.name + ": frame size must be a multiple of 16");
    if (not fn.leaf and fn.frameSize < 16)
      throw Error(ErrorCode::SkeletonError,
                  fn.name + ": non-leaf frame needs at least 16 bytes");
    for (const auto& line : fn.body)
      checkBodyLine(fn, line, sspReg);
  }

}


InstrumentedFragments
detrap::instrumentFunction(const FunctionSkeleton& fn,
                           const std::set<std::string>& nonLeafFunctions,
                           unsigned sspReg)
{
  validateSkeleton(fn, sspReg);

  InstrumentedFragments out;
  std::string ssp = registerName(sspReg);
  uint32_t frame = fn.frameSize;

  if (fn.leaf)
    {
      out.untrusted.push_back(fn.name + ":");
      if (frame > 0)
        out.untrusted.push_back("addi sp, sp, -" + std::to_string(frame));
      for (const auto& line : fn.body)
        out.untrusted.push_back(line);
      if (frame > 0)
        out.untrusted.push_back("addi sp, sp, " + std::to_string(frame));
      out.untrusted.push_back("ret");
      return out;
    }

  // Trampoline in trusted code: push ra, bump the SSP, return to the body.
  out.trusted.push_back(fn.name + "$trampoline:");
  out.trusted.push_back("sw ra, 0(" + ssp + ")");
  out.trusted.push_back("addi " + ssp + ", " + ssp + ", 4");
  out.trusted.push_back("j " + fn.name + "$postjump");

  out.untrusted.push_back(fn.name + ":");
  if (fn.externalLinkage)
    out.untrusted.push_back("j " + fn.name + "$trampoline");
  out.untrusted.push_back(fn.name + "$postjump:");
  out.untrusted.push_back("addi sp, sp, -" + std::to_string(frame));
  out.untrusted.push_back("sw ra, " + std::to_string(frame - 4) + "(sp)");

  for (const auto& line : fn.body)
    out.untrusted.push_back(retargetCalls(line, nonLeafFunctions));

  out.untrusted.push_back("addi " + ssp + ", " + ssp + ", -4");
  out.untrusted.push_back("lw ra, 0(" + ssp + ")");
  out.untrusted.push_back("addi sp, sp, " + std::to_string(frame));
  out.untrusted.push_back("ret");
  return out;
}


std::vector<std::string>
detrap::emitBaselineFunction(const FunctionSkeleton& fn)
{
  validateSkeleton(fn, regSsp);

  std::vector<std::string> lines;
  uint32_t frame = fn.frameSize;

  if (fn.leaf)
    {
      lines.push_back(fn.name + ":");
      if (frame > 0)
        lines.push_back("addi sp, sp, -" + std::to_string(frame));
      for (const auto& line : fn.body)
        lines.push_back(line);
      if (frame > 0)
        lines.push_back("addi sp, sp, " + std::to_string(frame));
      lines.push_back("ret");
      return lines;
    }

  lines.push_back(fn.name + ":");
  lines.push_back("addi sp, sp, -" + std::to_string(frame));
  lines.push_back("sw ra, " + std::to_string(frame - 4) + "(sp)");
  for (const auto& line : fn.body)
    lines.push_back(line);
  lines.push_back("lw ra, " + std::to_string(frame - 4) + "(sp)");
  lines.push_back("addi sp, sp, " + std::to_string(frame));
  lines.push_back("ret");
  return lines;
}


std::string
detrap::buildProgramText(const ProgramBuild& build, bool instrumented)
{
  std::set<std::string> nonLeaf;
  if (instrumented)
    for (const auto& fn : build.functions)
      if (not fn.leaf)
        nonLeaf.insert(fn.name);

  std::ostringstream out;

  // Trusted section: start stub, console output, trampolines.
  out << ".section trusted kind=trusted-code trust=trusted base=auto\n";
  out << ".sym _start _start function\n";
  out << ".sym putchar putchar function\n";
  if (instrumented)
    for (const auto& name : nonLeaf)
      out << ".sym " << name << "$trampoline " << name
          << "$trampoline function\n";

  std::string entryCall = build.entryFunction;
  if (nonLeaf.count(entryCall))
    entryCall += "$trampoline";
  out << "_start:\n";
  out << "call " << entryCall << "\n";
  out << "ecall\n";

  // Console byte lives at offset 0x1000 of the MMIO section.
  out << "putchar:\n";
  out << "li t0, 0x1000\n";
  out << "sb a0, 0(t0)\n";
  out << "ret\n";

  if (instrumented)
    for (const auto& fn : build.functions)
      {
        if (fn.leaf)
          continue;
        auto fragments = instrumentFunction(fn, nonLeaf);
        for (const auto& line : fragments.trusted)
          out << line << "\n";
      }

  for (const auto& line : build.extraTrustedLines)
    out << line << "\n";

  if (not build.rodataLines.empty())
    {
      out << ".section rodata kind=rodata trust=trusted base=auto\n";
      for (const auto& line : build.rodataLines)
        out << line << "\n";
    }

  out << ".section untrusted kind=untrusted-code trust=untrusted base=auto\n";
  for (const auto& fn : build.functions)
    out << ".sym " << fn.name << " " << fn.name << " function\n";
  if (not build.handlerFunction.empty())
    out << ".handler " << build.handlerFunction << "\n";

  for (const auto& fn : build.functions)
    {
      if (instrumented)
        {
          auto fragments = instrumentFunction(fn, nonLeaf);
          for (const auto& line : fragments.untrusted)
            out << line << "\n";
        }
      else
        for (const auto& line : emitBaselineFunction(fn))
          out << line << "\n";
    }

  for (const auto& line : build.extraUntrustedLines)
    out << line << "\n";

  out << ".entry _start\n";
  return out.str();
}
