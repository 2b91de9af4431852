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
#include <cctype>
#include <map>
#include <set>
#include <sstream>

#include "detrap/Errors.hpp"
#include "detrap/Image.hpp"
#include "detrap/Isa.hpp"

using namespace detrap;

namespace
{

  struct Line
  {
    unsigned number = 0;
    std::string label;              // optional "name:" prefix
    std::vector<std::string> tokens;
  };

  [[noreturn]] void parseFail(unsigned lineNo, const std::string& message)
  {
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(lineNo) + ": " + message);
  }

  [[noreturn]] void rangeFail(unsigned lineNo, const std::string& message)
  {
    throw Error(ErrorCode::RangeError,
                "line " + std::to_string(lineNo) + ": " + message);
  }

  bool isIdentChar(char c)
  {
    return std::isalnum(static_cast<unsigned char>(c)) or c == '_' or
           c == '$' or c == '.' or c == '-' or c == '+';
  }

  // Split on whitespace and commas. Memory operands like "8(sp)" stay one
  // token; parentheses are handled by the operand parser.
  std::vector<std::string> tokenize(const std::string& text)
  {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text)
      {
        if (std::isspace(static_cast<unsigned char>(c)) or c == ',')
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

  std::optional<int64_t> parseNumber(const std::string& text)
  {
    if (text.empty())
      return std::nullopt;
    size_t pos = 0;
    bool negative = false;
    if (text[pos] == '-' or text[pos] == '+')
      {
        negative = text[pos] == '-';
        ++pos;
      }
    if (pos >= text.size())
      return std::nullopt;

    int base = 10;
    if (text.size() >= pos + 2 and text[pos] == '0' and
        (text[pos + 1] == 'x' or text[pos + 1] == 'X'))
      {
        base = 16;
        pos += 2;
        if (pos >= text.size())
          return std::nullopt;
      }

    int64_t value = 0;
    for (; pos < text.size(); ++pos)
      {
        char c = std::tolower(static_cast<unsigned char>(text[pos]));
        int digit;
        if (c >= '0' and c <= '9')
          digit = c - '0';
        else if (base == 16 and c >= 'a' and c <= 'f')
          digit = c - 'a' + 10;
        else
          return std::nullopt;
        value = value * base + digit;
        if (value > int64_t(0x1'0000'0000))
          return std::nullopt;
      }
    return negative ? -value : value;
  }

  // Hex field of the image directives: bare hex digits or 0x-prefixed.
  std::optional<uint32_t> parseHexField(const std::string& text)
  {
    std::string body = text;
    if (body.size() > 2 and body[0] == '0' and
        (body[1] == 'x' or body[1] == 'X'))
      body = body.substr(2);
    if (body.empty())
      return std::nullopt;
    uint64_t value = 0;
    for (char c : body)
      {
        int digit;
        char lc = std::tolower(static_cast<unsigned char>(c));
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
  }

  struct PendingSection
  {
    Image::Section section;
    bool autoBase = false;
    std::vector<Line> body;            // instruction and .word lines
  };

  struct Assembler
  {
    const MemoryMap* map = nullptr;    // null for parse-only mode
    std::vector<PendingSection> sections;
    std::map<std::string, uint32_t> labels;
    std::set<std::string> seenLabels;
    std::vector<Image::Symbol> symbols;
    std::vector<std::pair<Line, size_t>> symbolLines;   // line, section index
    std::vector<Line> jumptableLines;
    std::optional<Line> entryLine;
    std::optional<Line> handlerLine;

    Image run(const std::string& source);

    void layoutSections();
    uint32_t resolveValue(const std::string& token, unsigned lineNo) const;
    uint32_t sizeOfLine(const Line& line, unsigned lineNo) const;
    void encodeLine(const Line& line, uint32_t pc,
                    std::vector<uint8_t>& bytes) const;
    Instr buildInstr(const Line& line, uint32_t pc) const;
  };

  void appendWord(std::vector<uint8_t>& bytes, uint32_t word)
  {
    for (unsigned i = 0; i < 4; ++i)
      bytes.push_back(uint8_t((word >> (8 * i)) & 0xff));
  }

  Image
  Assembler::run(const std::string& source)
  {
    std::istringstream input(source);
    std::string raw;
    unsigned lineNo = 0;

    // Pass 1a: parse lines into sections.
    while (std::getline(input, raw))
      {
        ++lineNo;
        auto hash = raw.find('#');
        if (hash != std::string::npos)
          raw.erase(hash);

        // Peel off any leading "label:" prefixes.
        Line line;
        line.number = lineNo;
        std::string rest = raw;
        for (;;)
          {
            size_t start = rest.find_first_not_of(" \t\r");
            if (start == std::string::npos)
              {
                rest.clear();
                break;
              }
            size_t end = start;
            while (end < rest.size() and isIdentChar(rest[end]))
              ++end;
            if (end < rest.size() and rest[end] == ':' and end > start)
              {
                std::string label = rest.substr(start, end - start);
                if (sections.empty())
                  parseFail(lineNo, "label outside a section");
                if (not seenLabels.insert(label).second)
                  parseFail(lineNo, "duplicate label " + label);
                // Record as pending: offset filled once section sizes are
                // known. Store section index and running size below.
                Line marker;
                marker.number = lineNo;
                marker.label = label;
                sections.back().body.push_back(marker);
                rest = rest.substr(end + 1);
                continue;
              }
            break;
          }

        line.tokens = tokenize(rest);
        if (line.tokens.empty())
          continue;

        const std::string& head = line.tokens.front();
        if (head == ".section")
          {
            PendingSection pending;
            if (line.tokens.size() != 5)
              parseFail(lineNo, ".section expects name kind= trust= base=");
            pending.section.name = line.tokens[1];
            for (size_t i = 2; i < 5; ++i)
              {
                const std::string& tok = line.tokens[i];
                auto eq = tok.find('=');
                if (eq == std::string::npos)
                  parseFail(lineNo, "expected key=value, got " + tok);
                std::string key = tok.substr(0, eq);
                std::string value = tok.substr(eq + 1);
                if (key == "kind")
                  {
                    auto k = sectionKindByName(value);
                    if (not k)
                      parseFail(lineNo, "unknown section kind " + value);
                    pending.section.kind = *k;
                  }
                else if (key == "trust")
                  {
                    if (value != "trusted" and value != "untrusted")
                      parseFail(lineNo, "trust must be trusted|untrusted");
                    pending.section.trusted = value == "trusted";
                  }
                else if (key == "base")
                  {
                    if (value == "auto")
                      pending.autoBase = true;
                    else
                      {
                        auto addr = parseHexField(value);
                        if (not addr)
                          parseFail(lineNo, "bad base " + value);
                        pending.section.base = *addr;
                      }
                  }
                else
                  parseFail(lineNo, "unknown .section key " + key);
              }
            sections.push_back(std::move(pending));
          }
        else if (head == ".sym")
          {
            if (line.tokens.size() != 4)
              parseFail(lineNo, ".sym expects name offset kind");
            if (sections.empty())
              parseFail(lineNo, ".sym outside a section");
            symbolLines.push_back({ line, sections.size() - 1 });
          }
        else if (head == ".jumptable")
          {
            if (line.tokens.size() != 3)
              parseFail(lineNo, ".jumptable expects base entry-count");
            jumptableLines.push_back(line);
          }
        else if (head == ".entry")
          {
            if (line.tokens.size() != 2)
              parseFail(lineNo, ".entry expects a symbol");
            entryLine = line;
          }
        else if (head == ".handler")
          {
            if (line.tokens.size() != 2)
              parseFail(lineNo, ".handler expects a symbol");
            handlerLine = line;
          }
        else if (head == ".word")
          {
            if (line.tokens.size() != 2)
              parseFail(lineNo, ".word expects one value");
            if (sections.empty())
              parseFail(lineNo, ".word outside a section");
            sections.back().body.push_back(line);
          }
        else if (head[0] == '.')
          parseFail(lineNo, "unknown directive " + head);
        else
          {
            if (sections.empty())
              parseFail(lineNo, "instruction outside a section");
            sections.back().body.push_back(line);
          }
      }

    layoutSections();

    // Pass 1b: walk bodies to place labels and fix section sizes.
    for (auto& pending : sections)
      {
        uint32_t offset = 0;
        for (const auto& line : pending.body)
          {
            if (not line.label.empty())
              {
                labels[line.label] = pending.section.base + offset;
                continue;
              }
            offset += sizeOfLine(line, line.number);
          }
        pending.section.bytes.resize(offset);
      }

    // Resolve symbols, jumptables, entry, handler.
    for (const auto& [line, sectionIx] : symbolLines)
      {
        Image::Symbol symbol;
        symbol.name = line.tokens[1];
        auto kind = symbolKindByName(line.tokens[3]);
        if (not kind)
          parseFail(line.number, "unknown symbol kind " + line.tokens[3]);
        symbol.kind = *kind;

        const auto& base = sections.at(sectionIx).section.base;
        if (auto offset = parseHexField(line.tokens[2]))
          symbol.address = base + *offset;
        else if (auto it = labels.find(line.tokens[2]); it != labels.end())
          symbol.address = it->second;
        else
          throw Error(ErrorCode::UnknownSymbol,
                      "line " + std::to_string(line.number) + ": " +
                      line.tokens[2]);
        symbols.push_back(symbol);
      }

    Image img;
    img.symbols = symbols;

    for (const auto& line : jumptableLines)
      {
        Image::Jumptable jt;
        if (auto base = parseHexField(line.tokens[1]))
          jt.base = *base;
        else if (auto it = labels.find(line.tokens[1]); it != labels.end())
          jt.base = it->second;
        else
          throw Error(ErrorCode::UnknownSymbol,
                      "line " + std::to_string(line.number) + ": " +
                      line.tokens[1]);
        auto count = parseNumber(line.tokens[2]);
        if (not count or *count < 0)
          parseFail(line.number, "bad entry count " + line.tokens[2]);
        jt.entryCount = uint32_t(*count);
        img.jumptables.push_back(jt);
      }

    // Pass 2: encode.
    for (auto& pending : sections)
      {
        std::vector<uint8_t> bytes;
        bytes.reserve(pending.section.bytes.size());
        uint32_t pc = pending.section.base;
        for (const auto& line : pending.body)
          {
            if (not line.label.empty())
              continue;
            encodeLine(line, pc, bytes);
            pc = pending.section.base + uint32_t(bytes.size());
          }
        pending.section.bytes = std::move(bytes);
        img.sections.push_back(pending.section);
      }

    auto resolveEntry = [&](const Line& line) -> uint32_t {
      const std::string& name = line.tokens[1];
      for (const auto& symbol : img.symbols)
        if (symbol.name == name)
          return symbol.address;
      if (auto it = labels.find(name); it != labels.end())
        return it->second;
      if (auto addr = parseHexField(name))
        return *addr;
      throw Error(ErrorCode::UnknownSymbol,
                  "line " + std::to_string(line.number) + ": " + name);
    };

    if (entryLine)
      img.entryPoint = resolveEntry(*entryLine);
    else
      parseFail(lineNo == 0 ? 1 : lineNo, "missing .entry");
    if (handlerLine)
      img.untrustedHandler = resolveEntry(*handlerLine);

    auto problems = img.validate();
    if (not problems.empty())
      {
        std::string joined;
        for (const auto& p : problems)
          joined += (joined.empty() ? "" : "; ") + p;
        throw Error(ErrorCode::ParseError, joined);
      }
    return img;
  }

  void
  Assembler::layoutSections()
  {
    // Auto-based sections go at the next free 16-aligned offset within
    // their kind's region, in file order.
    std::map<SectionKind, uint32_t> cursor;
    for (auto& pending : sections)
      {
        uint32_t size = 0;
        for (const auto& line : pending.body)
          if (line.label.empty())
            size += sizeOfLine(line, line.number);

        if (pending.autoBase)
          {
            if (map == nullptr)
              parseFail(1, "base=auto requires a memory map");
            const auto& region = map->region(pending.section.kind);
            auto it = cursor.find(pending.section.kind);
            pending.section.base =
              it == cursor.end() ? region.base : it->second;
          }
        cursor[pending.section.kind] =
          (pending.section.base + size + 15) & ~15u;
      }
  }

  uint32_t
  Assembler::sizeOfLine(const Line& line, unsigned lineNo) const
  {
    const std::string& head = line.tokens.front();
    if (head == ".word")
      return 4;
    if (head == "li")
      {
        if (line.tokens.size() != 3)
          parseFail(lineNo, "li expects rd, imm");
        auto value = parseNumber(line.tokens[2]);
        if (not value)
          parseFail(lineNo, "li immediate must be a constant");
        int64_t v = *value;
        if (v >= -2048 and v <= 2047)
          return 4;
        if ((v & 0xfff) == 0)
          return 4;
        return 8;
      }
    if (head == "la")
      return 8;
    return 4;
  }

  uint32_t
  Assembler::resolveValue(const std::string& token, unsigned lineNo) const
  {
    if (auto it = labels.find(token); it != labels.end())
      return it->second;
    for (const auto& symbol : symbols)
      if (symbol.name == token)
        return symbol.address;
    if (auto value = parseNumber(token))
      return uint32_t(*value);
    throw Error(ErrorCode::UnknownSymbol,
                "line " + std::to_string(lineNo) + ": " + token);
  }

  void
  Assembler::encodeLine(const Line& line, uint32_t pc,
                        std::vector<uint8_t>& bytes) const
  {
    const std::string& head = line.tokens.front();
    if (head == ".word")
      {
        uint32_t value;
        if (auto hex = parseHexField(line.tokens[1]))
          value = *hex;
        else if (auto it = labels.find(line.tokens[1]); it != labels.end())
          value = it->second;
        else
          throw Error(ErrorCode::UnknownSymbol,
                      "line " + std::to_string(line.number) + ": " +
                      line.tokens[1]);
        appendWord(bytes, value);
        return;
      }

    // Pseudo-instructions that expand to two words.
    if (head == "li")
      {
        unsigned rd = 0;
        if (auto reg = parseRegister(line.tokens[1]))
          rd = *reg;
        else
          parseFail(line.number, "bad register " + line.tokens[1]);
        int64_t value = *parseNumber(line.tokens[2]);
        if (value >= -2048 and value <= 2047)
          {
            Instr i;
            i.op = Op::Addi;
            i.rd = rd;
            i.rs1 = 0;
            i.imm = int32_t(value);
            appendWord(bytes, encode(i));
            return;
          }
        uint32_t uvalue = uint32_t(value);
        int32_t lo = int32_t(uvalue << 20) >> 20;
        uint32_t hi = (uvalue - uint32_t(lo)) & 0xfffff000;
        Instr luiI;
        luiI.op = Op::Lui;
        luiI.opClass = OpClass::Lui;
        luiI.rd = rd;
        luiI.imm = int32_t(hi);
        appendWord(bytes, encode(luiI));
        if (lo != 0)
          {
            Instr addiI;
            addiI.op = Op::Addi;
            addiI.rd = rd;
            addiI.rs1 = rd;
            addiI.imm = lo;
            appendWord(bytes, encode(addiI));
          }
        return;
      }

    if (head == "la")
      {
        unsigned rd = 0;
        if (auto reg = parseRegister(line.tokens[1]))
          rd = *reg;
        else
          parseFail(line.number, "bad register " + line.tokens[1]);
        uint32_t target = resolveValue(line.tokens[2], line.number);
        int64_t delta = int64_t(target) - int64_t(pc);
        int32_t lo = int32_t(uint32_t(delta) << 20) >> 20;
        int64_t hi = delta - lo;
        if (hi < INT32_MIN or hi > INT32_MAX or (hi & 0xfff) != 0)
          rangeFail(line.number, "la target out of range");
        Instr auipcI;
        auipcI.op = Op::Auipc;
        auipcI.opClass = OpClass::Auipc;
        auipcI.rd = rd;
        auipcI.imm = int32_t(hi);
        appendWord(bytes, encode(auipcI));
        Instr addiI;
        addiI.op = Op::Addi;
        addiI.rd = rd;
        addiI.rs1 = rd;
        addiI.imm = lo;
        appendWord(bytes, encode(addiI));
        return;
      }

    try
      {
        appendWord(bytes, encode(buildInstr(line, pc)));
      }
    catch (const Error& error)
      {
        if (error.code() == ErrorCode::UnencodableField)
          rangeFail(line.number, error.what());
        throw;
      }
  }

  Instr
  Assembler::buildInstr(const Line& line, uint32_t pc) const
  {
    const auto& tokens = line.tokens;
    unsigned lineNo = line.number;
    const std::string& mnemonic = tokens.front();

    auto reg = [&](size_t ix) -> unsigned {
      if (ix >= tokens.size())
        parseFail(lineNo, "missing operand");
      auto r = parseRegister(tokens[ix]);
      if (not r)
        parseFail(lineNo, "bad register " + tokens[ix]);
      return *r;
    };

    auto imm = [&](size_t ix) -> int32_t {
      if (ix >= tokens.size())
        parseFail(lineNo, "missing operand");
      auto value = parseNumber(tokens[ix]);
      if (not value)
        parseFail(lineNo, "bad immediate " + tokens[ix]);
      return int32_t(*value);
    };

    // "off(reg)" memory operand.
    auto memOperand = [&](size_t ix, unsigned& base, int32_t& offset) {
      if (ix >= tokens.size())
        parseFail(lineNo, "missing operand");
      const std::string& tok = tokens[ix];
      auto open = tok.find('(');
      auto close = tok.find(')');
      if (open == std::string::npos or close == std::string::npos or
          close < open)
        parseFail(lineNo, "expected off(reg), got " + tok);
      std::string offText = tok.substr(0, open);
      std::string regText = tok.substr(open + 1, close - open - 1);
      auto r = parseRegister(regText);
      if (not r)
        parseFail(lineNo, "bad register " + regText);
      base = *r;
      if (offText.empty())
        offset = 0;
      else
        {
          auto value = parseNumber(offText);
          if (not value)
            parseFail(lineNo, "bad offset " + offText);
          offset = int32_t(*value);
        }
    };

    // Branch operand: a label or symbol becomes a pc-relative offset; a
    // bare number is taken as the offset itself.
    auto branchTarget = [&](size_t ix) -> int32_t {
      if (ix >= tokens.size())
        parseFail(lineNo, "missing branch target");
      const std::string& tok = tokens[ix];
      if (auto it = labels.find(tok); it != labels.end())
        return int32_t(it->second - pc);
      for (const auto& symbol : symbols)
        if (symbol.name == tok)
          return int32_t(symbol.address - pc);
      if (auto value = parseNumber(tok))
        return int32_t(*value);
      throw Error(ErrorCode::UnknownSymbol,
                  "line " + std::to_string(lineNo) + ": " + tok);
    };

    auto expect = [&](size_t count) {
      if (tokens.size() != count)
        parseFail(lineNo, mnemonic + ": wrong operand count");
    };

    Instr instr;

    struct OpImmEntry { const char* name; Op op; };
    static constexpr OpImmEntry opImmTable[] = {
      { "addi", Op::Addi }, { "slti", Op::Slti }, { "sltiu", Op::Sltiu },
      { "xori", Op::Xori }, { "ori", Op::Ori }, { "andi", Op::Andi },
      { "slli", Op::Slli }, { "srli", Op::Srli }, { "srai", Op::Srai },
    };
    for (const auto& entry : opImmTable)
      if (mnemonic == entry.name)
        {
          expect(4);
          instr.op = entry.op;
          instr.opClass = OpClass::OpImm;
          instr.rd = reg(1);
          instr.rs1 = reg(2);
          instr.imm = imm(3);
          return instr;
        }

    struct OpEntry { const char* name; Op op; OpClass cls; };
    static constexpr OpEntry opTable[] = {
      { "add", Op::Add, OpClass::Op }, { "sub", Op::Sub, OpClass::Op },
      { "sll", Op::Sll, OpClass::Op }, { "slt", Op::Slt, OpClass::Op },
      { "sltu", Op::Sltu, OpClass::Op }, { "xor", Op::Xor, OpClass::Op },
      { "srl", Op::Srl, OpClass::Op }, { "sra", Op::Sra, OpClass::Op },
      { "or", Op::Or, OpClass::Op }, { "and", Op::And, OpClass::Op },
      { "mul", Op::Mul, OpClass::MulDiv },
      { "mulh", Op::Mulh, OpClass::MulDiv },
      { "mulhsu", Op::Mulhsu, OpClass::MulDiv },
      { "mulhu", Op::Mulhu, OpClass::MulDiv },
      { "div", Op::Div, OpClass::MulDiv },
      { "divu", Op::Divu, OpClass::MulDiv },
      { "rem", Op::Rem, OpClass::MulDiv },
      { "remu", Op::Remu, OpClass::MulDiv },
    };
    for (const auto& entry : opTable)
      if (mnemonic == entry.name)
        {
          expect(4);
          instr.op = entry.op;
          instr.opClass = entry.cls;
          instr.rd = reg(1);
          instr.rs1 = reg(2);
          instr.rs2 = reg(3);
          return instr;
        }

    struct BranchEntry { const char* name; Op op; };
    static constexpr BranchEntry branchTable[] = {
      { "beq", Op::Beq }, { "bne", Op::Bne }, { "blt", Op::Blt },
      { "bge", Op::Bge }, { "bltu", Op::Bltu }, { "bgeu", Op::Bgeu },
    };
    for (const auto& entry : branchTable)
      if (mnemonic == entry.name)
        {
          expect(4);
          instr.op = entry.op;
          instr.opClass = OpClass::Branch;
          instr.rs1 = reg(1);
          instr.rs2 = reg(2);
          instr.imm = branchTarget(3);
          return instr;
        }

    if (mnemonic == "beqz" or mnemonic == "bnez")
      {
        expect(3);
        instr.op = mnemonic == "beqz" ? Op::Beq : Op::Bne;
        instr.opClass = OpClass::Branch;
        instr.rs1 = reg(1);
        instr.rs2 = 0;
        instr.imm = branchTarget(2);
        return instr;
      }

    struct LoadEntry { const char* name; Op op; };
    static constexpr LoadEntry loadTable[] = {
      { "lb", Op::Lb }, { "lh", Op::Lh }, { "lw", Op::Lw },
      { "lbu", Op::Lbu }, { "lhu", Op::Lhu },
    };
    for (const auto& entry : loadTable)
      if (mnemonic == entry.name)
        {
          expect(3);
          instr.op = entry.op;
          instr.opClass = OpClass::Load;
          instr.rd = reg(1);
          unsigned base;
          int32_t offset;
          memOperand(2, base, offset);
          instr.rs1 = base;
          instr.imm = offset;
          return instr;
        }

    static constexpr LoadEntry storeTable[] = {
      { "sb", Op::Sb }, { "sh", Op::Sh }, { "sw", Op::Sw },
    };
    for (const auto& entry : storeTable)
      if (mnemonic == entry.name)
        {
          expect(3);
          instr.op = entry.op;
          instr.opClass = OpClass::Store;
          instr.rs2 = reg(1);
          unsigned base;
          int32_t offset;
          memOperand(2, base, offset);
          instr.rs1 = base;
          instr.imm = offset;
          return instr;
        }

    if (mnemonic == "lui" or mnemonic == "auipc")
      {
        expect(3);
        instr.op = mnemonic == "lui" ? Op::Lui : Op::Auipc;
        instr.opClass = mnemonic == "lui" ? OpClass::Lui : OpClass::Auipc;
        instr.rd = reg(1);
        int64_t hi = *parseNumber(tokens[2]);
        if (hi < 0 or hi > 0xfffff)
          rangeFail(lineNo, "upper immediate out of range");
        instr.imm = int32_t(uint32_t(hi) << 12);
        return instr;
      }

    if (mnemonic == "jal")
      {
        // jal rd, target  |  jal target (rd = ra)
        instr.op = Op::Jal;
        instr.opClass = OpClass::Jal;
        if (tokens.size() == 3)
          {
            instr.rd = reg(1);
            instr.imm = branchTarget(2);
          }
        else if (tokens.size() == 2)
          {
            instr.rd = regRa;
            instr.imm = branchTarget(1);
          }
        else
          parseFail(lineNo, "jal: wrong operand count");
        return instr;
      }

    if (mnemonic == "j" or mnemonic == "call")
      {
        expect(2);
        instr.op = Op::Jal;
        instr.opClass = OpClass::Jal;
        instr.rd = mnemonic == "j" ? regZero : regRa;
        instr.imm = branchTarget(1);
        return instr;
      }

    if (mnemonic == "jalr")
      {
        // jalr rd, off(rs1)  |  jalr rd, rs1  |  jalr rs1
        instr.op = Op::Jalr;
        instr.opClass = OpClass::Jalr;
        if (tokens.size() == 3)
          {
            instr.rd = reg(1);
            if (tokens[2].find('(') != std::string::npos)
              {
                unsigned base;
                int32_t offset;
                memOperand(2, base, offset);
                instr.rs1 = base;
                instr.imm = offset;
              }
            else
              {
                instr.rs1 = reg(2);
                instr.imm = 0;
              }
          }
        else if (tokens.size() == 2)
          {
            instr.rd = regRa;
            instr.rs1 = reg(1);
            instr.imm = 0;
          }
        else
          parseFail(lineNo, "jalr: wrong operand count");
        return instr;
      }

    if (mnemonic == "jr")
      {
        expect(2);
        instr.op = Op::Jalr;
        instr.opClass = OpClass::Jalr;
        instr.rd = 0;
        instr.rs1 = reg(1);
        instr.imm = 0;
        return instr;
      }

    if (mnemonic == "ret")
      {
        expect(1);
        instr.op = Op::Jalr;
        instr.opClass = OpClass::Jalr;
        instr.rd = 0;
        instr.rs1 = regRa;
        instr.imm = 0;
        return instr;
      }

    if (mnemonic == "nop")
      {
        expect(1);
        instr.op = Op::Addi;
        instr.opClass = OpClass::OpImm;
        return instr;
      }

    if (mnemonic == "mv")
      {
        expect(3);
        instr.op = Op::Addi;
        instr.opClass = OpClass::OpImm;
        instr.rd = reg(1);
        instr.rs1 = reg(2);
        return instr;
      }

    if (mnemonic == "ecall" or mnemonic == "ebreak" or mnemonic == "mret")
      {
        expect(1);
        instr.op = mnemonic == "ecall" ? Op::Ecall :
          mnemonic == "ebreak" ? Op::Ebreak : Op::Mret;
        instr.opClass = OpClass::System;
        return instr;
      }

    if (mnemonic == "fence")
      {
        expect(1);
        instr.op = Op::Fence;
        instr.opClass = OpClass::Fence;
        instr.imm = 0x0ff;
        return instr;
      }

    struct CsrEntry { const char* name; Op op; bool immediate; };
    static constexpr CsrEntry csrTable[] = {
      { "csrrw", Op::Csrrw, false }, { "csrrs", Op::Csrrs, false },
      { "csrrc", Op::Csrrc, false }, { "csrrwi", Op::Csrrwi, true },
      { "csrrsi", Op::Csrrsi, true }, { "csrrci", Op::Csrrci, true },
    };
    for (const auto& entry : csrTable)
      if (mnemonic == entry.name)
        {
          expect(4);
          instr.op = entry.op;
          instr.opClass = OpClass::Csr;
          instr.rd = reg(1);
          if (auto index = csrIndexByName(tokens[2]))
            instr.csr = *index;
          else if (auto value = parseNumber(tokens[2]);
                   value and *value >= 0 and *value <= 0xfff)
            instr.csr = uint16_t(*value);
          else
            parseFail(lineNo, "bad csr " + tokens[2]);
          if (entry.immediate)
            {
              int32_t zimm = imm(3);
              if (zimm < 0 or zimm > 31)
                rangeFail(lineNo, "csr immediate out of range");
              instr.rs1 = uint8_t(zimm);
            }
          else
            instr.rs1 = reg(3);
          return instr;
        }

    parseFail(lineNo, "unknown mnemonic " + mnemonic);
  }

}


Image
detrap::parseImage(const std::string& text)
{
  Assembler assembler;
  return assembler.run(text);
}


Image
detrap::assemble(const std::string& source, const MemoryMap& map)
{
  Assembler assembler;
  assembler.map = &map;
  return assembler.run(source);
}
