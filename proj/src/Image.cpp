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
#include <sstream>

#include "detrap/Errors.hpp"
#include "detrap/Image.hpp"

using namespace detrap;


const char*
detrap::symbolKindName(SymbolKind kind)
{
  switch (kind)
    {
    case SymbolKind::Function:  return "function";
    case SymbolKind::Object:    return "object";
    case SymbolKind::Jumptable: return "jumptable";
    }
  return "?";
}


std::optional<SymbolKind>
detrap::symbolKindByName(const std::string& name)
{
  if (name == "function")
    return SymbolKind::Function;
  if (name == "object")
    return SymbolKind::Object;
  if (name == "jumptable")
    return SymbolKind::Jumptable;
  return std::nullopt;
}


const Image::Section*
Image::sectionAt(uint32_t addr) const
{
  for (const auto& section : sections)
    if (section.contains(addr))
      return &section;
  return nullptr;
}


const Image::Section*
Image::sectionByName(const std::string& name) const
{
  for (const auto& section : sections)
    if (section.name == name)
      return &section;
  return nullptr;
}


const Image::Symbol*
Image::symbolByName(const std::string& name) const
{
  for (const auto& symbol : symbols)
    if (symbol.name == name)
      return &symbol;
  return nullptr;
}


std::optional<uint32_t>
Image::readWord(uint32_t addr) const
{
  if (addr % 4 != 0)
    return std::nullopt;
  const Section* section = sectionAt(addr);
  if (section == nullptr or addr + 4 > section->limit())
    return std::nullopt;
  uint32_t offset = addr - section->base;
  uint32_t word = 0;
  for (unsigned i = 0; i < 4; ++i)
    word |= uint32_t(section->bytes.at(offset + i)) << (8 * i);
  return word;
}


bool
Image::isTrustedAddr(uint32_t addr) const
{
  const Section* section = sectionAt(addr);
  return section != nullptr and section->trusted;
}


std::vector<std::string>
Image::validate() const
{
  std::vector<std::string> problems;

  for (size_t i = 0; i < sections.size(); ++i)
    for (size_t j = i + 1; j < sections.size(); ++j)
      {
        const auto& a = sections.at(i);
        const auto& b = sections.at(j);
        if (a.base < b.limit() and b.base < a.limit())
          problems.push_back("OVERLAP: sections " + a.name + " and " + b.name);
      }

  for (const auto& symbol : symbols)
    if (sectionAt(symbol.address) == nullptr)
      problems.push_back("symbol " + symbol.name + " outside every section");

  for (const auto& jt : jumptables)
    {
      const Section* section = sectionAt(jt.base);
      bool ok = section != nullptr and jt.limit() <= section->limit() and
        (section->kind == SectionKind::Rodata or section->isCode());
      if (not ok)
        problems.push_back("jumptable at 0x" + [&] {
          std::ostringstream oss;
          oss << std::hex << jt.base;
          return oss.str();
        }() + " not inside rodata or code");
    }

  const Section* entrySection = sectionAt(entryPoint);
  if (entrySection == nullptr or
      entrySection->kind != SectionKind::TrustedCode)
    problems.push_back("entry point not in trusted code");

  return problems;
}


namespace
{

  std::string hex32(uint32_t value)
  {
    std::ostringstream oss;
    oss << "0x" << std::setfill('0') << std::setw(8) << std::hex << value;
    return oss.str();
  }

}


std::string
detrap::emitImage(const Image& img)
{
  Image sorted = img;
  std::sort(sorted.sections.begin(), sorted.sections.end(),
            [](const auto& a, const auto& b) { return a.base < b.base; });
  std::sort(sorted.symbols.begin(), sorted.symbols.end(),
            [](const auto& a, const auto& b) {
              return a.address != b.address ? a.address < b.address :
                a.name < b.name;
            });
  std::sort(sorted.jumptables.begin(), sorted.jumptables.end(),
            [](const auto& a, const auto& b) { return a.base < b.base; });

  std::ostringstream out;
  for (const auto& section : sorted.sections)
    {
      out << ".section " << section.name << " kind="
          << sectionKindName(section.kind) << " trust="
          << (section.trusted ? "trusted" : "untrusted") << " base="
          << hex32(section.base) << '\n';

      for (const auto& symbol : sorted.symbols)
        if (section.contains(symbol.address))
          {
            std::ostringstream offset;
            offset << std::hex << (symbol.address - section.base);
            out << ".sym " << symbol.name << ' ' << offset.str() << ' '
                << symbolKindName(symbol.kind) << '\n';
          }

      for (size_t i = 0; i + 4 <= section.bytes.size(); i += 4)
        {
          uint32_t word = 0;
          for (unsigned k = 0; k < 4; ++k)
            word |= uint32_t(section.bytes.at(i + k)) << (8 * k);
          out << ".word " << hex32(word) << '\n';
        }
    }

  for (const auto& jt : sorted.jumptables)
    {
      std::ostringstream base;
      base << std::hex << jt.base;
      out << ".jumptable " << base.str() << ' ' << std::dec << jt.entryCount
          << '\n';
    }

  std::ostringstream entry;
  entry << std::hex << sorted.entryPoint;
  out << ".entry " << entry.str() << '\n';
  if (sorted.untrustedHandler)
    {
      std::ostringstream handler;
      handler << std::hex << *sorted.untrustedHandler;
      out << ".handler " << handler.str() << '\n';
    }

  return out.str();
}
