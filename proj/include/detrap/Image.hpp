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
#include <vector>

#include "detrap/Layout.hpp"

namespace detrap
{

  enum class SymbolKind : uint8_t { Function, Object, Jumptable };

  const char* symbolKindName(SymbolKind kind);
  std::optional<SymbolKind> symbolKindByName(const std::string& name);

  /// A loadable program: concrete sections with trust attributes, a symbol
  /// table, jumptable metadata, an entry point, and an optional untrusted
  /// trap handler.
  struct Image
  {
    struct Section
    {
      std::string name;
      SectionKind kind = SectionKind::UntrustedCode;
      bool trusted = false;
      uint32_t base = 0;
      std::vector<uint8_t> bytes;

      uint32_t limit() const
      { return base + uint32_t(bytes.size()); }

      bool contains(uint32_t addr) const
      { return addr >= base and addr < limit(); }

      bool isCode() const
      {
        return kind == SectionKind::TrustedCode or
               kind == SectionKind::UntrustedCode;
      }
    };

    struct Symbol
    {
      std::string name;
      uint32_t address = 0;
      SymbolKind kind = SymbolKind::Function;
    };

    struct Jumptable
    {
      uint32_t base = 0;
      uint32_t entryCount = 0;
      static constexpr uint32_t entrySize = 4;

      uint32_t limit() const
      { return base + entryCount * entrySize; }
    };

    std::vector<Section> sections;
    std::vector<Symbol> symbols;
    std::vector<Jumptable> jumptables;
    uint32_t entryPoint = 0;
    std::optional<uint32_t> untrustedHandler;

    const Section* sectionAt(uint32_t addr) const;
    const Section* sectionByName(const std::string& name) const;
    const Symbol* symbolByName(const std::string& name) const;

    /// Word read from section contents; nothing if the address is outside
    /// every section or not 4-byte aligned.
    std::optional<uint32_t> readWord(uint32_t addr) const;

    /// True when a code address belongs to a trusted section.
    bool isTrustedAddr(uint32_t addr) const;

    /// Check the image invariants: symbols resolve inside a section,
    /// jumptables lie in rodata or code, entry point lies in trusted code.
    /// Returns human-readable violations; empty means valid.
    std::vector<std::string> validate() const;
  };

  /// Serialize to the line-oriented image text format. Deterministic:
  /// sections sorted by base, symbols by address, contents as `.word` lines.
  std::string emitImage(const Image& img);

  /// Parse the image text format. Accepts everything emitImage produces plus
  /// assembly mnemonics (resolved against labels). Sections with `base=auto`
  /// need a MemoryMap; parseImage without one rejects them. Throws
  /// ParseError / RangeError / UnknownSymbol.
  Image parseImage(const std::string& text);
  Image assemble(const std::string& source, const MemoryMap& map);

}
