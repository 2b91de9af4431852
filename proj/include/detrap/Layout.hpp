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

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "detrap/Triggers.hpp"

namespace detrap
{

  /// Section kinds in their mandatory address order, lowest first. The
  /// write-limited region covers everything below the untrusted stack; the
  /// privileged code region covers everything below the untrusted code.
  enum class SectionKind : uint8_t
  {
    Mmio = 0, TrustedCode, Rodata, TrustedData, ShadowStack,
    UntrustedCode, UntrustedStack, UntrustedData
  };

  constexpr unsigned sectionKindCount = 8;

  const char* sectionKindName(SectionKind kind);
  std::optional<SectionKind> sectionKindByName(const std::string& name);

  /// Requested size/alignment for one section.
  struct SectionSpec
  {
    std::string name;
    SectionKind kind = SectionKind::Mmio;
    uint64_t size = 0;       // bytes; > 0, multiple of 4
    uint32_t align = 16;     // power of two
  };

  /// A planned address-space layout plus its derived protection boundaries.
  struct MemoryMap
  {
    struct Region
    {
      std::string name;
      SectionKind kind = SectionKind::Mmio;
      uint32_t base = 0;
      uint32_t limit = 0;    // one past the last byte

      bool contains(uint32_t addr) const
      { return addr >= base and addr < limit; }
    };

    std::array<Region, sectionKindCount> regions;   // indexed by kind

    uint32_t privilegedTop = 0;        // base of untrusted code
    uint32_t writeLimitedTop = 0;      // base of untrusted stack
    uint32_t shadowStackTopEntry = 0;  // limit(shadow stack) - 4

    const Region& region(SectionKind kind) const
    { return regions.at(unsigned(kind)); }

    Region& region(SectionKind kind)
    { return regions.at(unsigned(kind)); }

    uint32_t end() const
    { return regions.back().limit; }

    /// Region the address falls into, if any (padding gaps belong to none).
    std::optional<SectionKind> kindAt(uint32_t addr) const;

    bool inWriteLimited(uint32_t addr) const
    { return addr < writeLimitedTop; }

    bool inPrivilegedCode(uint32_t addr) const
    { return addr < privilegedTop; }
  };

  /// Default section sizes used when no layout config is given.
  std::vector<SectionSpec> defaultSectionSpecs();

  /// Plan the layout: one spec per kind, packed in kind order from address 0
  /// with per-section alignment. Throws SpecError (missing/duplicate kind,
  /// bad size or alignment) or OverlapError (does not fit the address space).
  MemoryMap planLayout(const std::vector<SectionSpec>& specs,
                       unsigned addressSpaceBits = 32);

  /// The three-trigger policy: a two-trigger chain that traps stores from
  /// unprivileged code into the write-limited region, and a single trigger
  /// that traps any write to the top shadow-stack entry.
  std::vector<TriggerConfig> deriveTriggerPolicy(const MemoryMap& map);

  /// One validation problem. Code is one of ORDERING, OVERLAP, SIZE, ALIGN,
  /// DERIVED.
  struct LayoutFinding
  {
    std::string code;
    std::string message;
  };

  /// Re-check a map against the layout invariants. Empty result means valid.
  std::vector<LayoutFinding> validateLayout(const MemoryMap& map);

  /// Parse a layout config file: `section.<kind>.size=<bytes>` lines with
  /// `#` comments. Unlisted kinds keep their default size. Throws SpecError
  /// on malformed lines or unknown kinds.
  std::vector<SectionSpec> parseLayoutConfig(const std::string& text);

}
