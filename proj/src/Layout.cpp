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
#include <sstream>

#include "detrap/Errors.hpp"
#include "detrap/Layout.hpp"

using namespace detrap;


const char*
detrap::sectionKindName(SectionKind kind)
{
  switch (kind)
    {
    case SectionKind::Mmio:           return "mmio";
    case SectionKind::TrustedCode:    return "trusted-code";
    case SectionKind::Rodata:         return "rodata";
    case SectionKind::TrustedData:    return "trusted-data";
    case SectionKind::ShadowStack:    return "shadow-stack";
    case SectionKind::UntrustedCode:  return "untrusted-code";
    case SectionKind::UntrustedStack: return "untrusted-stack";
    case SectionKind::UntrustedData:  return "untrusted-data";
    }
  return "?";
}


std::optional<SectionKind>
detrap::sectionKindByName(const std::string& name)
{
  for (unsigned i = 0; i < sectionKindCount; ++i)
    if (name == sectionKindName(SectionKind(i)))
      return SectionKind(i);
  return std::nullopt;
}


std::optional<SectionKind>
MemoryMap::kindAt(uint32_t addr) const
{
  for (unsigned i = 0; i < sectionKindCount; ++i)
    if (regions.at(i).contains(addr))
      return SectionKind(i);
  return std::nullopt;
}


std::vector<SectionSpec>
detrap::defaultSectionSpecs()
{
  return {
    { "mmio",            SectionKind::Mmio,           64 * 1024, 16 },
    { "trusted-code",    SectionKind::TrustedCode,    32 * 1024, 16 },
    { "rodata",          SectionKind::Rodata,         16 * 1024, 16 },
    { "trusted-data",    SectionKind::TrustedData,     8 * 1024, 16 },
    { "shadow-stack",    SectionKind::ShadowStack,     4 * 1024, 16 },
    { "untrusted-code",  SectionKind::UntrustedCode,  32 * 1024, 16 },
    { "untrusted-stack", SectionKind::UntrustedStack,  4 * 1024, 16 },
    { "untrusted-data",  SectionKind::UntrustedData,  32 * 1024, 16 },
  };
}


MemoryMap
detrap::planLayout(const std::vector<SectionSpec>& specs,
                   unsigned addressSpaceBits)
{
  if (addressSpaceBits == 0 or addressSpaceBits > 32)
    throw Error(ErrorCode::SpecError, "address space bits must be 1..32");

  std::array<const SectionSpec*, sectionKindCount> byKind{};
  for (const auto& spec : specs)
    {
      auto& slot = byKind.at(unsigned(spec.kind));
      if (slot != nullptr)
        throw Error(ErrorCode::SpecError,
                    std::string("duplicate section kind ") +
                    sectionKindName(spec.kind));
      slot = &spec;
    }
  for (unsigned i = 0; i < sectionKindCount; ++i)
    if (byKind.at(i) == nullptr)
      throw Error(ErrorCode::SpecError,
                  std::string("missing section kind ") +
                  sectionKindName(SectionKind(i)));

  uint64_t spaceEnd = addressSpaceBits == 32 ?
    uint64_t(1) << 32 : uint64_t(1) << addressSpaceBits;

  MemoryMap map;
  uint64_t cursor = 0;
  for (unsigned i = 0; i < sectionKindCount; ++i)
    {
      const SectionSpec& spec = *byKind.at(i);
      if (spec.size == 0 or spec.size % 4 != 0)
        throw Error(ErrorCode::SpecError,
                    "section " + spec.name +
                    " size must be a positive multiple of 4");
      if (spec.align == 0 or (spec.align & (spec.align - 1)) != 0)
        throw Error(ErrorCode::SpecError,
                    "section " + spec.name + " alignment not a power of two");

      uint64_t base = (cursor + spec.align - 1) & ~uint64_t(spec.align - 1);
      uint64_t limit = base + spec.size;
      if (limit > spaceEnd)
        throw Error(ErrorCode::OverlapError,
                    "sections do not fit the address space");

      auto& region = map.regions.at(i);
      region.name = spec.name;
      region.kind = SectionKind(i);
      region.base = uint32_t(base);
      region.limit = uint32_t(limit);
      cursor = limit;
    }

  map.privilegedTop = map.region(SectionKind::UntrustedCode).base;
  map.writeLimitedTop = map.region(SectionKind::UntrustedStack).base;
  map.shadowStackTopEntry = map.region(SectionKind::ShadowStack).limit - 4;
  return map;
}


std::vector<TriggerConfig>
detrap::deriveTriggerPolicy(const MemoryMap& map)
{
  TriggerConfig pcLeg;
  pcLeg.target = TriggerTarget::ExecPc;
  pcLeg.relation = TriggerRelation::Geq;
  pcLeg.compare = map.region(SectionKind::UntrustedCode).base;
  pcLeg.chain = true;
  pcLeg.enabled = true;

  TriggerConfig storeLeg;
  storeLeg.target = TriggerTarget::StoreAddr;
  storeLeg.relation = TriggerRelation::Lt;
  storeLeg.compare = map.region(SectionKind::UntrustedStack).base;
  storeLeg.chain = false;
  storeLeg.enabled = true;

  TriggerConfig overflowGuard;
  overflowGuard.target = TriggerTarget::StoreAddr;
  overflowGuard.relation = TriggerRelation::Eq;
  overflowGuard.compare = map.shadowStackTopEntry;
  overflowGuard.chain = false;
  overflowGuard.enabled = true;

  return { pcLeg, storeLeg, overflowGuard };
}


std::vector<LayoutFinding>
detrap::validateLayout(const MemoryMap& map)
{
  std::vector<LayoutFinding> findings;
  auto add = [&](const char* code, const std::string& message) {
    findings.push_back({ code, message });
  };

  for (unsigned i = 0; i < sectionKindCount; ++i)
    {
      const auto& region = map.regions.at(i);
      if (region.kind != SectionKind(i))
        add("ORDERING", std::string("slot ") + sectionKindName(SectionKind(i))
            + " holds kind " + sectionKindName(region.kind));
      if (region.limit <= region.base)
        add("SIZE", region.name + " is empty or inverted");
      else if ((region.limit - region.base) % 4 != 0)
        add("SIZE", region.name + " size is not a multiple of 4");
    }

  for (unsigned i = 1; i < sectionKindCount; ++i)
    {
      const auto& prev = map.regions.at(i - 1);
      const auto& cur = map.regions.at(i);
      if (cur.base < prev.limit)
        add("OVERLAP", prev.name + " overlaps " + cur.name);
      else if (cur.base < prev.base)
        add("ORDERING", cur.name + " lies below " + prev.name);
    }

  if (map.privilegedTop != map.region(SectionKind::UntrustedCode).base)
    add("DERIVED", "privileged-top is not the untrusted-code base");
  if (map.writeLimitedTop != map.region(SectionKind::UntrustedStack).base)
    add("DERIVED", "write-limited-top is not the untrusted-stack base");
  if (map.shadowStackTopEntry !=
      map.region(SectionKind::ShadowStack).limit - 4)
    add("DERIVED", "shadow-stack-top-entry is not limit(shadow-stack) - 4");

  return findings;
}


std::vector<SectionSpec>
detrap::parseLayoutConfig(const std::string& text)
{
  auto specs = defaultSectionSpecs();
  std::istringstream input(text);
  std::string line;
  unsigned lineNo = 0;

  while (std::getline(input, line))
    {
      ++lineNo;
      auto hash = line.find('#');
      if (hash != std::string::npos)
        line.erase(hash);
      auto isSpace = [](char c) { return c == ' ' or c == '\t' or c == '\r'; };
      line.erase(std::remove_if(line.begin(), line.end(), isSpace),
                 line.end());
      if (line.empty())
        continue;

      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw Error(ErrorCode::SpecError,
                    "line " + std::to_string(lineNo) + ": expected key=value");
      std::string key = line.substr(0, eq);
      std::string value = line.substr(eq + 1);

      const std::string prefix = "section.";
      const std::string suffix = ".size";
      if (key.size() <= prefix.size() + suffix.size() or
          key.compare(0, prefix.size(), prefix) != 0 or
          key.compare(key.size() - suffix.size(), suffix.size(), suffix) != 0)
        throw Error(ErrorCode::SpecError,
                    "line " + std::to_string(lineNo) + ": unknown key " + key);

      std::string kindName = key.substr(prefix.size(),
                                        key.size() - prefix.size() -
                                        suffix.size());
      auto kind = sectionKindByName(kindName);
      if (not kind)
        throw Error(ErrorCode::SpecError,
                    "line " + std::to_string(lineNo) + ": unknown section kind "
                    + kindName);

      uint64_t size = 0;
      try
        {
          size = std::stoull(value, nullptr, 0);
        }
      catch (const std::exception&)
        {
          throw Error(ErrorCode::SpecError,
                      "line " + std::to_string(lineNo) + ": bad size " + value);
        }

      for (auto& spec : specs)
        if (spec.kind == *kind)
          spec.size = size;
    }

  return specs;
}
