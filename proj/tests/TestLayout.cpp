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

#include <doctest.h>

#include "detrap/Errors.hpp"
#include "detrap/Layout.hpp"

using namespace detrap;


TEST_SUITE("layout")
{

TEST_CASE("default plan matches the hand-summed addresses")
{
  // mmio 64K + trusted-code 32K + rodata 16K + trusted-data 8K +
  // shadow-stack 4K = 0x1f000; adding untrusted-code 32K = 0x27000.
  MemoryMap map = planLayout(defaultSectionSpecs());

  CHECK(map.region(SectionKind::Mmio).base == 0x00000000);
  CHECK(map.region(SectionKind::TrustedCode).base == 0x00010000);
  CHECK(map.region(SectionKind::Rodata).base == 0x00018000);
  CHECK(map.region(SectionKind::TrustedData).base == 0x0001c000);
  CHECK(map.region(SectionKind::ShadowStack).base == 0x0001e000);
  CHECK(map.region(SectionKind::UntrustedCode).base == 0x0001f000);
  CHECK(map.region(SectionKind::UntrustedStack).base == 0x00027000);
  CHECK(map.region(SectionKind::UntrustedData).base == 0x00028000);

  CHECK(map.privilegedTop == 0x0001f000);
  CHECK(map.writeLimitedTop == 0x00027000);
  CHECK(map.shadowStackTopEntry == 0x0001effc);
  CHECK(map.end() == 0x00030000);

  CHECK(validateLayout(map).empty());
}

TEST_CASE("duplicate or missing kinds are spec errors")
{
  auto specs = defaultSectionSpecs();
  specs.push_back({ "extra", SectionKind::ShadowStack, 4096, 16 });
  CHECK_THROWS_AS((void)planLayout(specs), Error);

  auto missing = defaultSectionSpecs();
  missing.pop_back();
  CHECK_THROWS_AS((void)planLayout(missing), Error);
}

TEST_CASE("oversized plans do not fit")
{
  auto specs = defaultSectionSpecs();
  for (auto& spec : specs)
    spec.size = uint64_t(1) << 30;
  CHECK_THROWS_AS((void)planLayout(specs, 32), Error);

  // The same sizes fit a 33-bit space... but 32 is the maximum.
  CHECK_THROWS_AS((void)planLayout(specs, 33), Error);

  // A tiny address space rejects even the defaults.
  CHECK_THROWS_AS((void)planLayout(defaultSectionSpecs(), 16), Error);
}

TEST_CASE("bad sizes are rejected")
{
  auto specs = defaultSectionSpecs();
  specs[4].size = 0;
  CHECK_THROWS_AS((void)planLayout(specs), Error);
  specs[4].size = 4094;   // not a multiple of 4
  CHECK_THROWS_AS((void)planLayout(specs), Error);
}

TEST_CASE("derived policy references the derived boundaries")
{
  MemoryMap map = planLayout(defaultSectionSpecs());
  auto policy = deriveTriggerPolicy(map);

  REQUIRE(policy.size() == 3);
  CHECK(policy[0].target == TriggerTarget::ExecPc);
  CHECK(policy[0].relation == TriggerRelation::Geq);
  CHECK(policy[0].compare == 0x0001f000);
  CHECK(policy[0].chain);
  CHECK(policy[0].enabled);

  CHECK(policy[1].target == TriggerTarget::StoreAddr);
  CHECK(policy[1].relation == TriggerRelation::Lt);
  CHECK(policy[1].compare == 0x00027000);
  CHECK_FALSE(policy[1].chain);

  CHECK(policy[2].target == TriggerTarget::StoreAddr);
  CHECK(policy[2].relation == TriggerRelation::Eq);
  CHECK(policy[2].compare == 0x0001effc);
  CHECK_FALSE(policy[2].chain);

  unsigned chainBits = 0;
  for (const auto& config : policy)
    chainBits += config.chain ? 1 : 0;
  CHECK(chainBits == 1);
}

TEST_CASE("shrinking the shadow stack shifts the derived values")
{
  auto specs = defaultSectionSpecs();
  for (auto& spec : specs)
    if (spec.kind == SectionKind::ShadowStack)
      spec.size -= 16;   // keep 16-byte alignment so no padding appears

  MemoryMap map = planLayout(specs);
  auto policy = deriveTriggerPolicy(map);

  // Recompute by hand: the shadow stack ends 16 bytes earlier, and the
  // following sections keep their 16-byte alignment, so everything past it
  // shifts down by 16.
  CHECK(map.region(SectionKind::ShadowStack).limit == 0x0001f000 - 16);
  CHECK(map.shadowStackTopEntry == 0x0001f000 - 16 - 4);
  CHECK(policy[0].compare == 0x0001f000 - 16);
  CHECK(policy[1].compare == 0x00027000 - 16);
  CHECK(policy[2].compare == map.shadowStackTopEntry);

  // Shrinking by only 4 bytes moves the top entry down by 4 while the
  // 16-byte alignment keeps the later sections where they were.
  auto specs4 = defaultSectionSpecs();
  for (auto& spec : specs4)
    if (spec.kind == SectionKind::ShadowStack)
      spec.size -= 4;
  MemoryMap map4 = planLayout(specs4);
  auto policy4 = deriveTriggerPolicy(map4);
  CHECK(policy4[2].compare == 0x0001effc - 4);
  CHECK(policy4[0].compare == 0x0001f000);
  CHECK(policy4[1].compare == 0x00027000);
}

TEST_CASE("validate flags ordering and overlap")
{
  MemoryMap map = planLayout(defaultSectionSpecs());

  MemoryMap swapped = map;
  std::swap(swapped.region(SectionKind::ShadowStack),
            swapped.region(SectionKind::UntrustedStack));
  auto findings = validateLayout(swapped);
  bool ordering = false;
  for (const auto& finding : findings)
    if (finding.code == "ORDERING")
      ordering = true;
  CHECK(ordering);

  MemoryMap overlapping = map;
  overlapping.region(SectionKind::TrustedData).base -= 8;
  bool overlap = false;
  for (const auto& finding : validateLayout(overlapping))
    if (finding.code == "OVERLAP")
      overlap = true;
  CHECK(overlap);
}

TEST_CASE("layout config parsing")
{
  auto specs = parseLayoutConfig(
    "# comment\n"
    "section.shadow-stack.size=16\n"
    "section.untrusted-stack.size = 0x8000  # hex works\n");
  MemoryMap map = planLayout(specs);
  CHECK(map.region(SectionKind::ShadowStack).limit -
        map.region(SectionKind::ShadowStack).base == 16);
  CHECK(map.region(SectionKind::UntrustedStack).limit -
        map.region(SectionKind::UntrustedStack).base == 0x8000);

  CHECK_THROWS_AS((void)parseLayoutConfig("bogus line\n"), Error);
  CHECK_THROWS_AS((void)parseLayoutConfig("section.nope.size=4\n"), Error);
  CHECK_THROWS_AS((void)parseLayoutConfig("section.mmio.size=x\n"), Error);
}

}
