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
#include "detrap/Instrument.hpp"
#include "Fixtures.hpp"

using namespace detrap;

namespace
{

  unsigned countMatches(const std::vector<std::string>& lines,
                        const std::string& needle)
  {
    unsigned n = 0;
    for (const auto& line : lines)
      if (line.find(needle) != std::string::npos)
        ++n;
    return n;
  }

}


TEST_SUITE("instrument")
{

TEST_CASE("leaf functions never touch ra or the shadow stack pointer")
{
  FunctionSkeleton leaf;
  leaf.name = "tiny";
  leaf.leaf = true;
  leaf.frameSize = 16;
  leaf.body = { "addi a0, a0, 1" };

  auto fragments = instrumentFunction(leaf, {});
  CHECK(fragments.trusted.empty());
  CHECK(countMatches(fragments.untrusted, "x18") == 0);
  CHECK(countMatches(fragments.untrusted, "sw ra") == 0);
  CHECK(countMatches(fragments.untrusted, "lw ra") == 0);
  CHECK(countMatches(fragments.untrusted, "ret") == 1);
}

TEST_CASE("non-leaf external functions get the prologue jump")
{
  FunctionSkeleton fn;
  fn.name = "foo";
  fn.leaf = false;
  fn.frameSize = 16;
  fn.externalLinkage = true;
  fn.body = { "addi a0, a0, 1" };

  auto fragments = instrumentFunction(fn, { "foo" });

  REQUIRE(fragments.untrusted.size() >= 2);
  CHECK(fragments.untrusted[0] == "foo:");
  CHECK(fragments.untrusted[1] == "j foo$trampoline");

  // Trampoline: push ra, bump SSP, jump back.
  REQUIRE(fragments.trusted.size() == 4);
  CHECK(fragments.trusted[0] == "foo$trampoline:");
  CHECK(fragments.trusted[1] == "sw ra, 0(x18)");
  CHECK(fragments.trusted[2] == "addi x18, x18, 4");
  CHECK(fragments.trusted[3] == "j foo$postjump");
}

TEST_CASE("internal functions omit the prologue jump")
{
  FunctionSkeleton fn;
  fn.name = "foo";
  fn.leaf = false;
  fn.frameSize = 16;
  fn.externalLinkage = false;
  fn.body = { "addi a0, a0, 1" };

  auto fragments = instrumentFunction(fn, { "foo" });
  CHECK(countMatches(fragments.untrusted, "j foo$trampoline") == 0);

  // Static overhead per call over the baseline: three trampoline
  // instructions plus one epilogue instruction.
  auto baseline = emitBaselineFunction(fn);
  unsigned instrumentedCount = 0;
  for (const auto& line : fragments.untrusted)
    if (line.back() != ':')
      ++instrumentedCount;
  for (const auto& line : fragments.trusted)
    if (line.back() != ':')
      ++instrumentedCount;
  unsigned baselineCount = 0;
  for (const auto& line : baseline)
    if (line.back() != ':')
      ++baselineCount;
  CHECK(instrumentedCount - baselineCount == perCallOverhead);
}

TEST_CASE("epilogue pops the shadow copy")
{
  FunctionSkeleton fn;
  fn.name = "foo";
  fn.leaf = false;
  fn.frameSize = 32;
  fn.body = { "nop" };

  auto fragments = instrumentFunction(fn, {});
  auto& lines = fragments.untrusted;
  REQUIRE(lines.size() >= 4);
  CHECK(lines[lines.size() - 4] == "addi x18, x18, -4");
  CHECK(lines[lines.size() - 3] == "lw ra, 0(x18)");
  CHECK(lines[lines.size() - 2] == "addi sp, sp, 32");
  CHECK(lines[lines.size() - 1] == "ret");

  // Dual write: the prologue also spills ra to the untrusted stack.
  CHECK(countMatches(lines, "sw ra, 28(sp)") == 1);
}

TEST_CASE("direct calls are retargeted to trampolines")
{
  FunctionSkeleton fn;
  fn.name = "caller";
  fn.leaf = false;
  fn.frameSize = 16;
  fn.body = { "call foo", "call bar", "call leafy" };

  auto fragments = instrumentFunction(fn, { "foo", "bar", "caller" });
  CHECK(countMatches(fragments.untrusted, "call foo$trampoline") == 1);
  CHECK(countMatches(fragments.untrusted, "call bar$trampoline") == 1);
  CHECK(countMatches(fragments.untrusted, "call leafy") == 1);
  CHECK(countMatches(fragments.untrusted, "call leafy$trampoline") == 0);
}

TEST_CASE("skeleton violations are rejected")
{
  FunctionSkeleton bad;
  bad.name = "bad";
  bad.leaf = false;
  bad.frameSize = 16;

  bad.body = { "lw ra, 0(sp)" };
  CHECK_THROWS_AS((void)instrumentFunction(bad, {}), Error);

  bad.body = { "addi x18, x18, 8" };
  CHECK_THROWS_AS((void)instrumentFunction(bad, {}), Error);

  bad.body = { "mv s2, a0" };   // s2 is the shadow stack pointer
  CHECK_THROWS_AS((void)instrumentFunction(bad, {}), Error);

  bad.body = { "nop" };
  bad.frameSize = 20;   // not a multiple of 16
  CHECK_THROWS_AS((void)instrumentFunction(bad, {}), Error);

  FunctionSkeleton leafCaller;
  leafCaller.name = "leafCaller";
  leafCaller.leaf = true;
  leafCaller.frameSize = 0;
  leafCaller.body = { "call foo" };
  CHECK_THROWS_AS((void)instrumentFunction(leafCaller, {}), Error);
}

TEST_CASE("calls in bodies are allowed to write ra")
{
  FunctionSkeleton fn;
  fn.name = "ok";
  fn.leaf = false;
  fn.frameSize = 16;
  fn.body = { "call foo", "jal ra, bar" };
  CHECK_NOTHROW((void)instrumentFunction(fn, {}));
}

}
