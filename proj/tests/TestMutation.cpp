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

#include "detrap/Scanner.hpp"
#include "Fixtures.hpp"
#include "Mutations.hpp"

using namespace detrap;
using fixtures::defaultMap;


TEST_SUITE("mutation")
{

TEST_CASE("clean bases scan clean and run to completion")
{
  for (const auto& base : mutation::baseFixtures())
    {
      CAPTURE(base.name);
      Image img = assemble(base.text, defaultMap());
      ScanReport report = scan(img, defaultMap());
      CAPTURE(formatReport(report));
      REQUIRE(report.pass());

      Machine machine(img, defaultMap(), fixtures::defaultPolicy());
      machine.run(200000);
      CHECK(machine.status() == MachineStatus::Halted);
      CHECK(machine.haltCode() == 0);
      CHECK(machine.policyViolations() == 0);
    }
}

TEST_CASE("every seeded violation is caught with its rule id")
{
  auto mutants = mutation::allMutants();
  REQUIRE(mutants.size() >= 70);

  unsigned caught = 0;
  for (const auto& mutant : mutants)
    {
      CAPTURE(mutant.description);
      Image img = assemble(mutant.text, defaultMap());
      ScanReport report = scan(img, defaultMap());
      CAPTURE(formatReport(report));
      bool detected = report.countRule(mutant.expectedRule) >= 1;
      CHECK(detected);
      if (detected)
        ++caught;
    }
  CHECK(caught == mutants.size());
}

TEST_CASE("each rule is exercised by the mutant set")
{
  auto mutants = mutation::allMutants();
  for (const char* rule : { "R1", "R2", "R3", "R4", "R5", "R6", "R7" })
    {
      unsigned count = 0;
      for (const auto& mutant : mutants)
        if (mutant.expectedRule == rule)
          ++count;
      CAPTURE(rule);
      CHECK(count >= 6);
    }
}

}
