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

#include <sstream>

#include "Fixtures.hpp"

namespace fixtures
{

  const MemoryMap&
  defaultMap()
  {
    static MemoryMap map = planLayout(defaultSectionSpecs());
    return map;
  }

  const std::vector<TriggerConfig>&
  defaultPolicy()
  {
    static std::vector<TriggerConfig> policy =
      deriveTriggerPolicy(defaultMap());
    return policy;
  }

  Machine
  makeMachine(const std::string& programText)
  {
    return makeMachine(programText, defaultMap());
  }

  Machine
  makeMachine(const std::string& programText, const MemoryMap& map)
  {
    Image img = assemble(programText, map);
    return Machine(img, map, deriveTriggerPolicy(map));
  }

  std::string
  helloProgram(bool instrumented)
  {
    ProgramBuild build;
    FunctionSkeleton main;
    main.name = "main";
    main.leaf = false;
    main.frameSize = 16;
    main.body = {
      "li a0, 104",      // 'h'
      "call putchar",
      "li a0, 105",      // 'i'
      "call putchar",
      "li a0, 10",       // '\n'
      "call putchar",
      "li a0, 0",
    };
    build.functions = { main };
    return buildProgramText(build, instrumented);
  }

  std::string
  callChainProgram(unsigned calls, bool instrumented)
  {
    ProgramBuild build;

    FunctionSkeleton work;
    work.name = "work";
    work.leaf = false;
    work.frameSize = 16;
    work.body = {
      "call helper",
      "addi s3, s3, 1",
    };

    FunctionSkeleton helper;
    helper.name = "helper";
    helper.leaf = true;
    helper.frameSize = 0;
    helper.body = { "addi a0, a0, 1" };

    FunctionSkeleton main;
    main.name = "main";
    main.leaf = false;
    main.frameSize = 16;
    for (unsigned i = 0; i < calls; ++i)
      main.body.push_back("call work");
    main.body.push_back("li a0, 0");

    build.functions = { main, work, helper };
    return buildProgramText(build, instrumented);
  }

  std::string
  leafOnlyProgram(bool instrumented)
  {
    ProgramBuild build;
    FunctionSkeleton main;
    main.name = "main";
    main.leaf = true;
    main.frameSize = 16;
    main.body = {
      "li t0, 5",
      "li t1, 7",
      "add t2, t0, t1",
      "mul t3, t0, t1",
      "li a0, 0",
    };
    build.functions = { main };
    return buildProgramText(build, instrumented);
  }

  std::string
  nestedCallProgram(unsigned depth, bool instrumented)
  {
    ProgramBuild build;
    for (unsigned level = 0; level < depth; ++level)
      {
        FunctionSkeleton fn;
        fn.name = level == 0 ? "main" : "level" + std::to_string(level);
        fn.leaf = false;
        fn.frameSize = 16;
        if (level + 1 < depth)
          fn.body.push_back("call level" + std::to_string(level + 1));
        else
          fn.body.push_back("addi s4, s4, 1");
        if (level == 0)
          fn.body.push_back("li a0, 0");
        build.functions.push_back(fn);
      }
    return buildProgramText(build, instrumented);
  }

  std::string
  mixedProgram(bool instrumented)
  {
    ProgramBuild build;

    FunctionSkeleton twig;
    twig.name = "twig";
    twig.leaf = true;
    twig.frameSize = 0;
    twig.body = { "addi a0, a0, 3" };

    FunctionSkeleton branch2;
    branch2.name = "branch2";
    branch2.leaf = false;
    branch2.frameSize = 16;
    branch2.body = { "call twig", "call twig" };

    FunctionSkeleton main;
    main.name = "main";
    main.leaf = false;
    main.frameSize = 32;
    main.body = {
      "call twig",
      "call branch2",
      "call branch2",
      "li a0, 0",
    };

    build.functions = { main, branch2, twig };
    return buildProgramText(build, instrumented);
  }

  std::string
  recursionProgram(unsigned depth, bool instrumented)
  {
    ProgramBuild build;

    // recurse(n): if n != 0 recurse(n - 1)
    FunctionSkeleton recurse;
    recurse.name = "recurse";
    recurse.leaf = false;
    recurse.frameSize = 16;
    recurse.body = {
      "beqz a0, recurse$done",
      "addi a0, a0, -1",
      "call recurse",
      "recurse$done:",
    };

    FunctionSkeleton main;
    main.name = "main";
    main.leaf = false;
    main.frameSize = 16;
    main.body = {
      "li a0, " + std::to_string(depth),
      "call recurse",
      "li a0, 0",
    };

    build.functions = { main, recurse };
    return buildProgramText(build, instrumented);
  }

  std::string
  attackProgram(bool instrumented)
  {
    ProgramBuild build;

    // The payload halts through the console so a diverted run is visible.
    FunctionSkeleton payload;
    payload.name = "payload";
    payload.leaf = true;
    payload.frameSize = 0;
    payload.body = { "li s5, 0x5AF" };

    // main overwrites its own on-stack ra copy (frame slot 12(sp)) with the
    // payload address before returning.
    FunctionSkeleton main;
    main.name = "main";
    main.leaf = false;
    main.frameSize = 16;
    main.body = {
      "la t0, payload",
      "sw t0, 12(sp)",
      "li a0, 0",
    };

    build.functions = { main, payload };
    return buildProgramText(build, instrumented);
  }

  std::string
  switchProgram(bool instrumented)
  {
    ProgramBuild build;

    // The selector arrives in a0 (zero at boot), so the dispatch is dynamic
    // from the scanner's point of view.
    FunctionSkeleton main;
    main.name = "main";
    main.leaf = false;
    main.frameSize = 16;
    main.body = {
      "li t1, 4",                 // entry count
      "bgeu a0, t1, main$bad",
      "slli t0, a0, 2",
      "la t1, jt0",
      "add t0, t0, t1",
      "lw t0, 0(t0)",
      "jr t0",
      "main$case0:",
      "li a0, 0",
      "j main$done",
      "main$case1:",
      "li a0, 11",
      "j main$done",
      "main$case2:",
      "li a0, 12",
      "j main$done",
      "main$case3:",
      "li a0, 13",
      "j main$done",
      "main$bad:",
      "li a0, 99",
      "main$done:",
    };

    build.functions = { main };
    build.rodataLines = {
      "jt0:",
      ".word main$case0",
      ".word main$case1",
      ".word main$case2",
      ".word main$case3",
      ".jumptable jt0 4",
    };
    return buildProgramText(build, instrumented);
  }

  std::string
  icallProgram(bool instrumented)
  {
    ProgramBuild build;

    FunctionSkeleton cbA;
    cbA.name = "cb_a";
    cbA.leaf = true;
    cbA.frameSize = 0;
    cbA.body = { "li a0, 7" };

    FunctionSkeleton cbB;
    cbB.name = "cb_b";
    cbB.leaf = true;
    cbB.frameSize = 0;
    cbB.body = { "li a0, 0" };

    // Pointer-form check in a separate function, so the incoming pointer is
    // dynamic: p must point into the table, 4-aligned; the call goes
    // through the validated slot.
    FunctionSkeleton dispatch;
    dispatch.name = "dispatch";
    dispatch.leaf = false;
    dispatch.frameSize = 16;
    dispatch.body = {
      "la t1, jt_calls",
      "sub t0, a0, t1",
      "li t2, 8",                // 2 entries * 4
      "bgeu t0, t2, dispatch$bad",
      "andi t2, t0, 3",
      "bnez t2, dispatch$bad",
      "lw t0, 0(a0)",
      "jalr ra, 0(t0)",
      "j dispatch$done",
      "dispatch$bad:",
      "li s8, 1",
      "dispatch$done:",
    };

    FunctionSkeleton main;
    main.name = "main";
    main.leaf = false;
    main.frameSize = 16;
    main.body = {
      "la a0, jt_calls",
      "addi a0, a0, 4",          // second entry: cb_b
      "call dispatch",
      "li a0, 0",
    };

    build.functions = { main, dispatch, cbA, cbB };
    build.rodataLines = {
      "jt_calls:",
      ".word cb_a",
      ".word cb_b",
      ".jumptable jt_calls 2",
    };
    return buildProgramText(build, instrumented);
  }

  std::string
  handlerProgram(const std::string& mode)
  {
    ProgramBuild build;

    FunctionSkeleton main;
    main.name = "main";
    main.leaf = false;
    main.frameSize = 16;
    main.body = {
      "li s6, 1",
      ".word 0xffffffff",        // illegal instruction: enter the handler
      "li a0, 0",
    };

    // The handler receives the editable frame copy address in a0.
    // Frame layout: word 0 = saved pc, word 1 = cause, x1 at 8, x18 at 76.
    FunctionSkeleton handler;
    handler.name = "handler";
    handler.leaf = true;
    handler.frameSize = 0;
    if (mode == "skip")
      handler.body = {
        "lw t0, 0(a0)",
        "addi t0, t0, 4",
        "sw t0, 0(a0)",
      };
    else if (mode == "divert")
      handler.body = {
        "la t0, handler",        // arbitrary pc: anything but +0/+4
        "sw t0, 0(a0)",
      };
    else if (mode == "corrupt")
      handler.body = {
        "li t0, 0xdead",
        "sw t0, 8(a0)",          // frame ra slot
        "li t0, 0xbeef",
        "sw t0, 76(a0)",         // frame SSP slot
        "lw t0, 0(a0)",
        "addi t0, t0, 4",
        "sw t0, 0(a0)",
      };

    build.functions = { main, handler };
    build.handlerFunction = "handler";
    return buildProgramText(build, true);
  }

  std::string
  interruptProgram(bool handlerWritesFrame)
  {
    ProgramBuild build;

    FunctionSkeleton main;
    main.name = "main";
    main.leaf = false;
    main.frameSize = 16;
    for (int i = 0; i < 40; ++i)
      main.body.push_back("addi s7, s7, 1");
    main.body.push_back("li a0, 0");

    FunctionSkeleton handler;
    handler.name = "handler";
    handler.leaf = true;
    handler.frameSize = 0;
    if (handlerWritesFrame)
      handler.body = {
        "li t0, 1",
        "sw t0, 0(a0)",          // the frame lives on the shadow stack
      };
    else
      handler.body = {
        "li t0, 1",
        "li t1, 0x28000",        // untrusted-data base
        "sw t0, 0(t1)",
      };

    build.functions = { main, handler };
    build.handlerFunction = "handler";
    return buildProgramText(build, true);
  }

  std::string
  dualHandlerProgram()
  {
    ProgramBuild build;

    FunctionSkeleton main;
    main.name = "main";
    main.leaf = false;
    main.frameSize = 16;
    main.body = {
      ".word 0xffffffff",        // one exception to keep the handler busy
      "li a0, 0",
    };

    FunctionSkeleton handler;
    handler.name = "handler";
    handler.leaf = true;
    handler.frameSize = 0;
    handler.body = {
      "lw t1, 4(a0)",            // saved cause; interrupts have bit 31 set
      "blt t1, x0, handler$irq",
      "lw t0, 0(a0)",
      "addi t0, t0, 4",
      "sw t0, 0(a0)",
      "j handler$done",
      "handler$irq:",
      "li t0, 1",
      "li t2, 0x28000",
      "sw t0, 0(t2)",
      "handler$done:",
    };

    build.functions = { main, handler };
    build.handlerFunction = "handler";
    return buildProgramText(build, true);
  }

  std::vector<FunctionSkeleton>
  randomSkeletons(std::mt19937& rng, unsigned count)
  {
    std::vector<FunctionSkeleton> fns;

    // Scratch registers the generator may use freely.
    const std::vector<std::string> scratch = {
      "t0", "t1", "t2", "a1", "a2", "a3", "a4", "s3", "s4", "s5"
    };
    auto anyScratch = [&]() { return scratch[rng() % scratch.size()]; };

    FunctionSkeleton main;
    main.name = "main";
    main.leaf = false;
    main.frameSize = 16;
    fns.push_back(main);

    for (unsigned i = 1; i < count; ++i)
      {
        FunctionSkeleton fn;
        fn.name = "fn" + std::to_string(i);
        fn.leaf = rng() % 2 == 0;
        fn.frameSize = fn.leaf ? (rng() % 2 ? 0 : 16) : 16 * (1 + rng() % 3);
        unsigned lines = 1 + rng() % 5;
        for (unsigned k = 0; k < lines; ++k)
          switch (rng() % 4)
            {
            case 0:
              fn.body.push_back("addi " + anyScratch() + ", " +
                                anyScratch() + ", " +
                                std::to_string(int(rng() % 64) - 32));
              break;
            case 1:
              fn.body.push_back("add " + anyScratch() + ", " + anyScratch() +
                                ", " + anyScratch());
              break;
            case 2:
              fn.body.push_back("li " + anyScratch() + ", " +
                                std::to_string(rng() % 100000));
              break;
            case 3:
              fn.body.push_back("mul " + anyScratch() + ", " + anyScratch() +
                                ", " + anyScratch());
              break;
            }
        fns.push_back(fn);
      }

    // Wire up calls: each non-leaf calls a few later functions (later
    // indices only, so the call graph is acyclic) or a leaf.
    for (unsigned i = 0; i < fns.size(); ++i)
      {
        if (fns[i].leaf)
          continue;
        unsigned callCount = 1 + rng() % 3;
        for (unsigned c = 0; c < callCount; ++c)
          {
            unsigned callee = i + 1 < fns.size() ?
              i + 1 + rng() % (fns.size() - i - 1) : 0;
            if (callee != 0 and callee < fns.size())
              fns[i].body.insert(fns[i].body.begin() + rng() %
                                 (fns[i].body.size() + 1),
                                 "call " + fns[callee].name);
          }
      }
    fns[0].body.push_back("li a0, 0");
    return fns;
  }

  std::string
  programFromSkeletons(const std::vector<FunctionSkeleton>& fns,
                       bool instrumented)
  {
    ProgramBuild build;
    build.functions = fns;
    return buildProgramText(build, instrumented);
  }

}
