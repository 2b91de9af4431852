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
#include <random>

#include "detrap/Errors.hpp"
#include "detrap/Image.hpp"
#include "Fixtures.hpp"

using namespace detrap;

namespace
{

  std::string minimalProgram()
  {
    return
      ".section boot kind=trusted-code trust=trusted base=0x10000\n"
      ".sym _start 0 function\n"
      "_start:\n"
      "nop\n"
      "ecall\n"
      ".entry _start\n";
  }

}


TEST_SUITE("image")
{

TEST_CASE("assemble a nop into an untrusted section")
{
  std::string text =
    ".section boot kind=trusted-code trust=trusted base=0x10000\n"
    ".sym _start 0 function\n"
    "_start:\n"
    "ecall\n"
    ".section code kind=untrusted-code trust=untrusted base=auto\n"
    "nop\n"
    ".entry _start\n";
  Image img = assemble(text, fixtures::defaultMap());

  const auto* section = img.sectionByName("code");
  REQUIRE(section != nullptr);
  CHECK(section->base == 0x0001f000);
  REQUIRE(section->bytes.size() == 4);
  CHECK(img.readWord(0x0001f000) == uint32_t(0x00000013));
}

TEST_CASE("labels, symbols, branches")
{
  std::string text =
    ".section boot kind=trusted-code trust=trusted base=0x10000\n"
    ".sym _start 0 function\n"
    ".sym foo foo function\n"
    "_start:\n"
    "li a0, 3\n"
    "loop:\n"
    "addi a0, a0, -1\n"
    "bnez a0, loop\n"
    "foo:\n"
    "ecall\n"
    ".entry _start\n";
  Image img = assemble(text, fixtures::defaultMap());

  const auto* foo = img.symbolByName("foo");
  REQUIRE(foo != nullptr);
  CHECK(foo->address == 0x10000 + 12);
  CHECK(img.entryPoint == 0x10000);
}

TEST_CASE("jal out of range")
{
  // A jal target past the 21-bit +-1 MiB window is a range error.
  std::string text =
    ".section boot kind=trusted-code trust=trusted base=0x10000\n"
    ".sym _start 0 function\n"
    "_start:\n"
    "j far_label\n"
    "ecall\n"
    ".section far kind=untrusted-data trust=untrusted base=0x210000\n"
    "far_label:\n"
    ".word 0\n"
    ".entry _start\n";
  try
    {
      (void)assemble(text, fixtures::defaultMap());
      FAIL("expected RangeError");
    }
  catch (const Error& error)
    {
      CHECK(error.code() == ErrorCode::RangeError);
    }

  // In-range jumps still work.
  std::string ok =
    ".section boot kind=trusted-code trust=trusted base=0x10000\n"
    ".sym _start 0 function\n"
    "_start:\n"
    "j next\n"
    "next:\n"
    "ecall\n"
    ".entry _start\n";
  CHECK_NOTHROW((void)assemble(ok, fixtures::defaultMap()));
}

TEST_CASE("branch range error")
{
  // Conditional branches reach +-4 KiB only; 0x10000 -> 0x17ffc is too far.
  std::string text =
    ".section boot kind=trusted-code trust=trusted base=0x10000\n"
    ".sym _start 0 function\n"
    "_start:\n"
    "beq x5, x6, target\n";
  for (int i = 0; i < 2000; ++i)
    text += "nop\n";
  text += "target:\n";
  text += "ecall\n";
  text += ".entry _start\n";

  try
    {
      (void)assemble(text, fixtures::defaultMap());
      FAIL("expected RangeError");
    }
  catch (const Error& error)
    {
      CHECK(error.code() == ErrorCode::RangeError);
    }
}

TEST_CASE("unknown symbols and parse errors carry line info")
{
  try
    {
      (void)assemble(".section a kind=untrusted-code trust=untrusted "
                     "base=auto\nj nowhere\n", fixtures::defaultMap());
      FAIL("expected UnknownSymbol");
    }
  catch (const Error& error)
    {
      CHECK(error.code() == ErrorCode::UnknownSymbol);
    }

  try
    {
      (void)assemble("bogus!\n", fixtures::defaultMap());
      FAIL("expected ParseError");
    }
  catch (const Error& error)
    {
      CHECK(error.code() == ErrorCode::ParseError);
      CHECK(std::string(error.what()).find("line 1") != std::string::npos);
    }
}

TEST_CASE("overlapping sections are rejected")
{
  std::string text =
    ".section a kind=trusted-code trust=trusted base=0x10000\n"
    ".sym _start 0 function\n"
    "_start:\n"
    "nop\n"
    "nop\n"
    ".section b kind=trusted-code trust=trusted base=0x10004\n"
    "nop\n"
    ".entry _start\n";
  try
    {
      (void)assemble(text, fixtures::defaultMap());
      FAIL("expected ParseError");
    }
  catch (const Error& error)
    {
      CHECK(error.code() == ErrorCode::ParseError);
      CHECK(std::string(error.what()).find("OVERLAP") != std::string::npos);
    }
}

TEST_CASE("entry must lie in trusted code")
{
  std::string text =
    ".section code kind=untrusted-code trust=untrusted base=auto\n"
    ".sym main 0 function\n"
    "main:\n"
    "nop\n"
    ".entry main\n";
  CHECK_THROWS_AS((void)assemble(text, fixtures::defaultMap()), Error);
}

TEST_CASE("word directive emits little-endian")
{
  std::string text = minimalProgram() +
    ".section data kind=untrusted-data trust=untrusted base=0x28000\n"
    ".word 0x12345678\n";
  Image img = assemble(text, fixtures::defaultMap());
  const auto* data = img.sectionByName("data");
  REQUIRE(data != nullptr);
  CHECK(data->bytes[0] == 0x78);
  CHECK(data->bytes[1] == 0x56);
  CHECK(data->bytes[2] == 0x34);
  CHECK(data->bytes[3] == 0x12);
}

TEST_CASE("li expansion forms")
{
  std::string text = minimalProgram() +
    ".section code kind=untrusted-code trust=untrusted base=auto\n"
    "li t0, 100\n"           // addi
    "li t1, 0x1000\n"        // lui only
    "li t2, 0x12345\n";      // lui + addi
  Image img = assemble(text, fixtures::defaultMap());
  const auto* code = img.sectionByName("code");
  REQUIRE(code != nullptr);
  CHECK(code->bytes.size() == 4 + 4 + 8);

  // Machine-check the expansions end-to-end.
  uint32_t base = code->base;
  Instr i0 = decode(*img.readWord(base));
  CHECK(i0.op == Op::Addi);
  CHECK(i0.imm == 100);
  Instr i1 = decode(*img.readWord(base + 4));
  CHECK(i1.op == Op::Lui);
  CHECK(uint32_t(i1.imm) == 0x1000);
  Instr i2 = decode(*img.readWord(base + 8));
  CHECK(i2.op == Op::Lui);
  Instr i3 = decode(*img.readWord(base + 12));
  CHECK(i3.op == Op::Addi);
  CHECK(uint32_t(i2.imm) + uint32_t(i3.imm) == 0x12345);
}

TEST_CASE("emit/parse round trip is the identity")
{
  std::string source = fixtures::switchProgram(true);
  Image img = assemble(source, fixtures::defaultMap());

  std::string emitted = emitImage(img);
  Image reparsed = parseImage(emitted);
  std::string reEmitted = emitImage(reparsed);
  CHECK(emitted == reEmitted);

  // Structure survives.
  CHECK(reparsed.sections.size() == img.sections.size());
  CHECK(reparsed.symbols.size() == img.symbols.size());
  REQUIRE(reparsed.jumptables.size() == img.jumptables.size());
  CHECK(reparsed.entryPoint == img.entryPoint);
  for (size_t i = 0; i < img.jumptables.size(); ++i)
    {
      CHECK(reparsed.jumptables[i].base == img.jumptables[i].base);
      CHECK(reparsed.jumptables[i].entryCount ==
            img.jumptables[i].entryCount);
    }
}

TEST_CASE("round trip preserves the handler and empty images")
{
  std::string withHandler = fixtures::handlerProgram("skip");
  Image img = assemble(withHandler, fixtures::defaultMap());
  REQUIRE(img.untrustedHandler.has_value());

  Image reparsed = parseImage(emitImage(img));
  REQUIRE(reparsed.untrustedHandler.has_value());
  CHECK(*reparsed.untrustedHandler == *img.untrustedHandler);

  Image minimal = assemble(minimalProgram(), fixtures::defaultMap());
  CHECK(emitImage(parseImage(emitImage(minimal))) == emitImage(minimal));
}

TEST_CASE("property: random programs round trip through emit/parse")
{
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 20; ++trial)
    {
      auto fns = fixtures::randomSkeletons(rng, 2 + rng() % 5);
      std::string source = fixtures::programFromSkeletons(fns, true);
      Image img = assemble(source, fixtures::defaultMap());
      std::string emitted = emitImage(img);
      CHECK(emitImage(parseImage(emitted)) == emitted);
    }
}

TEST_CASE("parse-only mode rejects auto bases")
{
  CHECK_THROWS_AS(
    (void)parseImage(".section a kind=untrusted-code trust=untrusted "
                     "base=auto\nnop\n"),
    Error);
}

TEST_CASE("assembler output matches an independent toolchain")
{
  // The same sequence assembled with clang --target=riscv32 -mno-relax;
  // covers forward/backward branches, the protected epilogue, pseudo
  // instructions, and the upper-immediate forms.
  std::string text =
    ".section code kind=trusted-code trust=trusted base=0x10000\n"
    ".sym _start 0 function\n"
    "_start:\n"
    "foo:\n"
    "addi sp, sp, -16\n"
    "sw ra, 12(sp)\n"
    "beqz a0, skip\n"
    "addi a0, a0, -1\n"
    "jal ra, foo\n"
    "skip:\n"
    "addi x18, x18, -4\n"
    "lw ra, 0(x18)\n"
    "addi sp, sp, 16\n"
    "jalr x0, 0(x1)\n"
    "slli t0, a0, 2\n"
    "bltu t0, t2, foo\n"
    "bgeu a0, t1, skip\n"
    "andi t2, t0, 3\n"
    "bne t2, x0, skip\n"
    "sub t0, a0, t1\n"
    "add t0, t0, t1\n"
    "mv s4, a1\n"
    "lui t1, 31\n"
    "auipc t3, 0\n"
    ".entry _start\n";

  static constexpr uint32_t expected[] = {
    0xff010113, 0x00112623, 0x00050663, 0xfff50513, 0xff1ff0ef,
    0xffc90913, 0x00092083, 0x01010113, 0x00008067, 0x00251293,
    0xfc72ece3, 0xfe6574e3, 0x0032f393, 0xfe0390e3, 0x406502b3,
    0x006282b3, 0x00058a13, 0x0001f337, 0x00000e17,
  };

  Image img = assemble(text, fixtures::defaultMap());
  const auto* code = img.sectionByName("code");
  REQUIRE(code != nullptr);
  REQUIRE(code->bytes.size() == sizeof expected);
  for (size_t i = 0; i < std::size(expected); ++i)
    {
      CAPTURE(i);
      CHECK(*img.readWord(code->base + 4 * i) == expected[i]);
    }
}

TEST_CASE("jumptables must lie in rodata or code")
{
  std::string text = minimalProgram() +
    ".section data kind=untrusted-data trust=untrusted base=0x28000\n"
    "tbl:\n"
    ".word 0x10000\n"
    ".jumptable tbl 1\n";
  CHECK_THROWS_AS((void)assemble(text, fixtures::defaultMap()), Error);
}

}
