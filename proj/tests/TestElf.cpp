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

#include <cstdlib>
#include <doctest.h>
#include <fstream>

#include "detrap/Elf.hpp"
#include "detrap/Errors.hpp"

using namespace detrap;

namespace
{

  std::vector<uint8_t> readBinary(const std::string& path)
  {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                                std::istreambuf_iterator<char>());
  }

  std::string fixturePath(const std::string& name)
  {
    const char* dir = std::getenv("DETRAP_FIXTURES");
    REQUIRE(dir != nullptr);
    return std::string(dir) + "/" + name;
  }

}


TEST_SUITE("elf")
{

TEST_CASE("load a linked rv32 executable")
{
  // Fixture assembled and linked with an independent toolchain
  // (clang -target riscv32 + lld): .trusted.text at 0x10000, .text at
  // 0x1f000, .rodata with a two-entry __jt_dispatch table, .data with one
  // word.
  auto bytes = readBinary(fixturePath("minimal_rv32.elf"));
  Image img = loadElf32(bytes);

  CHECK(img.entryPoint == 0x10000);

  const auto* trusted = img.sectionByName(".trusted.text");
  REQUIRE(trusted != nullptr);
  CHECK(trusted->trusted);
  CHECK(trusted->kind == SectionKind::TrustedCode);
  CHECK(trusted->base == 0x10000);
  CHECK(trusted->bytes.size() == 8);
  CHECK(img.readWord(0x10000) == uint32_t(0x00000013));
  CHECK(img.readWord(0x10004) == uint32_t(0x00000073));

  const auto* text = img.sectionByName(".text");
  REQUIRE(text != nullptr);
  CHECK_FALSE(text->trusted);
  CHECK(text->kind == SectionKind::UntrustedCode);
  CHECK(text->base == 0x1f000);

  const auto* rodata = img.sectionByName(".rodata");
  REQUIRE(rodata != nullptr);
  CHECK(rodata->kind == SectionKind::Rodata);

  const auto* data = img.sectionByName(".data");
  REQUIRE(data != nullptr);
  CHECK(data->kind == SectionKind::UntrustedData);
  CHECK(img.readWord(0x28000) == uint32_t(42));

  const auto* main = img.symbolByName("main");
  REQUIRE(main != nullptr);
  CHECK(main->kind == SymbolKind::Function);
  CHECK(main->address == 0x1f000);

  // The __jt_ symbol carries jumptable metadata (size 8 = 2 entries).
  REQUIRE(img.jumptables.size() == 1);
  CHECK(img.jumptables[0].base == 0x18000);
  CHECK(img.jumptables[0].entryCount == 2);
  CHECK(img.readWord(0x18000) == uint32_t(0x1f000));
}

TEST_CASE("64-bit and foreign-machine inputs are format errors")
{
  auto bytes = readBinary(fixturePath("minimal_rv32.elf"));

  auto elf64 = bytes;
  elf64[4] = 2;   // EI_CLASS = ELFCLASS64
  CHECK_THROWS_AS((void)loadElf32(elf64), Error);

  auto bigEndian = bytes;
  bigEndian[5] = 2;
  CHECK_THROWS_AS((void)loadElf32(bigEndian), Error);

  auto wrongMachine = bytes;
  wrongMachine[18] = 0x3e;   // x86-64
  CHECK_THROWS_AS((void)loadElf32(wrongMachine), Error);

  auto relocatable = bytes;
  relocatable[16] = 1;   // ET_REL
  CHECK_THROWS_AS((void)loadElf32(relocatable), Error);

  std::vector<uint8_t> truncated(bytes.begin(), bytes.begin() + 20);
  CHECK_THROWS_AS((void)loadElf32(truncated), Error);

  std::vector<uint8_t> notElf = { 0x13, 0x00, 0x00, 0x00 };
  CHECK_THROWS_AS((void)loadElf32(notElf), Error);
}

TEST_CASE("error codes distinguish format from unsupported features")
{
  auto bytes = readBinary(fixturePath("minimal_rv32.elf"));
  auto elf64 = bytes;
  elf64[4] = 2;
  try
    {
      (void)loadElf32(elf64);
      FAIL("expected FormatError");
    }
  catch (const Error& error)
    {
      CHECK(error.code() == ErrorCode::FormatError);
    }
}

TEST_CASE("relocation sections are unsupported")
{
  auto bytes = readBinary(fixturePath("minimal_rv32.elf"));

  // Re-type one section header as SHT_RELA.
  auto u32at = [&](size_t offset) {
    return uint32_t(bytes[offset]) | uint32_t(bytes[offset + 1]) << 8 |
      uint32_t(bytes[offset + 2]) << 16 | uint32_t(bytes[offset + 3]) << 24;
  };
  uint32_t shoff = u32at(32);
  uint16_t shentsize = bytes[46] | bytes[47] << 8;
  size_t typeField = shoff + 5 * shentsize + 4;   // header 5: .comment
  bytes[typeField] = 4;   // SHT_RELA
  bytes[typeField + 1] = bytes[typeField + 2] = bytes[typeField + 3] = 0;

  try
    {
      (void)loadElf32(bytes);
      FAIL("expected UnsupportedFeature");
    }
  catch (const Error& error)
    {
      CHECK(error.code() == ErrorCode::UnsupportedFeature);
    }
}

}
