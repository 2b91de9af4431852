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

#include <cstring>
#include <string>

#include "detrap/Elf.hpp"
#include "detrap/Errors.hpp"

using namespace detrap;

namespace
{

  constexpr uint16_t elfMachineRiscv = 243;
  constexpr uint16_t elfTypeExec = 2;

  constexpr uint32_t shtProgbits = 1;
  constexpr uint32_t shtSymtab = 2;
  constexpr uint32_t shtNobits = 8;
  constexpr uint32_t shtRel = 9;
  constexpr uint32_t shtRela = 4;

  constexpr uint32_t shfAlloc = 0x2;
  constexpr uint32_t shfExecinstr = 0x4;
  constexpr uint32_t shfWrite = 0x1;

  struct Reader
  {
    std::span<const uint8_t> bytes;

    uint8_t u8(size_t offset) const
    {
      if (offset + 1 > bytes.size())
        throw Error(ErrorCode::FormatError, "truncated ELF");
      return bytes[offset];
    }

    uint16_t u16(size_t offset) const
    {
      return uint16_t(u8(offset)) | uint16_t(u8(offset + 1)) << 8;
    }

    uint32_t u32(size_t offset) const
    {
      return uint32_t(u16(offset)) | uint32_t(u16(offset + 2)) << 16;
    }

    std::string cstr(size_t offset) const
    {
      std::string out;
      while (offset < bytes.size() and bytes[offset] != 0)
        out.push_back(char(bytes[offset++]));
      return out;
    }
  };

  bool startsWith(const std::string& text, const char* prefix)
  {
    return text.rfind(prefix, 0) == 0;
  }

}


Image
detrap::loadElf32(std::span<const uint8_t> bytes)
{
  Reader r{ bytes };

  if (bytes.size() < 52 or r.u8(0) != 0x7f or r.u8(1) != 'E' or
      r.u8(2) != 'L' or r.u8(3) != 'F')
    throw Error(ErrorCode::FormatError, "not an ELF file");
  if (r.u8(4) != 1)
    throw Error(ErrorCode::FormatError, "not ELF32");
  if (r.u8(5) != 1)
    throw Error(ErrorCode::FormatError, "not little-endian");
  if (r.u16(16) != elfTypeExec)
    throw Error(ErrorCode::FormatError, "not an executable");
  if (r.u16(18) != elfMachineRiscv)
    throw Error(ErrorCode::FormatError, "not a RISC-V binary");

  uint32_t entry = r.u32(24);
  uint32_t shoff = r.u32(32);
  uint16_t shentsize = r.u16(46);
  uint16_t shnum = r.u16(48);
  uint16_t shstrndx = r.u16(50);
  if (shentsize < 40 or shstrndx >= shnum)
    throw Error(ErrorCode::FormatError, "bad section header table");

  auto sh = [&](unsigned index, unsigned field) {
    return r.u32(shoff + size_t(index) * shentsize + field * 4);
  };

  uint32_t shstrOff = sh(shstrndx, 4);

  Image img;
  img.entryPoint = entry;

  unsigned symtabIx = shnum;
  for (unsigned i = 0; i < shnum; ++i)
    {
      uint32_t type = sh(i, 1);
      if (type == shtRel or type == shtRela)
        throw Error(ErrorCode::UnsupportedFeature,
                    "relocations present; link a final executable");
      if (type == shtSymtab)
        symtabIx = i;

      uint32_t flags = sh(i, 2);
      if ((flags & shfAlloc) == 0)
        continue;
      if (type != shtProgbits and type != shtNobits)
        continue;

      std::string name = r.cstr(shstrOff + sh(i, 0));
      uint32_t addr = sh(i, 3);
      uint32_t offset = sh(i, 4);
      uint32_t size = sh(i, 5);

      Image::Section section;
      section.name = name;
      section.base = addr;
      section.trusted = startsWith(name, ".trusted");
      if (flags & shfExecinstr)
        section.kind = section.trusted ? SectionKind::TrustedCode :
          SectionKind::UntrustedCode;
      else if (flags & shfWrite)
        section.kind = section.trusted ? SectionKind::TrustedData :
          SectionKind::UntrustedData;
      else
        section.kind = SectionKind::Rodata;

      section.bytes.resize(size, 0);
      if (type == shtProgbits and size > 0)
        {
          if (offset + size > bytes.size())
            throw Error(ErrorCode::FormatError, "section data out of file");
          std::memcpy(section.bytes.data(), bytes.data() + offset, size);
        }
      img.sections.push_back(std::move(section));
    }

  if (symtabIx < shnum)
    {
      uint32_t symOff = sh(symtabIx, 4);
      uint32_t symSize = sh(symtabIx, 5);
      uint32_t strtabIx = sh(symtabIx, 6);
      uint32_t entSize = sh(symtabIx, 9);
      if (entSize == 0)
        entSize = 16;
      uint32_t strOff = strtabIx < shnum ? sh(strtabIx, 4) : 0;

      for (uint32_t pos = 0; pos + entSize <= symSize; pos += entSize)
        {
          size_t at = symOff + pos;
          std::string name = r.cstr(strOff + r.u32(at));
          uint32_t value = r.u32(at + 4);
          uint32_t size = r.u32(at + 8);
          uint8_t info = r.u8(at + 12);
          unsigned type = info & 0xf;

          if (name.empty())
            continue;
          if (type != 1 and type != 2)   // STT_OBJECT, STT_FUNC
            continue;

          Image::Symbol symbol;
          symbol.name = name;
          symbol.address = value;
          symbol.kind = type == 2 ? SymbolKind::Function : SymbolKind::Object;
          if (startsWith(name, "__jt_"))
            {
              symbol.kind = SymbolKind::Jumptable;
              Image::Jumptable jt;
              jt.base = value;
              jt.entryCount = size / 4;
              img.jumptables.push_back(jt);
            }
          img.symbols.push_back(std::move(symbol));
        }
    }

  auto problems = img.validate();
  if (not problems.empty())
    {
      std::string joined;
      for (const auto& p : problems)
        joined += (joined.empty() ? "" : "; ") + p;
      throw Error(ErrorCode::FormatError, joined);
    }
  return img;
}
