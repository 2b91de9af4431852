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
#include <span>

#include "detrap/Image.hpp"

namespace detrap
{

  /// Ingest a little-endian ELF32 RISC-V executable.
  ///
  /// Allocatable sections become image sections; a section is trusted iff
  /// its name starts with ".trusted". Executable sections map to code,
  /// writable ones to data, the rest to rodata. Function and object symbols
  /// are imported; symbols named __jt_* additionally produce jumptable
  /// records (entry count from the symbol size).
  ///
  /// Throws FormatError on magic/class/endianness/machine/type mismatch and
  /// UnsupportedFeature when relocation sections are present.
  Image loadElf32(std::span<const uint8_t> bytes);

}
