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

#include <stdexcept>
#include <string>

namespace detrap
{

  /// Error codes used across the toolkit. Each maps to one failure class so
  /// callers (and tests) can match on the code instead of the message text.
  enum class ErrorCode
  {
    IllegalInstruction,
    UnencodableField,
    ParseError,
    RangeError,
    UnknownSymbol,
    SpecError,
    OverlapError,
    FormatError,
    UnsupportedFeature,
    LoadError,
    PolicyTruncated,
    SkeletonError,
  };

  const char* errorCodeName(ErrorCode code);

  class Error : public std::runtime_error
  {
  public:
    Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(errorCodeName(code)) + ": " + message),
        code_(code)
    { }

    ErrorCode code() const
    { return code_; }

  private:
    ErrorCode code_;
  };

}
