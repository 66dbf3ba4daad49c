/*
Copyright 2026 The Headforge Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS-IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#ifndef HEADFORGE_ERROR_H_
#define HEADFORGE_ERROR_H_

#include <stdexcept>
#include <string>

namespace headforge {

enum class ErrorCode {
  kDimension,
  kInvalidArgument,
  kBadMagic,
  kTruncated,
  kPayloadSize,
  kIo,
  kUndefinedDepth,
  kEmptyRegion,
  kDegenerate,
  kNonFinite,
  kBehindCamera,
  kConfig,
};

const char* error_code_name(ErrorCode code);

// Every library failure is reported through this type; |code| lets callers
// and the CLI map failures to machine-readable tags.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace headforge

#endif  // HEADFORGE_ERROR_H_
