// Copyright 2026 The s2d Authors
//
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
#include <string_view>

namespace s2d {

enum class ErrorCode {
  Precondition,
  Backend,
  EmptyCode,
  Config,
  Io,
  ToolMissing,
  ConversionFailed,
  EmptyReference,
  BothEmpty,
  EmptyInput,
  DimensionMismatch,
  NotSymmetric,
  NotPsd,
  ModelMismatch,
  DegenerateInput,
  NumericalFailure,
  SidecarUnavailable,
  Parse,
};

std::string_view to_string(ErrorCode code);

/// Base exception for every recoverable failure raised by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Transport or protocol failure talking to a chat backend. Carries the
/// number of transport attempts made before giving up.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, int attempts)
      : Error(ErrorCode::Backend, what), attempts_(attempts) {}

  [[nodiscard]] int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

}  // namespace s2d
