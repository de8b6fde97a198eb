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

#include "s2d/error.hpp"

namespace s2d {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Precondition: return "Precondition";
    case ErrorCode::Backend: return "BackendError";
    case ErrorCode::EmptyCode: return "EmptyCode";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::ToolMissing: return "ToolMissing";
    case ErrorCode::ConversionFailed: return "ConversionFailed";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::BothEmpty: return "BothEmpty";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotPsd: return "NotPSD";
    case ErrorCode::ModelMismatch: return "ModelMismatch";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::SidecarUnavailable: return "SidecarUnavailable";
    case ErrorCode::Parse: return "ParseError";
  }
  return "Unknown";
}

}  // namespace s2d
