// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#include "common/error.hpp"

namespace cdflow {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::dimension: return "dimension error";
    case ErrorCode::domain: return "domain error";
    case ErrorCode::singular: return "singularity error";
    case ErrorCode::numeric: return "numeric error";
    case ErrorCode::contract: return "contract error";
    case ErrorCode::input: return "input error";
    case ErrorCode::output: return "output error";
    case ErrorCode::format: return "format error";
    case ErrorCode::degenerate: return "degenerate-correlation error";
  }
  return "unknown error";
}

}  // namespace cdflow
