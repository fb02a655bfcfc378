// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the cdflow project.

#pragma once

#include <stdexcept>
#include <string>

namespace cdflow {

enum class ErrorCode {
  dimension,   // shape or size mismatch
  domain,      // argument outside the function's domain
  singular,    // non-invertible transform (zero scale, degenerate W)
  numeric,     // NaN/Inf produced
  contract,    // caller violated a precondition
  input,       // unreadable or malformed input file
  output,      // unwritable output location
  format,      // checkpoint format or version mismatch
  degenerate,  // statistic undefined for the given data
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace cdflow
