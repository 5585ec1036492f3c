// Copyright (C) 2026 The nightaug Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace nightaug {

enum class ErrorCode {
  kInvalidArgument = 1,
  kInvalidGeometry,
  kShapeMismatch,
  kOutOfRange,
  kIo,
  kParse,
  kNumericalInstability,
  kUndefinedMetric,
  kContractViolation,
  kTranslation,
  kNonFinite,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace nightaug
