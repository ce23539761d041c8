#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace colcal {

enum class ErrorCode {
  Parse,
  Validation,
  InsufficientData,
  InsufficientViews,
  Degenerate,
  InvalidConic,
  InvalidGeometry,
  Orientation,
  PointAtInfinity,
  BehindCamera,
  Correspondence,
  Ambiguity,
  NonConvergence,
  Divergence,
  Generation,
  Sampling,
  Evaluation,
  Io,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Malformed input; line is 1-based, 0 when the format has no lines.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorCode::Parse, what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace colcal
