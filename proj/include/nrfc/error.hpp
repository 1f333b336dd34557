#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nrfc {

/// Failure category. The CLI maps each category to its own exit code.
enum class ErrorCode {
  kIo = 2,            // missing / unreadable / unwritable file
  kFormat = 3,        // malformed file content or unsupported sample encoding
  kInvalidArgument = 4,
  kShapeMismatch = 5,
  kNumerical = 6,     // non-finite loss, gradient or input
  kInsufficientData = 7,
  kConfig = 8,
  kUnsupported = 9,   // well-formed file with an unsupported channel layout
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, std::string_view what) {
  if (!cond) throw Error(code, std::string(what));
}

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return "io";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kNumerical: return "numerical";
    case ErrorCode::kInsufficientData: return "insufficient-data";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kUnsupported: return "unsupported";
  }
  return "unknown";
}

}  // namespace nrfc
