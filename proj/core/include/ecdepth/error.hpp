#pragma once

#include <stdexcept>
#include <string>

namespace ecdepth {

// Error categories map onto CLI exit behaviour: `usage` exits 2, everything
// else exits 1. The category string is the machine-parsable part of the
// one-line error report.
enum class ErrorCategory {
  usage,    // bad flags, bad config keys, schema violations
  io,       // missing files, unreadable paths
  format,   // malformed file contents (PNG, checkpoint, intrinsics)
  shape,    // tensor shape mismatches
  numeric,  // NaN/Inf reached an op output or a gradient
  data,     // dataset-level problems (missing neighbor frame, no GT)
  runtime,  // everything else
};

const char* to_string(ErrorCategory c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory c, const std::string& msg) {
  throw Error(c, msg);
}

}  // namespace ecdepth
