#pragma once

#include <stdexcept>
#include <string>

namespace xmodal {

enum class ErrorCode {
  kArgument,
  kDecode,
  kParse,
  kShape,
  kConfig,
  kCorruptCheckpoint,
  kMining,
  kDiverged,
  kUndefinedMetric,
  kIo,
};

// Machine-parsable prefix used by the CLI, e.g. "E_ARG".
const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace xmodal
