#ifndef SMGSBR_ERRORS_HPP
#define SMGSBR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace smgsbr {

// Error taxonomy shared by the library and the CLI. Validation errors map to
// CLI exit code 2, runtime failures to exit code 3.
enum class ErrorCode {
  // validation
  parameter,
  config,
  unsupported_model,
  window_length,
  invertibility,
  // runtime
  numeric_overflow,
  escape,
  singularity,
  singular_model,
  degenerate_cloud,
  chain_failure,
  io_failure,
};

const char* error_code_name(ErrorCode code) noexcept;
bool is_validation_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  const char* code_name() const noexcept { return error_code_name(code_); }
  bool is_validation() const noexcept { return is_validation_error(code_); }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::parameter: return "parameter";
    case ErrorCode::config: return "config";
    case ErrorCode::unsupported_model: return "unsupported-model";
    case ErrorCode::window_length: return "window-length";
    case ErrorCode::invertibility: return "invertibility";
    case ErrorCode::numeric_overflow: return "numeric-overflow";
    case ErrorCode::escape: return "escape";
    case ErrorCode::singularity: return "singularity";
    case ErrorCode::singular_model: return "singular-model";
    case ErrorCode::degenerate_cloud: return "degenerate-cloud";
    case ErrorCode::chain_failure: return "chain-failure";
    case ErrorCode::io_failure: return "io-failure";
  }
  return "unknown";
}

inline bool is_validation_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::parameter:
    case ErrorCode::config:
    case ErrorCode::unsupported_model:
    case ErrorCode::window_length:
    case ErrorCode::invertibility:
      return true;
    default:
      return false;
  }
}

}  // namespace smgsbr

#endif  // SMGSBR_ERRORS_HPP
