#pragma once

#include <stdexcept>
#include <string>

namespace spikecl {

enum class ErrorCode {
  dimension = 1,
  format,
  length,
  validation,
  empty_subset,
  config,
  conversion,
  numeric,
  io,
};

const char* to_string(ErrorCode code);

// All library failures surface as this exception; the C API maps code() onto
// spikecl_status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace spikecl
