#include "spikecl/error.hpp"

namespace spikecl {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::dimension:
      return "dimension";
    case ErrorCode::format:
      return "format";
    case ErrorCode::length:
      return "length";
    case ErrorCode::validation:
      return "validation";
    case ErrorCode::empty_subset:
      return "empty_subset";
    case ErrorCode::config:
      return "config";
    case ErrorCode::conversion:
      return "conversion";
    case ErrorCode::numeric:
      return "numeric";
    case ErrorCode::io:
      return "io";
  }
  return "unknown";
}

}  // namespace spikecl
