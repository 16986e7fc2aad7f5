#include "nphmm/error.hpp"

namespace nphmm {

const char* to_string(ErrorCode code)
{
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::dimension_mismatch: return "dimension-mismatch";
    case ErrorCode::degenerate_chain: return "degenerate-chain";
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::parse_error: return "parse-error";
    case ErrorCode::version_mismatch: return "version-mismatch";
    case ErrorCode::corrupt_file: return "corrupt-file";
    case ErrorCode::init_failure: return "init-failure";
    case ErrorCode::fit_failure: return "fit-failure";
    case ErrorCode::already_exists: return "already-exists";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

} // namespace nphmm
