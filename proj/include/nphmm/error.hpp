#pragma once

#include <stdexcept>
#include <string>

namespace nphmm {

enum class ErrorCode
{
  invalid_argument,
  dimension_mismatch,
  degenerate_chain,
  io_error,
  parse_error,
  version_mismatch,
  corrupt_file,
  init_failure,
  fit_failure,
  already_exists,
  internal
};

const char* to_string(ErrorCode code);

//! Exception carrying a machine-readable error category.
class Error : public std::runtime_error
{
public:
  Error(ErrorCode code, const std::string& what)
    : std::runtime_error(what)
    , code_(code)
  {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what)
{
  throw Error(code, what);
}

inline void require(bool condition, const std::string& what)
{
  if (!condition)
    throw Error(ErrorCode::invalid_argument, what);
}

inline void require(bool condition, const char* what)
{
  if (!condition)
    throw Error(ErrorCode::invalid_argument, what);
}

} // namespace nphmm
