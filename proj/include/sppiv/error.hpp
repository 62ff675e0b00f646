#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sppiv {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  GridMismatch,
  RankOutOfRange,
  DegenerateData,
  BadMagic,
  BadVersion,
  CorruptContainer,
  NonFinite,
  Io,
  InvalidVector,
  Config,
  InsufficientData,
  SourceExhausted,
};

std::string_view to_string(ErrorCode code);

/// Every recoverable failure in the library is reported with one of these.
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

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace sppiv
