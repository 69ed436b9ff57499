#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace unicorn {

enum class ErrorCode {
  kShape,
  kNonFinite,
  kInvalidArgument,
  kBadMagic,
  kTruncated,
  kExtentOverflow,
  kUnsupportedVersion,
  kConfig,
  kConfigMismatch,
  kData,
  kDuplicateId,
  kUnknownLabel,
  kIo,
};

// Stable machine-readable name of an error class, e.g. "bad_magic".
std::string_view error_class_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace unicorn
