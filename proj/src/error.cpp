#include "unicorn/error.hpp"

namespace unicorn {

std::string_view error_class_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kBadMagic: return "bad_magic";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kExtentOverflow: return "extent_overflow";
    case ErrorCode::kUnsupportedVersion: return "unsupported_version";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kConfigMismatch: return "config_mismatch";
    case ErrorCode::kData: return "data";
    case ErrorCode::kDuplicateId: return "duplicate_id";
    case ErrorCode::kUnknownLabel: return "unknown_label";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace unicorn
