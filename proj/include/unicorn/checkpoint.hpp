#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "unicorn/model.hpp"

namespace unicorn {

// UNICKPT1 layout, all integers u32 little-endian:
//   "UNICKPT1" | version | metadata length | metadata (UTF-8 key=value lines)
//   | tensor count | per tensor: name length, name, rank, extents..., f64 payload
inline constexpr std::string_view kCheckpointMagic = "UNICKPT1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Model& model);
// Rebuilds the model described by the metadata block and loads its tensors.
// Raises kBadMagic, kUnsupportedVersion, kTruncated, kExtentOverflow, or
// kConfigMismatch when the tensor list does not match the declared model.
std::unique_ptr<Model> decode_checkpoint(std::string_view bytes, std::string_view context = "checkpoint");

void save_checkpoint(const std::string& path, const Model& model);
std::unique_ptr<Model> load_checkpoint(const std::string& path);

}  // namespace unicorn
