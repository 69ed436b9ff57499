#include <cmath>
#include <filesystem>
#include <limits>

#include "unicorn/byte_io.hpp"
#include "unicorn/data_io.hpp"
#include "unicorn/error.hpp"

namespace unicorn {

std::string encode_bag(const FeatureBag& bag) {
  if (!bag.matrix.defined() || bag.matrix.rank() != 2 || bag.patches() == 0) {
    fail(ErrorCode::kData, "cannot encode an empty bag");
  }
  ByteWriter w;
  w.bytes(kBagMagic);
  w.u32(kBagVersion);
  w.u32(static_cast<std::uint32_t>(bag.modality));
  w.u32(static_cast<std::uint32_t>(bag.patches()));
  w.u32(static_cast<std::uint32_t>(bag.width()));
  for (const double v : bag.matrix.data()) w.f32(static_cast<float>(v));
  return w.take();
}

FeatureBag decode_bag(std::string_view bytes, std::string_view context) {
  const std::string ctx(context);
  ByteReader r(bytes, ctx);
  if (r.remaining() < kBagMagic.size()) fail(ErrorCode::kTruncated, ctx + ": shorter than the magic header");
  if (r.bytes(kBagMagic.size()) != kBagMagic) fail(ErrorCode::kBadMagic, ctx + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kBagVersion) {
    fail(ErrorCode::kUnsupportedVersion, ctx + ": unsupported bag version " + std::to_string(version));
  }
  const std::uint32_t modality = r.u32();
  if (modality >= kMaxModalities) fail(ErrorCode::kData, ctx + ": modality id " + std::to_string(modality));
  const std::uint64_t rows = r.u32();
  const std::uint64_t cols = r.u32();
  if (rows == 0 || cols == 0) fail(ErrorCode::kData, ctx + ": empty bag");
  const std::uint64_t count = rows * cols;
  if (count > std::numeric_limits<std::uint32_t>::max() / sizeof(float)) {
    fail(ErrorCode::kExtentOverflow, ctx + ": extents " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (count * sizeof(float) > r.remaining()) fail(ErrorCode::kTruncated, ctx + ": truncated payload");
  std::vector<double> values(count);
  for (double& v : values) {
    v = r.f32();
    if (!std::isfinite(v)) fail(ErrorCode::kData, ctx + ": non-finite feature value");
  }
  if (r.remaining() != 0) fail(ErrorCode::kData, ctx + ": " + std::to_string(r.remaining()) + " trailing bytes");
  FeatureBag bag;
  bag.modality = modality;
  bag.matrix = Tensor::from({rows, cols}, std::move(values));
  return bag;
}

void write_bag(const std::string& path, const FeatureBag& bag) { write_file_atomic(path, encode_bag(bag)); }

FeatureBag read_bag(const std::string& path) {
  FeatureBag bag = decode_bag(read_file(path), path);
  bag.slide_id = std::filesystem::path(path).stem().string();
  return bag;
}

}  // namespace unicorn
