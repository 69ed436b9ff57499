#include "unicorn/checkpoint.hpp"

#include <limits>

#include "unicorn/byte_io.hpp"
#include "unicorn/error.hpp"

namespace unicorn {

namespace {
constexpr std::uint32_t kMaxRank = 3;
constexpr std::uint32_t kMaxNameLength = 4096;
}  // namespace

std::string encode_checkpoint(const Model& model) {
  KeyValues meta;
  model.config().to_kv(meta);
  const std::string meta_text = meta.serialize();

  ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(meta_text.size()));
  w.bytes(meta_text);
  const auto& entries = model.params().entries();
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& p : entries) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (const auto e : p.value.shape()) w.u32(static_cast<std::uint32_t>(e));
    for (const double v : p.value.data()) w.f64(v);
  }
  return w.take();
}

std::unique_ptr<Model> decode_checkpoint(std::string_view bytes, std::string_view context) {
  const std::string ctx(context);
  ByteReader r(bytes, ctx);
  if (r.remaining() < kCheckpointMagic.size()) {
    fail(ErrorCode::kTruncated, ctx + ": shorter than the magic header");
  }
  if (r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) fail(ErrorCode::kBadMagic, ctx + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kUnsupportedVersion, ctx + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t meta_len = r.u32();
  const auto meta_text = r.bytes(meta_len);
  const KeyValues meta = KeyValues::parse(meta_text, ctx + " metadata");
  meta.reject_unknown(ModelConfig::keys());
  const ModelConfig config = ModelConfig::from_kv(meta);
  auto model = make_model(config, 0);
  auto& entries = model->params().entries();

  const std::uint32_t count = r.u32();
  if (count != entries.size()) {
    fail(ErrorCode::kConfigMismatch, ctx + ": holds " + std::to_string(count) + " tensors, model expects " +
                                         std::to_string(entries.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    if (name_len > kMaxNameLength) fail(ErrorCode::kExtentOverflow, ctx + ": tensor name length overflow");
    const std::string name(r.bytes(name_len));
    const std::uint32_t rank = r.u32();
    if (rank > kMaxRank) fail(ErrorCode::kExtentOverflow, ctx + ": rank " + std::to_string(rank) + " for " + name);
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint32_t e = r.u32();
      numel *= e;
      if (numel > std::numeric_limits<std::uint32_t>::max()) {
        fail(ErrorCode::kExtentOverflow, ctx + ": extents overflow for " + name);
      }
      shape.push_back(e);
    }
    NamedParam& param = entries[i];
    if (param.name != name || param.value.shape() != shape) {
      fail(ErrorCode::kConfigMismatch, ctx + ": tensor #" + std::to_string(i) + " is " + name + shape_string(shape) +
                                           ", model expects " + param.name + shape_string(param.value.shape()));
    }
    if (numel * sizeof(double) > r.remaining()) {
      fail(ErrorCode::kTruncated, ctx + ": payload of " + name + " is truncated");
    }
    auto dst = param.value.mutable_data();
    for (auto& v : dst) v = r.f64();
  }
  if (r.remaining() != 0) fail(ErrorCode::kData, ctx + ": " + std::to_string(r.remaining()) + " trailing bytes");
  return model;
}

void save_checkpoint(const std::string& path, const Model& model) { write_file_atomic(path, encode_checkpoint(model)); }

std::unique_ptr<Model> load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path), path); }

}  // namespace unicorn
