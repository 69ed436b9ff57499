#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace unicorn {

// Little-endian encoder for the binary formats.
class ByteWriter {
 public:
  void bytes(std::string_view raw) { out_.append(raw); }
  void u32(std::uint32_t v);
  void f32(float v);
  void f64(double v);
  const std::string& buffer() const { return out_; }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

// Bounds-checked little-endian decoder. Running past the end raises
// ErrorCode::kTruncated naming `context`.
class ByteReader {
 public:
  ByteReader(std::string_view data, std::string context) : data_(data), context_(std::move(context)) {}

  std::string_view bytes(std::size_t n);
  std::uint32_t u32();
  float f32();
  double f64();
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string context_;
};

std::string read_file(const std::string& path);
// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::string& path, std::string_view contents);

}  // namespace unicorn
