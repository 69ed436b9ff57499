#include "unicorn/byte_io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <atomic>
#include <sstream>

#include <unistd.h>

#include "unicorn/error.hpp"

namespace unicorn {

namespace {
template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    if constexpr (sizeof(U) == 4) return __builtin_bswap32(v);
    else return __builtin_bswap64(v);
  }
  return v;
}

template <typename U>
void put(std::string& out, U v) {
  v = to_little(v);
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}
}  // namespace

void ByteWriter::u32(std::uint32_t v) { put(out_, v); }
void ByteWriter::f32(float v) { put(out_, std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { put(out_, std::bit_cast<std::uint64_t>(v)); }

std::string_view ByteReader::bytes(std::size_t n) {
  if (n > remaining()) {
    fail(ErrorCode::kTruncated, context_ + ": truncated at byte " + std::to_string(pos_) + " (wanted " +
                                    std::to_string(n) + ", have " + std::to_string(remaining()) + ")");
  }
  const auto view = data_.substr(pos_, n);
  pos_ += n;
  return view;
}

std::uint32_t ByteReader::u32() {
  std::uint32_t v;
  std::memcpy(&v, bytes(sizeof v).data(), sizeof v);
  return to_little(v);
}

float ByteReader::f32() {
  std::uint32_t v;
  std::memcpy(&v, bytes(sizeof v).data(), sizeof v);
  return std::bit_cast<float>(to_little(v));
}

double ByteReader::f64() {
  std::uint64_t v;
  std::memcpy(&v, bytes(sizeof v).data(), sizeof v);
  return std::bit_cast<double>(to_little(v));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_atomic(const std::string& path, std::string_view contents) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  static std::atomic<unsigned> counter{0};
  const std::string tmp = path + ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) fail(ErrorCode::kIo, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    fail(ErrorCode::kIo, "cannot rename " + tmp + " to " + path + ": " + ec.message());
  }
}

}  // namespace unicorn
