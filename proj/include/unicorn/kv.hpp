#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace unicorn {

// Plain-text `key = value` configuration. Blank lines and lines starting with
// '#' are ignored. Keys are unique.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text, std::string_view origin = "<text>");
  static KeyValues load(const std::string& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  // Applies a `key=value` override string.
  void apply_override(std::string_view assignment);
  bool contains(const std::string& key) const { return values_.contains(key); }
  const std::map<std::string, std::string>& values() const { return values_; }

  // Typed access. Parse failures raise ErrorCode::kConfig naming the key.
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    return static_cast<std::size_t>(get_u64(key, fallback));
  }

  // Raises ErrorCode::kConfig for any key not in `known`.
  void reject_unknown(const std::vector<std::string>& known) const;

  std::string serialize() const;

 private:
  std::map<std::string, std::string> values_;
};

// Shortest decimal text that round-trips the double exactly.
std::string format_double(double value);

}  // namespace unicorn
