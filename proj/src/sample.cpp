#include "unicorn/sample.hpp"

#include <bit>

#include "unicorn/error.hpp"

namespace unicorn {

std::string modality_name(std::size_t modality) {
  if (modality < kStainNames.size()) return std::string(kStainNames[modality]);
  return "M" + std::to_string(modality);
}

std::optional<std::size_t> modality_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kStainNames.size(); ++i) {
    if (kStainNames[i] == name) return i;
  }
  if (name.size() > 1 && name[0] == 'M') {
    std::size_t v = 0;
    for (const char c : name.substr(1)) {
      if (c < '0' || c > '9') return std::nullopt;
      v = v * 10 + static_cast<std::size_t>(c - '0');
      if (v >= kMaxModalities) return std::nullopt;
    }
    return v;
  }
  return std::nullopt;
}

std::optional<std::size_t> label_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i) {
    if (kClassNames[i] == name) return i;
  }
  return std::nullopt;
}

ModalityMask ModalityMask::all(std::size_t n_modalities) {
  ModalityMask m;
  for (std::size_t i = 0; i < n_modalities; ++i) m.insert(i);
  return m;
}

ModalityMask ModalityMask::single(std::size_t modality) {
  ModalityMask m;
  m.insert(modality);
  return m;
}

ModalityMask ModalityMask::of_sample(const SampleRecord& sample) {
  ModalityMask m;
  for (const auto& [modality, bag] : sample.bags) m.insert(modality);
  return m;
}

void ModalityMask::insert(std::size_t modality) {
  if (modality >= kMaxModalities) fail(ErrorCode::kInvalidArgument, "modality id out of range");
  bits_ |= 1U << modality;
}

void ModalityMask::erase(std::size_t modality) {
  if (modality < kMaxModalities) bits_ &= ~(1U << modality);
}

std::size_t ModalityMask::count() const { return static_cast<std::size_t>(std::popcount(bits_)); }

std::vector<std::size_t> ModalityMask::members() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < kMaxModalities; ++i) {
    if (contains(i)) out.push_back(i);
  }
  return out;
}

ModalityMask ModalityMask::without(std::size_t modality) const {
  ModalityMask m = *this;
  m.erase(modality);
  return m;
}

std::string ModalityMask::describe() const {
  std::string s;
  for (const auto m : members()) {
    if (!s.empty()) s += "+";
    s += modality_name(m);
  }
  return s.empty() ? "none" : s;
}

SampleRecord restrict_to(const SampleRecord& sample, const ModalityMask& mask) {
  SampleRecord out = sample;
  std::erase_if(out.bags, [&](const auto& entry) { return !mask.contains(entry.first); });
  return out;
}

}  // namespace unicorn
