#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "unicorn/tensor.hpp"

namespace unicorn {

inline constexpr std::size_t kMaxModalities = 32;
inline constexpr std::size_t kNumClasses = 5;

// Canonical staining order; the modality id is the index.
inline constexpr std::array<std::string_view, 4> kStainNames = {"HE", "EvG", "vK", "Movat"};
// Severity order of the coronary classes; the label is the index.
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {"AIT", "PIT", "EFA", "LFA", "CFA"};

std::string modality_name(std::size_t modality);
std::optional<std::size_t> modality_from_name(std::string_view name);
std::optional<std::size_t> label_from_name(std::string_view name);

struct PatchCoord {
  std::int32_t x = 0;
  std::int32_t y = 0;
  auto operator<=>(const PatchCoord&) const = default;
};

// One staining's patch embeddings for one slide.
struct FeatureBag {
  std::size_t modality = 0;
  std::string slide_id;
  Tensor matrix;  // [N x D_in], no gradient
  // Optional per-patch slide coordinates (empty when unknown).
  std::vector<PatchCoord> coords;

  std::size_t patches() const { return matrix.dim(0); }
  std::size_t width() const { return matrix.dim(1); }
};

// One coronary segment.
struct SampleRecord {
  std::string sample_id;
  std::string individual_id;
  std::string segment_id;
  std::size_t label = 0;
  std::map<std::size_t, FeatureBag> bags;

  bool has(std::size_t modality) const { return bags.contains(modality); }
};

// Subset of modality ids, iterated in ascending (canonical) order.
class ModalityMask {
 public:
  constexpr ModalityMask() = default;
  static ModalityMask all(std::size_t n_modalities);
  static ModalityMask single(std::size_t modality);
  static ModalityMask of_sample(const SampleRecord& sample);

  bool contains(std::size_t modality) const { return modality < kMaxModalities && (bits_ >> modality) & 1U; }
  void insert(std::size_t modality);
  void erase(std::size_t modality);
  bool empty() const { return bits_ == 0; }
  std::size_t count() const;
  std::vector<std::size_t> members() const;
  bool subset_of(const ModalityMask& other) const { return (bits_ & ~other.bits_) == 0; }
  ModalityMask without(std::size_t modality) const;
  std::uint32_t bits() const { return bits_; }
  // "HE+vK" style description.
  std::string describe() const;

  bool operator==(const ModalityMask&) const = default;

 private:
  std::uint32_t bits_ = 0;
};

// Copy of `sample` that holds only the bags selected by `mask`.
SampleRecord restrict_to(const SampleRecord& sample, const ModalityMask& mask);

}  // namespace unicorn
