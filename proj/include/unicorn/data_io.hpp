#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "unicorn/kv.hpp"
#include "unicorn/sample.hpp"

namespace unicorn {

// ---- UNIBAG1 feature-bag files -------------------------------------------
//   "UNIBAG1\0" | version u32 (=1) | modality u32 | rows u32 | cols u32
//   | rows*cols f32, row-major, little-endian
inline constexpr std::string_view kBagMagic{"UNIBAG1\0", 8};
inline constexpr std::uint32_t kBagVersion = 1;

std::string encode_bag(const FeatureBag& bag);
FeatureBag decode_bag(std::string_view bytes, std::string_view context = "bag");
void write_bag(const std::string& path, const FeatureBag& bag);
// slide_id is set to the file stem.
FeatureBag read_bag(const std::string& path);

// ---- Manifest ------------------------------------------------------------
// One record per line, tab-separated:
//   sample_id  individual_id  segment_id  label  bag_0 ... bag_{M-1}
// Labels are class names (AIT, PIT, EFA, LFA, CFA). Bag paths are relative to
// the manifest's directory; an empty field means the modality is absent.
// Lines starting with '#' are comments.
struct ManifestEntry {
  std::string sample_id;
  std::string individual_id;
  std::string segment_id;
  std::size_t label = 0;
  std::vector<std::optional<std::string>> bag_paths;  // resolved paths

  std::size_t present_count() const;
};

std::vector<ManifestEntry> parse_manifest(std::string_view text, const std::string& base_dir,
                                          std::string_view context = "manifest");
// Parses and checks that every referenced bag file exists.
std::vector<ManifestEntry> load_manifest(const std::string& path);
std::string format_manifest(const std::vector<ManifestEntry>& entries, const std::string& base_dir);

// Loads every bag; all bags must share one width.
std::vector<SampleRecord> load_samples(const std::vector<ManifestEntry>& entries);
std::vector<SampleRecord> load_dataset(const std::string& manifest_path);

// ---- Grouped splits ------------------------------------------------------
struct SplitPlan {
  std::size_t fold = 0;
  std::vector<std::string> train, val, test;
};

inline constexpr std::size_t kNumFolds = 5;

// Individuals are sorted, shuffled with `seed`, and cut into five near-equal
// groups. Fold k tests on group k, validates on group (k+1) mod 5 and trains
// on the rest. Needs at least five distinct individuals.
std::vector<SplitPlan> make_splits(const std::vector<SampleRecord>& records, std::uint64_t seed);
std::vector<SplitPlan> make_splits(const std::vector<ManifestEntry>& entries, std::uint64_t seed);

// "fold<TAB>part<TAB>sample_id" lines, part in {train, val, test}.
std::string format_splits(const std::vector<SplitPlan>& plans);
std::vector<SplitPlan> parse_splits(std::string_view text, std::string_view context = "splits");

// Selects records by id, preserving the order of `ids`.
std::vector<SampleRecord> select_samples(const std::vector<SampleRecord>& records, const std::vector<std::string>& ids);

// ---- Synthetic multi-stain generator -------------------------------------
enum class SyntheticTask {
  // Class c plants a unit direction u_{c,m} into a random fraction of the
  // patches of every modality m listed for c.
  kPlanted,
  // Two modalities A, B each independently carry their own direction with
  // probability 1/2; label = presence(A) XOR presence(B) in {0, 1}.
  kXor,
};

struct SyntheticSpec {
  SyntheticTask task = SyntheticTask::kPlanted;
  std::size_t n_individuals = 100;
  std::size_t segments_per_individual = 7;
  std::size_t n_modalities = 4;
  std::size_t feat_dim = 64;
  std::size_t patches_min = 16;
  std::size_t patches_max = 32;
  double signal_strength = 2.0;
  double noise_sigma = 1.0;
  double signal_fraction_min = 0.25;
  double signal_fraction_max = 0.75;
  double missing_bag_p = 0.0;
  std::vector<double> class_weights = std::vector<double>(kNumClasses, 1.0);
  // class_signal[c] = modalities carrying class c's signal (kPlanted).
  std::vector<std::vector<std::size_t>> class_signal;
  std::size_t xor_a = 0;
  std::size_t xor_b = 2;
  std::uint64_t seed = 1;

  // Raises ErrorCode::kConfig for degenerate specs.
  void validate() const;

  // Keys: task, n_individuals, segments_per_individual, n_modalities, feat_dim,
  // patches_min, patches_max, signal_strength, noise_sigma,
  // signal_fraction_min, signal_fraction_max, missing_bag_p,
  // class_weights (comma list), signal.<CLASS> (comma list of stain names),
  // xor_a, xor_b, seed.
  static SyntheticSpec from_kv(const KeyValues& kv);
  std::string to_text() const;

  // Reference task: classes AIT/PIT carried by HE and EvG, EFA by HE, the
  // advanced classes LFA/CFA only by vK; Movat is uninformative.
  static SyntheticSpec reference();
  static SyntheticSpec xor_reference();
};

std::vector<SampleRecord> generate_synthetic(const SyntheticSpec& spec);
// Writes bags/ and manifest.tsv under `out_dir`; returns the manifest path.
std::string write_dataset(const std::vector<SampleRecord>& records, std::size_t n_modalities,
                          const std::string& out_dir);

}  // namespace unicorn
