#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unicorn/model.hpp"

namespace unicorn {

// Attention rollout over consecutive blocks of one token set: each block's
// head-mean attention A becomes 0.5 (A + I) with rows renormalized, and the
// blocks are chained as A_L ... A_1. Raises on mismatched token counts.
Tensor rollout(std::span<const AttentionRecord> records);

enum class PatchAttentionMode {
  // Expert MT->patch rollout times the aggregator's CLS->MT rollout entry.
  kTwoStage,
  // Expert MT->patch rollout alone.
  kExpertOnly,
};

// Per modality id, the attention weight of every patch of that modality's bag
// in the forward pass; nullopt for modalities absent from the pass. Requires a
// trace with expert attention (i.e. a UnicornModel trace).
std::vector<std::optional<std::vector<double>>> patch_attention(const ForwardTrace& trace, std::size_t n_modalities,
                                                                PatchAttentionMode mode = PatchAttentionMode::kTwoStage);

// Class probabilities of a bag consisting of one patch, forwarded alone.
std::vector<double> patch_class_scores(const Model& model, const FeatureBag& single_patch);

// attention[i] * class_scores[i][predicted_class]
std::vector<double> class_attention(std::span<const double> attention,
                                    const std::vector<std::vector<double>>& class_scores, std::size_t predicted_class);

struct PatchScore {
  std::size_t modality = 0;
  PatchCoord coord;
  double rollout_attention = 0.0;
  std::vector<double> class_probs;
  double class_attention = 0.0;
};

struct PatchScoreMap {
  std::vector<PatchScore> entries;  // sorted by (modality, y, x)
  std::size_t predicted_class = 0;
};

// Several bags over the same slides, one SampleRecord per overlapping
// patching; every bag must carry a coordinate per patch.
struct OverlapBagSet {
  std::vector<SampleRecord> variants;

  void validate() const;
};

// Scores for one forward pass of `sample` with all its modalities. Patches
// without coordinates get (index, 0).
PatchScoreMap score_sample(const Model& model, const SampleRecord& sample,
                           PatchAttentionMode mode = PatchAttentionMode::kTwoStage);

// Averages every channel per (modality, coordinate) over all bags covering it,
// then min-max normalizes rollout_attention and class_attention to [0, 1] per
// modality (a constant channel becomes all zeros). class_probs are averaged
// only, so they stay stochastic.
PatchScoreMap aggregate_overlaps(const OverlapBagSet& bag_set, const std::vector<PatchScoreMap>& per_bag);

PatchScoreMap explain_bag_set(const Model& model, const OverlapBagSet& bag_set,
                              PatchAttentionMode mode = PatchAttentionMode::kTwoStage);

// "modality x y rollout_attention class_attention p_AIT ... p_CFA" lines.
std::string format_score_map(const PatchScoreMap& map);

enum class ScoreChannel { kRolloutAttention, kClassAttention, kClassProbability };

// Binary portable graymap (P5) of one channel of one modality; pixel (x, y)
// is the patch at that grid coordinate, uncovered pixels are black.
std::string render_pgm(const PatchScoreMap& map, std::size_t modality, ScoreChannel channel, std::size_t class_index = 0);

// Bag-set directory layout: `bagset.tsv` with lines
//   variant_index <TAB> bag_path <TAB> coords_path
// where coords files hold one "x y" pair per patch row.
OverlapBagSet load_bag_set(const std::string& dir);

}  // namespace unicorn
