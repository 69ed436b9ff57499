#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "unicorn/data_io.hpp"
#include "unicorn/metrics.hpp"
#include "unicorn/model.hpp"
#include "unicorn/training.hpp"

namespace unicorn {

struct FoldResult {
  std::size_t fold = 0;
  TrainResult training;
  Metrics test;
};

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1)
};

MeanSd mean_sd(const std::vector<double>& values);

struct CvResult {
  std::vector<FoldResult> folds;
  MeanSd accuracy;
  MeanSd macro_f1;

  // Machine-readable summary (JSON).
  std::string summary_json() const;
  // One line per fold plus the mean +- sd line.
  std::string to_text() const;
};

// Seed used for fold `fold` when the run seed is `seed`.
std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold);

// Trains every fold on its train part (selecting on val) and tests the
// selected weights with full masks. Folds run on up to `max_threads` threads;
// results do not depend on the thread count. A failing fold aborts the run
// with an error naming the fold.
CvResult run_cv(const std::vector<SampleRecord>& records, const std::vector<SplitPlan>& splits,
                const ModelConfig& model_config, const TrainConfig& train_config, std::size_t max_threads = 0);

FoldResult run_fold(const std::vector<SampleRecord>& records, const SplitPlan& split, const ModelConfig& model_config,
                    const TrainConfig& train_config);

struct BaselineSpec {
  ModelKind kind = ModelKind::kAttentionMil;
  ModelConfig model;  // matched to the UNICORN run except for kind
};

// Same data pipeline, optimizer, domain dropout and seeds as UNICORN; only
// the model differs.
FoldResult train_baseline(const BaselineSpec& spec, const std::vector<SampleRecord>& records, const SplitPlan& split,
                          const TrainConfig& train_config);

struct ModalityCondition {
  std::size_t modality = 0;
  std::optional<Metrics> metrics;  // nullopt: no test sample qualifies ("no data")
  // Full-input metrics on the same samples.
  std::optional<Metrics> reference;
  double delta_f1() const { return metrics && reference ? metrics->macro_f1 - reference->macro_f1 : 0.0; }
};

struct AblationReport {
  std::size_t n_modalities = 0;
  Metrics full;
  std::vector<ModalityCondition> single;     // mask {m}, samples that have m
  std::vector<ModalityCondition> leave_out;  // mask present \ {m}, samples with m and another bag
  // attention_mean[c][m]: mean CLS->MT attention over test samples of true
  // class c that contain m; nullopt when there are none.
  std::vector<std::vector<std::optional<double>>> attention_mean;
  // attention_argmax_share[c][m]: fraction of class-c samples whose largest
  // CLS->MT attention goes to m.
  std::vector<std::vector<double>> attention_argmax_share;
  std::vector<std::size_t> class_counts;

  std::string to_text() const;
  std::string summary_json() const;
};

// Inference-time ablation of one fixed model; no retraining between conditions.
AblationReport ablate(const Model& model, const std::vector<SampleRecord>& test);

struct FeatureRow {
  std::string sample_id;
  std::size_t label = 0;
  std::string variant;  // "full" or a stain name
  ModalityMask mask;
  std::vector<double> features;
};

// Penultimate representation per sample with the full mask, plus one row per
// requested single modality the sample contains.
std::vector<FeatureRow> export_features(const Model& model, const std::vector<SampleRecord>& records,
                                        const std::vector<std::size_t>& single_modalities);
// "sample_id label variant mask f_0 ... f_{d-1}" tab-separated lines.
std::string format_features(const std::vector<FeatureRow>& rows);

}  // namespace unicorn
