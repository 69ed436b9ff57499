#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "unicorn/data_io.hpp"
#include "unicorn/kv.hpp"
#include "unicorn/metrics.hpp"
#include "unicorn/model.hpp"

namespace unicorn {

struct TrainConfig {
  std::size_t epochs = 30;
  double lr = 2.0e-5;
  double weight_decay = 2.0e-5;
  std::size_t accum_steps = 16;
  double domain_dropout_p = 0.7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
  static const std::vector<std::string>& keys();
  static TrainConfig from_kv(const KeyValues& kv);
  void to_kv(KeyValues& kv) const;
};

struct DomainMaskDraw {
  ModalityMask mask;
  std::size_t kept = 0;  // the modality that was guaranteed to survive
};

// Keeps one uniformly chosen present modality and drops every other present
// modality independently with probability p. Never returns an empty mask.
DomainMaskDraw draw_domain_mask(const ModalityMask& present, Rng& rng, double p);
ModalityMask sample_domain_mask(const ModalityMask& present, Rng& rng, double p);

struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

// One AdamW update from the gradients currently stored in `params`:
//   p <- p - lr*wd*p            (decayed tensors only)
//   m <- b1 m + (1-b1) g ; v <- b2 v + (1-b2) g^2
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
void adamw_step(ParamRegistry& params, OptimizerState& state, const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_f1 = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  std::unique_ptr<Model> model;  // holds the selected (best validation macro-F1) weights
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;    // 0 when no epoch ran
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains `model` in place and leaves the best-validation weights loaded.
// Raises ErrorCode::kNonFinite naming the sample on a non-finite loss.
TrainResult train_model(std::unique_ptr<Model> model, const std::vector<SampleRecord>& train_set,
                        const std::vector<SampleRecord>& val_set, const TrainConfig& config,
                        const EpochCallback& on_epoch = {});

// Builds the model from `model_config` with `train_config.seed` and trains it
// on the split's train part, selecting on its val part.
TrainResult train(const std::vector<SampleRecord>& records, const SplitPlan& split, const ModelConfig& model_config,
                  const TrainConfig& train_config, const EpochCallback& on_epoch = {});

// Inference with every available modality.
Metrics evaluate(const Model& model, const std::vector<SampleRecord>& records);
ModalityMask full_mask(const SampleRecord& sample, std::size_t n_modalities);

std::string format_history(const std::vector<EpochRecord>& history);

}  // namespace unicorn
