#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "unicorn/kv.hpp"
#include "unicorn/params.hpp"
#include "unicorn/rng.hpp"
#include "unicorn/sample.hpp"
#include "unicorn/transformer_block.hpp"

namespace unicorn {

enum class ModelKind { kUnicorn, kAttentionMil, kSingleStreamTransformer };

std::string_view model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(std::string_view name);

struct ModelConfig {
  ModelKind kind = ModelKind::kUnicorn;
  std::size_t n_modalities = 4;
  std::size_t n_classes = kNumClasses;
  std::size_t feat_dim = 768;
  std::size_t model_dim = 256;
  std::size_t n_heads = 4;
  std::size_t blocks_per_expert = 2;
  std::size_t blocks_aggregator = 2;
  double dropout_p = 0.1;
  double init_std = 0.02;

  // Raises ErrorCode::kConfig when an invariant is violated.
  void validate() const;

  static const std::vector<std::string>& keys();
  // Reads the keys above from `kv`, keeping defaults for absent keys.
  static ModelConfig from_kv(const KeyValues& kv);
  void to_kv(KeyValues& kv) const;

  bool operator==(const ModelConfig&) const = default;
};

// Everything one forward pass exposes beyond the logits.
struct ForwardTrace {
  ModalityMask mask;
  // Indexed by modality id; empty for modalities absent from the pass.
  std::vector<std::vector<AttentionRecord>> expert_attention;
  // Aggregator token j >= 1 belongs to aggregator_modalities[j - 1]; token 0 is CLS.
  std::vector<AttentionRecord> aggregator_attention;
  std::vector<std::size_t> aggregator_modalities;
  // Attention-MIL pooling weights over the pooled bag (baseline only).
  std::vector<double> pooling_weights;
  std::vector<double> penultimate;  // CLS (or pooled) representation, width d
  Tensor logits;                    // [n_classes], carries autodiff history when training
  std::vector<double> probabilities;
};

// A bag classifier over per-modality feature bags.
class Model {
 public:
  explicit Model(ModelConfig config) : config_(std::move(config)) {}
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamRegistry& params() { return params_; }
  const ParamRegistry& params() const { return params_; }

  // `rng` drives dropout and may be null when !training. Raises on an empty
  // mask, a masked-in modality without a bag, an empty bag, or a bag whose
  // width differs from feat_dim.
  virtual ForwardTrace forward(const SampleRecord& sample, const ModalityMask& mask, Rng* rng,
                               bool training) const = 0;

 protected:
  void check_inputs(const SampleRecord& sample, const ModalityMask& mask) const;

  ModelConfig config_;
  ParamRegistry params_;
};

// Two-stage multi-modal transformer: one unshared expert per modality
// compresses its bag into a modality token, an aggregation transformer fuses
// the modality tokens into a CLS token, and a linear head classifies it.
class UnicornModel final : public Model {
 public:
  UnicornModel(ModelConfig config, Rng& init_rng);

  ForwardTrace forward(const SampleRecord& sample, const ModalityMask& mask, Rng* rng, bool training) const override;

 private:
  struct Expert {
    Tensor proj_w, proj_b, modality_token;
    std::vector<BlockParams> blocks;
  };
  std::vector<Expert> experts_;
  std::vector<BlockParams> aggregator_;
  Tensor cls_token_, head_w_, head_b_;
};

// Builds a freshly initialized model of config.kind. Initialization draws
// from a stream split off `seed`.
std::unique_ptr<Model> make_model(const ModelConfig& config, std::uint64_t seed);

struct Prediction {
  std::size_t label = 0;
  std::vector<double> probabilities;
};

// Inference-mode forward; argmax with ties resolved to the lower class index.
Prediction predict(const Model& model, const SampleRecord& sample, const ModalityMask& mask);
std::size_t argmax(const std::vector<double>& values);

// Head- and layer-averaged attention from CLS to each modality token of the
// aggregation stage, indexed by modality id. Absent modalities are nullopt.
std::vector<std::optional<double>> cls_to_mt_attention(const ForwardTrace& trace, std::size_t n_modalities);

}  // namespace unicorn
