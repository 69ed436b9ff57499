#include "unicorn/model.hpp"

#include <algorithm>

#include "unicorn/baselines.hpp"
#include "unicorn/error.hpp"
#include "unicorn/ops.hpp"

namespace unicorn {

std::string_view model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kUnicorn: return "unicorn";
    case ModelKind::kAttentionMil: return "attention_mil";
    case ModelKind::kSingleStreamTransformer: return "single_stream_transformer";
  }
  return "unknown";
}

ModelKind model_kind_from_name(std::string_view name) {
  for (const auto kind : {ModelKind::kUnicorn, ModelKind::kAttentionMil, ModelKind::kSingleStreamTransformer}) {
    if (model_kind_name(kind) == name) return kind;
  }
  fail(ErrorCode::kConfig, "unknown model kind '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::kConfig, "model config: " + what);
  };
  check(n_modalities >= 1 && n_modalities <= kMaxModalities, "n_modalities must be in [1, 32]");
  check(n_classes >= 1, "n_classes must be >= 1");
  check(feat_dim >= 1, "feat_dim must be >= 1");
  check(model_dim >= 1, "model_dim must be >= 1");
  check(n_heads >= 1 && model_dim % n_heads == 0, "n_heads must divide model_dim");
  check(blocks_per_expert >= 1, "blocks_per_expert must be >= 1");
  check(blocks_aggregator >= 1, "blocks_aggregator must be >= 1");
  check(dropout_p >= 0.0 && dropout_p < 1.0, "dropout_p must lie in [0, 1)");
  check(init_std > 0.0, "init_std must be positive");
}

const std::vector<std::string>& ModelConfig::keys() {
  static const std::vector<std::string> k = {"model_kind",        "n_modalities",      "n_classes", "feat_dim",
                                             "model_dim",         "n_heads",           "blocks_per_expert",
                                             "blocks_aggregator", "dropout_p",         "init_std"};
  return k;
}

ModelConfig ModelConfig::from_kv(const KeyValues& kv) {
  ModelConfig c;
  c.kind = model_kind_from_name(kv.get_string("model_kind", std::string(model_kind_name(c.kind))));
  c.n_modalities = kv.get_size("n_modalities", c.n_modalities);
  c.n_classes = kv.get_size("n_classes", c.n_classes);
  c.feat_dim = kv.get_size("feat_dim", c.feat_dim);
  c.model_dim = kv.get_size("model_dim", c.model_dim);
  c.n_heads = kv.get_size("n_heads", c.n_heads);
  c.blocks_per_expert = kv.get_size("blocks_per_expert", c.blocks_per_expert);
  c.blocks_aggregator = kv.get_size("blocks_aggregator", c.blocks_aggregator);
  c.dropout_p = kv.get_double("dropout_p", c.dropout_p);
  c.init_std = kv.get_double("init_std", c.init_std);
  c.validate();
  return c;
}

void ModelConfig::to_kv(KeyValues& kv) const {
  kv.set("model_kind", std::string(model_kind_name(kind)));
  kv.set("n_modalities", std::to_string(n_modalities));
  kv.set("n_classes", std::to_string(n_classes));
  kv.set("feat_dim", std::to_string(feat_dim));
  kv.set("model_dim", std::to_string(model_dim));
  kv.set("n_heads", std::to_string(n_heads));
  kv.set("blocks_per_expert", std::to_string(blocks_per_expert));
  kv.set("blocks_aggregator", std::to_string(blocks_aggregator));
  kv.set("dropout_p", format_double(dropout_p));
  kv.set("init_std", format_double(init_std));
}

void Model::check_inputs(const SampleRecord& sample, const ModalityMask& mask) const {
  if (mask.empty()) fail(ErrorCode::kInvalidArgument, "forward on sample " + sample.sample_id + " with an empty mask");
  for (const auto m : mask.members()) {
    if (m >= config_.n_modalities) {
      fail(ErrorCode::kInvalidArgument, "mask names modality " + std::to_string(m) + " beyond n_modalities");
    }
    const auto it = sample.bags.find(m);
    if (it == sample.bags.end()) {
      fail(ErrorCode::kInvalidArgument, "sample " + sample.sample_id + " has no " + modality_name(m) + " bag");
    }
    const FeatureBag& bag = it->second;
    if (!bag.matrix.defined() || bag.matrix.rank() != 2 || bag.patches() == 0) {
      fail(ErrorCode::kData, "sample " + sample.sample_id + ": empty " + modality_name(m) + " bag");
    }
    if (bag.width() != config_.feat_dim) {
      fail(ErrorCode::kConfigMismatch, "sample " + sample.sample_id + ": " + modality_name(m) + " bag width " +
                                           std::to_string(bag.width()) + " != feat_dim " +
                                           std::to_string(config_.feat_dim));
    }
  }
}

UnicornModel::UnicornModel(ModelConfig config, Rng& init_rng) : Model(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  const std::size_t d = c.model_dim;
  for (std::size_t m = 0; m < c.n_modalities; ++m) {
    const std::string prefix = "expert." + std::to_string(m) + ".";
    Expert e;
    e.proj_w = params_.add(prefix + "proj.w", truncated_normal_param({c.feat_dim, d}, c.init_std, init_rng), true);
    e.proj_b = params_.add(prefix + "proj.b", constant_param({d}, 0.0), false);
    e.modality_token = params_.add(prefix + "mt", truncated_normal_param({1, d}, c.init_std, init_rng), true);
    for (std::size_t b = 0; b < c.blocks_per_expert; ++b) {
      e.blocks.push_back(BlockParams::create(params_, prefix + "block." + std::to_string(b) + ".", d, c.n_heads,
                                             c.init_std, init_rng));
    }
    experts_.push_back(std::move(e));
  }
  for (std::size_t b = 0; b < c.blocks_aggregator; ++b) {
    aggregator_.push_back(
        BlockParams::create(params_, "aggregator.block." + std::to_string(b) + ".", d, c.n_heads, c.init_std, init_rng));
  }
  cls_token_ = params_.add("cls", truncated_normal_param({1, d}, c.init_std, init_rng), true);
  head_w_ = params_.add("head.w", truncated_normal_param({d, c.n_classes}, c.init_std, init_rng), true);
  head_b_ = params_.add("head.b", constant_param({c.n_classes}, 0.0), false);
}

ForwardTrace UnicornModel::forward(const SampleRecord& sample, const ModalityMask& mask, Rng* rng,
                                   bool training) const {
  check_inputs(sample, mask);
  ForwardTrace trace;
  trace.mask = mask;
  trace.expert_attention.resize(config_.n_modalities);

  std::vector<Tensor> aggregator_tokens{cls_token_};
  for (const auto m : mask.members()) {
    const Expert& expert = experts_[m];
    const Tensor projected = ops::add_bias(ops::matmul(sample.bags.at(m).matrix, expert.proj_w), expert.proj_b);
    const Tensor parts[] = {expert.modality_token, projected};
    Tensor tokens = ops::concat_rows(parts);
    for (const auto& block : expert.blocks) {
      auto out = block_forward(tokens, block, config_.dropout_p, rng, training);
      tokens = std::move(out.tokens);
      trace.expert_attention[m].push_back(std::move(out.attention));
    }
    aggregator_tokens.push_back(ops::slice_rows(tokens, 0, 1));
    trace.aggregator_modalities.push_back(m);
  }

  Tensor fused = ops::concat_rows(aggregator_tokens);
  for (const auto& block : aggregator_) {
    auto out = block_forward(fused, block, config_.dropout_p, rng, training);
    fused = std::move(out.tokens);
    trace.aggregator_attention.push_back(std::move(out.attention));
  }
  const Tensor cls = ops::slice_rows(fused, 0, 1);
  trace.penultimate.assign(cls.data().begin(), cls.data().end());
  trace.logits = ops::reshape(ops::add_bias(ops::matmul(cls, head_w_), head_b_), {config_.n_classes});
  {
    NoGradGuard no_grad;
    const Tensor probs = ops::softmax(trace.logits, 0);
    trace.probabilities.assign(probs.data().begin(), probs.data().end());
  }
  return trace;
}

std::unique_ptr<Model> make_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng init_rng = Rng(seed).split("init");
  switch (config.kind) {
    case ModelKind::kUnicorn: return std::make_unique<UnicornModel>(config, init_rng);
    case ModelKind::kAttentionMil: return std::make_unique<AttentionMilModel>(config, init_rng);
    case ModelKind::kSingleStreamTransformer: return std::make_unique<SingleStreamTransformerModel>(config, init_rng);
  }
  fail(ErrorCode::kConfig, "unknown model kind");
}

std::size_t argmax(const std::vector<double>& values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

Prediction predict(const Model& model, const SampleRecord& sample, const ModalityMask& mask) {
  NoGradGuard no_grad;
  ForwardTrace trace = model.forward(sample, mask, nullptr, false);
  return {argmax(trace.probabilities), std::move(trace.probabilities)};
}

std::vector<std::optional<double>> cls_to_mt_attention(const ForwardTrace& trace, std::size_t n_modalities) {
  std::vector<std::optional<double>> out(n_modalities);
  if (trace.aggregator_attention.empty()) return out;
  for (std::size_t j = 0; j < trace.aggregator_modalities.size(); ++j) {
    double total = 0.0;
    for (const auto& record : trace.aggregator_attention) {
      double head_sum = 0.0;
      for (std::size_t h = 0; h < record.heads.size(); ++h) head_sum += record.at(h, 0, j + 1);
      total += head_sum / static_cast<double>(record.heads.size());
    }
    const std::size_t m = trace.aggregator_modalities[j];
    if (m < n_modalities) out[m] = total / static_cast<double>(trace.aggregator_attention.size());
  }
  return out;
}

}  // namespace unicorn
