#include "unicorn/baselines.hpp"

#include "unicorn/ops.hpp"

namespace unicorn {

namespace {

void finish_trace(ForwardTrace& trace, const Tensor& representation, const Tensor& head_w, const Tensor& head_b,
                  std::size_t n_classes) {
  trace.penultimate.assign(representation.data().begin(), representation.data().end());
  trace.logits = ops::reshape(ops::add_bias(ops::matmul(representation, head_w), head_b), {n_classes});
  NoGradGuard no_grad;
  const Tensor probs = ops::softmax(trace.logits, 0);
  trace.probabilities.assign(probs.data().begin(), probs.data().end());
}

}  // namespace

AttentionMilModel::AttentionMilModel(ModelConfig config, Rng& init_rng) : Model(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  const std::size_t d = c.model_dim;
  proj_w_ = params_.add("mil.proj.w", truncated_normal_param({c.feat_dim, d}, c.init_std, init_rng), true);
  proj_b_ = params_.add("mil.proj.b", constant_param({d}, 0.0), false);
  att_v_ = params_.add("mil.att.v", truncated_normal_param({d, d}, c.init_std, init_rng), true);
  att_v_b_ = params_.add("mil.att.v.b", constant_param({d}, 0.0), false);
  att_u_ = params_.add("mil.att.u", truncated_normal_param({d, d}, c.init_std, init_rng), true);
  att_u_b_ = params_.add("mil.att.u.b", constant_param({d}, 0.0), false);
  att_w_ = params_.add("mil.att.w", truncated_normal_param({d, 1}, c.init_std, init_rng), true);
  head_w_ = params_.add("head.w", truncated_normal_param({d, c.n_classes}, c.init_std, init_rng), true);
  head_b_ = params_.add("head.b", constant_param({c.n_classes}, 0.0), false);
}

ForwardTrace AttentionMilModel::forward(const SampleRecord& sample, const ModalityMask& mask, Rng* rng,
                                        bool training) const {
  check_inputs(sample, mask);
  ForwardTrace trace;
  trace.mask = mask;
  trace.expert_attention.resize(config_.n_modalities);
  std::vector<Tensor> bags;
  for (const auto m : mask.members()) bags.push_back(sample.bags.at(m).matrix);
  const Tensor pooled_bag = ops::concat_rows(bags);
  const Tensor h = ops::gelu(ops::add_bias(ops::matmul(pooled_bag, proj_w_), proj_b_));
  const Tensor gate = ops::mul(ops::tanh(ops::add_bias(ops::matmul(h, att_v_), att_v_b_)),
                               ops::sigmoid(ops::add_bias(ops::matmul(h, att_u_), att_u_b_)));
  const Tensor weights = ops::softmax(ops::matmul(gate, att_w_), 0);  // [N x 1]
  trace.pooling_weights.assign(weights.data().begin(), weights.data().end());
  const Tensor z = ops::dropout(ops::matmul(ops::transpose(weights), h), config_.dropout_p, rng, training);
  finish_trace(trace, z, head_w_, head_b_, config_.n_classes);
  return trace;
}

SingleStreamTransformerModel::SingleStreamTransformerModel(ModelConfig config, Rng& init_rng)
    : Model(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  const std::size_t d = c.model_dim;
  proj_w_ = params_.add("stream.proj.w", truncated_normal_param({c.feat_dim, d}, c.init_std, init_rng), true);
  proj_b_ = params_.add("stream.proj.b", constant_param({d}, 0.0), false);
  for (std::size_t b = 0; b < c.blocks_per_expert; ++b) {
    blocks_.push_back(
        BlockParams::create(params_, "stream.block." + std::to_string(b) + ".", d, c.n_heads, c.init_std, init_rng));
  }
  cls_token_ = params_.add("cls", truncated_normal_param({1, d}, c.init_std, init_rng), true);
  head_w_ = params_.add("head.w", truncated_normal_param({d, c.n_classes}, c.init_std, init_rng), true);
  head_b_ = params_.add("head.b", constant_param({c.n_classes}, 0.0), false);
}

ForwardTrace SingleStreamTransformerModel::forward(const SampleRecord& sample, const ModalityMask& mask, Rng* rng,
                                                   bool training) const {
  check_inputs(sample, mask);
  ForwardTrace trace;
  trace.mask = mask;
  trace.expert_attention.resize(config_.n_modalities);
  std::vector<Tensor> bags;
  for (const auto m : mask.members()) bags.push_back(sample.bags.at(m).matrix);
  const Tensor projected = ops::add_bias(ops::matmul(ops::concat_rows(bags), proj_w_), proj_b_);
  const Tensor parts[] = {cls_token_, projected};
  Tensor tokens = ops::concat_rows(parts);
  for (const auto& block : blocks_) {
    auto out = block_forward(tokens, block, config_.dropout_p, rng, training);
    tokens = std::move(out.tokens);
    trace.aggregator_attention.push_back(std::move(out.attention));
  }
  finish_trace(trace, ops::slice_rows(tokens, 0, 1), head_w_, head_b_, config_.n_classes);
  return trace;
}

}  // namespace unicorn
