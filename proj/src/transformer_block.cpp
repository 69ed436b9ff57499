#include "unicorn/transformer_block.hpp"

#include <cmath>

#include "unicorn/error.hpp"
#include "unicorn/ops.hpp"

namespace unicorn {

BlockParams BlockParams::create(ParamRegistry& registry, const std::string& prefix, std::size_t model_dim,
                                std::size_t n_heads, double init_std, Rng& rng) {
  if (n_heads == 0 || model_dim % n_heads != 0) {
    fail(ErrorCode::kConfig, "model_dim " + std::to_string(model_dim) + " is not divisible by n_heads " +
                                 std::to_string(n_heads));
  }
  const std::size_t d = model_dim;
  const std::size_t hidden = 4 * d;
  BlockParams p;
  p.model_dim = d;
  p.n_heads = n_heads;
  p.wq = registry.add(prefix + "wq", truncated_normal_param({d, d}, init_std, rng), true);
  p.wk = registry.add(prefix + "wk", truncated_normal_param({d, d}, init_std, rng), true);
  p.wv = registry.add(prefix + "wv", truncated_normal_param({d, d}, init_std, rng), true);
  p.wo = registry.add(prefix + "wo", truncated_normal_param({d, d}, init_std, rng), true);
  p.ln1_gain = registry.add(prefix + "ln1.gain", constant_param({d}, 1.0), false);
  p.ln1_bias = registry.add(prefix + "ln1.bias", constant_param({d}, 0.0), false);
  p.ln2_gain = registry.add(prefix + "ln2.gain", constant_param({d}, 1.0), false);
  p.ln2_bias = registry.add(prefix + "ln2.bias", constant_param({d}, 0.0), false);
  p.mlp_in = registry.add(prefix + "mlp.in", truncated_normal_param({d, hidden}, init_std, rng), true);
  p.mlp_in_bias = registry.add(prefix + "mlp.in.bias", constant_param({hidden}, 0.0), false);
  p.mlp_out = registry.add(prefix + "mlp.out", truncated_normal_param({hidden, d}, init_std, rng), true);
  p.mlp_out_bias = registry.add(prefix + "mlp.out.bias", constant_param({d}, 0.0), false);
  return p;
}

BlockOutput block_forward(const Tensor& tokens, const BlockParams& params, double dropout_p, Rng* rng, bool training) {
  if (tokens.rank() != 2 || tokens.dim(0) == 0) {
    fail(ErrorCode::kShape, "block_forward needs at least one token, got " + shape_string(tokens.shape()));
  }
  if (tokens.dim(1) != params.model_dim) {
    fail(ErrorCode::kShape, "block_forward: token width " + std::to_string(tokens.dim(1)) + " != model_dim " +
                                std::to_string(params.model_dim));
  }
  const std::size_t t = tokens.dim(0);
  const std::size_t head_dim = params.model_dim / params.n_heads;
  const double score_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  const Tensor normed = ops::layer_norm(tokens, params.ln1_gain, params.ln1_bias);
  const Tensor q = ops::matmul(normed, params.wq);
  const Tensor k = ops::matmul(normed, params.wk);
  const Tensor v = ops::matmul(normed, params.wv);

  AttentionRecord record;
  record.tokens = t;
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(params.n_heads);
  for (std::size_t h = 0; h < params.n_heads; ++h) {
    const Tensor qh = ops::slice_cols(q, h * head_dim, head_dim);
    const Tensor kh = ops::slice_cols(k, h * head_dim, head_dim);
    const Tensor vh = ops::slice_cols(v, h * head_dim, head_dim);
    const Tensor scores = ops::scale(ops::matmul(qh, ops::transpose(kh)), score_scale);
    const Tensor attn = ops::softmax(scores, 1);
    record.heads.emplace_back(attn.data().begin(), attn.data().end());
    head_outputs.push_back(ops::matmul(attn, vh));
  }
  const Tensor mixed = ops::matmul(ops::concat_cols(head_outputs), params.wo);
  const Tensor x1 = ops::add(tokens, mixed);

  const Tensor normed2 = ops::layer_norm(x1, params.ln2_gain, params.ln2_bias);
  const Tensor hidden = ops::gelu(ops::add_bias(ops::matmul(normed2, params.mlp_in), params.mlp_in_bias));
  const Tensor mlp = ops::add_bias(ops::matmul(hidden, params.mlp_out), params.mlp_out_bias);
  const Tensor x2 = ops::add(x1, ops::dropout(mlp, dropout_p, rng, training));
  return {x2, std::move(record)};
}

Tensor head_mean_attention(const AttentionRecord& record) {
  const std::size_t n = record.tokens * record.tokens;
  std::vector<double> mean(n, 0.0);
  if (record.heads.empty()) fail(ErrorCode::kShape, "attention record without heads");
  for (const auto& head : record.heads) {
    if (head.size() != n) fail(ErrorCode::kShape, "attention head extent mismatch");
    for (std::size_t i = 0; i < n; ++i) mean[i] += head[i];
  }
  const double inv = 1.0 / static_cast<double>(record.heads.size());
  for (double& m : mean) m *= inv;
  return Tensor::from({record.tokens, record.tokens}, std::move(mean));
}

}  // namespace unicorn
