#pragma once

#include <string>
#include <utility>
#include <vector>

#include "unicorn/params.hpp"
#include "unicorn/rng.hpp"
#include "unicorn/tensor.hpp"

namespace unicorn {

// Weights of one pre-norm transformer block. Tensors alias the entries of the
// owning ParamRegistry.
struct BlockParams {
  std::size_t model_dim = 0;
  std::size_t n_heads = 0;
  Tensor wq, wk, wv, wo;      // [d x d]
  Tensor ln1_gain, ln1_bias;  // [d]
  Tensor ln2_gain, ln2_bias;  // [d]
  Tensor mlp_in, mlp_in_bias;    // [d x 4d], [4d]
  Tensor mlp_out, mlp_out_bias;  // [4d x d], [d]

  // Registers all weights under `prefix` ("expert.0.block.1." etc.).
  static BlockParams create(ParamRegistry& registry, const std::string& prefix, std::size_t model_dim,
                            std::size_t n_heads, double init_std, Rng& rng);
};

// Post-softmax attention of one block invocation: n_heads row-stochastic
// [tokens x tokens] matrices, row-major.
struct AttentionRecord {
  std::size_t tokens = 0;
  std::vector<std::vector<double>> heads;

  double at(std::size_t head, std::size_t row, std::size_t col) const { return heads[head][row * tokens + col]; }
};

struct BlockOutput {
  Tensor tokens;
  AttentionRecord attention;
};

// x <- x + MHA(LN1(x)); x <- x + Dropout(MLP(LN2(x))). No positional encoding,
// so the block is equivariant under token permutation.
BlockOutput block_forward(const Tensor& tokens, const BlockParams& params, double dropout_p, Rng* rng, bool training);

// Mean over heads, [T x T]. Rows remain stochastic.
Tensor head_mean_attention(const AttentionRecord& record);

}  // namespace unicorn
