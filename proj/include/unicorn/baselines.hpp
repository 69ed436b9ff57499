#pragma once

#include "unicorn/model.hpp"

namespace unicorn {

// Gated attention MIL pooling over the union of all present bags, with one
// stain-agnostic projection:
//   h_i = gelu(W x_i + b)
//   a   = softmax_i(w^T (tanh(V h_i) * sigmoid(U h_i)))
//   z   = sum_i a_i h_i,  logits = head(z)
class AttentionMilModel final : public Model {
 public:
  AttentionMilModel(ModelConfig config, Rng& init_rng);

  ForwardTrace forward(const SampleRecord& sample, const ModalityMask& mask, Rng* rng, bool training) const override;

 private:
  Tensor proj_w_, proj_b_;
  Tensor att_v_, att_v_b_, att_u_, att_u_b_, att_w_;
  Tensor head_w_, head_b_;
};

// One shared transformer over [CLS; projected patches of every present
// modality]. Modality identity is discarded.
class SingleStreamTransformerModel final : public Model {
 public:
  SingleStreamTransformerModel(ModelConfig config, Rng& init_rng);

  ForwardTrace forward(const SampleRecord& sample, const ModalityMask& mask, Rng* rng, bool training) const override;

 private:
  Tensor proj_w_, proj_b_, cls_token_;
  std::vector<BlockParams> blocks_;
  Tensor head_w_, head_b_;
};

}  // namespace unicorn
