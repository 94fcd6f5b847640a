#pragma once

// Latent fusion layer: sensor tokens (queries) attend over prompt tokens
// (keys/values). Queries and keys are scaled by learnable scalars alpha and
// beta before the scaled dot product; the attended values are projected,
// dropped out in training, added back to the sensor tokens and normalized.

#include <cstddef>
#include <string>

#include "lightllm/module.hpp"

namespace lightllm {

struct FusionConfig {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  double dropout = 0.1;
};

// softmax(Tw Sw^T / sqrt(d_k)) per head, shape (heads, q_tokens, k_tokens),
// with d_k = width / heads.
Tensor attention_scores(const Tensor& tw, const Tensor& sw, std::size_t heads);

class LatentFusion {
 public:
  LatentFusion(const FusionConfig& cfg, SeededRng& rng);

  // f_enc: (batch * q_tokens, d); p_embed: (k_tokens, d), shared by the batch.
  // Output of W_O after dropout, before the residual.
  Tensor fuse_attention(const Tensor& f_enc, const Tensor& p_embed, std::size_t batch,
                        bool train, SeededRng* rng) const;
  // layer_norm(f_enc + fuse_attention(...)).
  Tensor fuse(const Tensor& f_enc, const Tensor& p_embed, std::size_t batch, bool train,
              SeededRng* rng) const;
  void collect(ParamList& out, const std::string& prefix) const;
  const FusionConfig& config() const { return cfg_; }

  Tensor w_q, w_k, w_v, w_o, alpha, beta, ln_gamma, ln_beta;

 private:
  FusionConfig cfg_;
};

}  // namespace lightllm
