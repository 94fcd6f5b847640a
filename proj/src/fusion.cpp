#include "lightllm/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace lightllm {

namespace {

// Lexicographic row order. Summing keys in this order makes the output exactly
// independent of how the prompt rows were arranged.
std::vector<std::size_t> canonical_rows(const Tensor& x) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  const auto v = x.values();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(v.begin() + a * d, v.begin() + (a + 1) * d,
                                        v.begin() + b * d, v.begin() + (b + 1) * d);
  });
  return order;
}

}  // namespace

Tensor attention_scores(const Tensor& tw, const Tensor& sw, std::size_t heads) {
  if (tw.rank() != 2 || sw.rank() != 2 || tw.dim(1) != sw.dim(1))
    throw std::invalid_argument("attention_scores: query/key width mismatch");
  const std::size_t d = tw.dim(1);
  if (heads == 0 || d % heads != 0)
    throw std::invalid_argument("attention_scores: width not divisible by heads");
  const std::size_t dk = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Tensor> logits;
  for (std::size_t h = 0; h < heads; ++h)
    logits.push_back(
        scale(matmul(slice_cols(tw, h * dk, dk), transpose(slice_cols(sw, h * dk, dk))), inv));
  Tensor stacked = reshape(concat_rows(logits), {heads, tw.dim(0), sw.dim(0)});
  return softmax(stacked, 2);
}

LatentFusion::LatentFusion(const FusionConfig& cfg, SeededRng& rng) : cfg_(cfg) {
  const std::size_t d = cfg.d_model;
  if (cfg.heads == 0 || d % cfg.heads != 0)
    throw std::invalid_argument("fusion: d_model must be divisible by heads");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0))
    throw std::invalid_argument("fusion: dropout must lie in [0, 1)");
  w_q = init_weight(d, d, rng);
  w_k = init_weight(d, d, rng);
  w_v = init_weight(d, d, rng);
  w_o = init_weight(d, d, rng);
  alpha = Tensor::scalar(1.0, true);
  beta = Tensor::scalar(1.0, true);
  ln_gamma = Tensor::full({d}, 1.0, true);
  ln_beta = init_zeros({d});
}

Tensor LatentFusion::fuse_attention(const Tensor& f_enc, const Tensor& p_embed, std::size_t batch,
                                    bool train, SeededRng* rng) const {
  const std::size_t d = cfg_.d_model;
  if (f_enc.rank() != 2 || f_enc.dim(1) != d || p_embed.rank() != 2 || p_embed.dim(1) != d)
    throw std::invalid_argument("fuse: encoder and prompt tokens must both have width " +
                                std::to_string(d));
  const auto order = canonical_rows(p_embed);
  Tensor keys = select_rows(p_embed, order);
  Tensor t = mul_scalar(matmul(f_enc, w_q), alpha);  // T' = alpha Q
  Tensor s = mul_scalar(matmul(keys, w_k), beta);    // S' = beta K
  Tensor v = matmul(keys, w_v);
  const double inv = 1.0 / std::sqrt(static_cast<double>(d / cfg_.heads));
  Tensor out = matmul(attention(t, s, v, cfg_.heads, batch, true, inv), w_o);
  if (train && cfg_.dropout > 0.0) {
    if (!rng) throw std::invalid_argument("fuse: training mode needs a dropout generator");
    out = dropout(out, cfg_.dropout, *rng);
  }
  return out;
}

Tensor LatentFusion::fuse(const Tensor& f_enc, const Tensor& p_embed, std::size_t batch,
                          bool train, SeededRng* rng) const {
  return layer_norm(add(f_enc, fuse_attention(f_enc, p_embed, batch, train, rng)), ln_gamma,
                    ln_beta);
}

void LatentFusion::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + "w_q", w_q});
  out.push_back({prefix + "w_k", w_k});
  out.push_back({prefix + "w_v", w_v});
  out.push_back({prefix + "w_o", w_o});
  out.push_back({prefix + "alpha", alpha});
  out.push_back({prefix + "beta", beta});
  out.push_back({prefix + "ln_gamma", ln_gamma});
  out.push_back({prefix + "ln_beta", ln_beta});
}

}  // namespace lightllm
