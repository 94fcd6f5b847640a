#include "lightllm/lora.hpp"

#include <cmath>
#include <stdexcept>

namespace lightllm {

LoraAdapter::LoraAdapter(std::size_t d_in, std::size_t d_out, const LoraConfig& cfg,
                         SeededRng& rng) {
  if (cfg.r < 1) throw std::invalid_argument("lora: rank must be at least 1");
  if (cfg.r > std::min(d_in, d_out))
    throw std::invalid_argument("lora: rank exceeds the adapted matrix width");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0))
    throw std::invalid_argument("lora: dropout must lie in [0, 1)");
  a = Tensor::randn({d_in, cfg.r}, rng, cfg.init_std, true);
  b = Tensor::zeros({cfg.r, d_out}, true);
  scale_ = cfg.alpha / static_cast<double>(cfg.r);
  dropout_ = cfg.dropout;
}

void LoraAdapter::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + "a", a});
  out.push_back({prefix + "b", b});
}

Tensor adapted_forward(const Tensor& x, const Tensor& w, const LoraAdapter* adapter, bool train,
                       SeededRng* rng) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0))
    throw std::invalid_argument("adapted_forward: input width " + shape_string(x.shape()) +
                                " does not match weight " + shape_string(w.shape()));
  Tensor y = matmul(x, w);
  if (!adapter) return y;
  if (adapter->a.dim(0) != w.dim(0) || adapter->b.dim(1) != w.dim(1))
    throw std::invalid_argument("adapted_forward: adapter shape does not match weight");
  Tensor in = x;
  if (train && adapter->dropout_p() > 0.0) {
    if (!rng) throw std::invalid_argument("adapted_forward: training mode needs a generator");
    in = dropout(x, adapter->dropout_p(), *rng);
  }
  return add(y, scale(matmul(matmul(in, adapter->a), adapter->b), adapter->scale()));
}

AdapterSet::AdapterSet(const BackboneConfig& cfg, const LoraConfig& lora, SeededRng& rng) {
  const std::size_t d = cfg.d_model;
  for (std::size_t l = 0; l < cfg.layers; ++l)
    layers_.push_back({LoraAdapter(d, d, lora, rng), LoraAdapter(d, d, lora, rng),
                       LoraAdapter(d, d, lora, rng), LoraAdapter(d, d, lora, rng)});
}

std::size_t AdapterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_)
    for (const auto& a : layer) n += a.parameter_count();
  return n;
}

void AdapterSet::collect(ParamList& out, const std::string& prefix) const {
  static const char* names[] = {"q", "k", "v", "o"};
  for (std::size_t l = 0; l < layers_.size(); ++l)
    for (std::size_t p = 0; p < 4; ++p)
      layers_[l][p].collect(out, prefix + "layer" + std::to_string(l) + "." + names[p] + ".");
}

FrozenBackbone::FrozenBackbone(const BackboneConfig& cfg, SeededRng& rng) : cfg_(cfg) {
  const std::size_t d = cfg.d_model;
  if (cfg.layers < 1) throw std::invalid_argument("backbone: at least one layer required");
  if (cfg.heads == 0 || d % cfg.heads != 0)
    throw std::invalid_argument("backbone: d_model must be divisible by heads");
  auto weight = [&](std::size_t in, std::size_t out) {
    return Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  };
  auto small = [&](std::size_t n, double center) {
    Tensor t = Tensor::randn({n}, rng, 0.05);
    for (double& v : t.mutable_values()) v += center;
    return t;
  };
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    Layer layer;
    layer.ln1_gamma = small(d, 1.0);
    layer.ln1_beta = small(d, 0.0);
    for (auto& p : layer.proj) p = weight(d, d);
    layer.ln2_gamma = small(d, 1.0);
    layer.ln2_beta = small(d, 0.0);
    layer.w1 = weight(d, cfg.ffn);
    layer.b1 = small(cfg.ffn, 0.0);
    layer.w2 = weight(cfg.ffn, d);
    layer.b2 = small(d, 0.0);
    layers.push_back(std::move(layer));
  }
  final_gamma = small(d, 1.0);
  final_beta = small(d, 0.0);
}

Tensor FrozenBackbone::forward(const Tensor& tokens, std::size_t batch, const AdapterSet* adapters,
                               bool train, SeededRng* rng) const {
  const std::size_t d = cfg_.d_model;
  if (tokens.rank() != 2 || tokens.dim(1) != d)
    throw std::invalid_argument("backbone_forward: token width must be " + std::to_string(d));
  if (adapters && adapters->layers() != layers.size())
    throw std::invalid_argument("backbone_forward: adapter set has the wrong depth");
  const double inv = 1.0 / std::sqrt(static_cast<double>(d / cfg_.heads));
  Tensor x = tokens;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& layer = layers[l];
    auto proj = [&](const Tensor& in, Projection p) {
      return adapted_forward(in, layer.proj[p], adapters ? &adapters->at(l, p) : nullptr, train,
                             rng);
    };
    Tensor h = layer_norm(x, layer.ln1_gamma, layer.ln1_beta);
    Tensor att = attention(proj(h, kQuery), proj(h, kKey), proj(h, kValue), cfg_.heads, batch,
                           false, inv);
    x = add(x, proj(att, kOutput));
    h = layer_norm(x, layer.ln2_gamma, layer.ln2_beta);
    x = add(x, linear(gelu(linear(h, layer.w1, layer.b1)), layer.w2, layer.b2));
  }
  return layer_norm(x, final_gamma, final_beta);
}

void FrozenBackbone::collect(ParamList& out, const std::string& prefix) const {
  static const char* names[] = {"q", "k", "v", "o"};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = prefix + "layer" + std::to_string(l) + ".";
    const Layer& layer = layers[l];
    out.push_back({p + "ln1_gamma", layer.ln1_gamma});
    out.push_back({p + "ln1_beta", layer.ln1_beta});
    for (std::size_t i = 0; i < 4; ++i) out.push_back({p + "w_" + names[i], layer.proj[i]});
    out.push_back({p + "ln2_gamma", layer.ln2_gamma});
    out.push_back({p + "ln2_beta", layer.ln2_beta});
    out.push_back({p + "w1", layer.w1});
    out.push_back({p + "b1", layer.b1});
    out.push_back({p + "w2", layer.w2});
    out.push_back({p + "b2", layer.b2});
  }
  out.push_back({prefix + "final_gamma", final_gamma});
  out.push_back({prefix + "final_beta", final_beta});
}

std::uint64_t FrozenBackbone::checksum() const {
  ParamList all;
  collect(all, "");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : all) h = fnv1a(p.tensor.values().data(), p.tensor.size() * sizeof(double), h);
  return h;
}

}  // namespace lightllm
