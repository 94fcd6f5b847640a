#pragma once

// Frozen transformer backbone with low-rank adapters.
//
// An adapted projection computes  y = x W + s * (drop(x) A) B  with
// s = alpha / r, A ~ N(0, 0.02^2) and B = 0 at construction, so a fresh
// adapter leaves the frozen output unchanged bit for bit. (Row-vector
// convention: x is (tokens, d_in), W is (d_in, d_out).)

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lightllm/module.hpp"

namespace lightllm {

struct LoraConfig {
  std::size_t r = 8;
  double alpha = 8.0;
  double dropout = 0.1;
  double init_std = 0.02;
};

class LoraAdapter {
 public:
  LoraAdapter(std::size_t d_in, std::size_t d_out, const LoraConfig& cfg, SeededRng& rng);

  double scale() const { return scale_; }
  double dropout_p() const { return dropout_; }
  std::size_t rank() const { return a.dim(1); }
  std::size_t parameter_count() const { return a.size() + b.size(); }
  void collect(ParamList& out, const std::string& prefix) const;

  Tensor a;  // (d_in, r)
  Tensor b;  // (r, d_out)

 private:
  double scale_;
  double dropout_;
};

// x W, plus the adapter path when `adapter` is non-null. Dropout on the
// adapter input applies only when train is set.
Tensor adapted_forward(const Tensor& x, const Tensor& w, const LoraAdapter* adapter, bool train,
                       SeededRng* rng);

struct BackboneConfig {
  std::size_t layers = 2;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t ffn = 256;
};

enum Projection : std::size_t { kQuery = 0, kKey = 1, kValue = 2, kOutput = 3 };

// Adapters for the four attention projections of every layer.
class AdapterSet {
 public:
  AdapterSet(const BackboneConfig& cfg, const LoraConfig& lora, SeededRng& rng);

  const LoraAdapter& at(std::size_t layer, Projection p) const { return layers_[layer][p]; }
  LoraAdapter& at(std::size_t layer, Projection p) { return layers_[layer][p]; }
  std::size_t layers() const { return layers_.size(); }
  std::size_t parameter_count() const;
  void collect(ParamList& out, const std::string& prefix) const;

 private:
  std::vector<std::array<LoraAdapter, 4>> layers_;
};

class FrozenBackbone {
 public:
  // Weights are drawn from `rng` and never require gradients.
  FrozenBackbone(const BackboneConfig& cfg, SeededRng& rng);

  // Pre-norm stack: x + Attn(LN(x)), then x + FFN(LN(x)), then a final LN.
  // tokens: (batch * n, d). adapters may be null (pure frozen forward).
  Tensor forward(const Tensor& tokens, std::size_t batch, const AdapterSet* adapters, bool train,
                 SeededRng* rng) const;

  // FNV-1a over every frozen value.
  std::uint64_t checksum() const;
  const BackboneConfig& config() const { return cfg_; }
  // For checkpoints; these are never trained.
  void collect(ParamList& out, const std::string& prefix) const;

  struct Layer {
    Tensor ln1_gamma, ln1_beta;
    std::array<Tensor, 4> proj;  // q, k, v, o: (d, d)
    Tensor ln2_gamma, ln2_beta;
    Tensor w1, b1, w2, b2;
  };
  std::vector<Layer> layers;
  Tensor final_gamma, final_beta;

 private:
  BackboneConfig cfg_;
};

}  // namespace lightllm
