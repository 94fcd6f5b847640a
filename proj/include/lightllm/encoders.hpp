#pragma once

// Task-specific encoders producing the token matrix F_enc:
//   GNN  - typed-edge mean message passing over the knowledge graph
//   TCN  - dilated causal temporal convolution
//   CNN  - strided convolution across the 18 spectral channels
// All take a batch of samples stacked along rows and return (batch * tokens, d).

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "lightllm/module.hpp"
#include "lightllm/sensor_kg.hpp"

namespace lightllm {

enum class Activation { tanh, identity };
Tensor activate(const Tensor& x, Activation act);

// 1-D convolution over each block of `length` rows of x (batch * length, cin).
// w is (kernel * cin, cout) with row index tap * cin + channel; tap j reads
// input position o * stride + j * dilation - pad_left (zero outside).
Tensor conv1d(const Tensor& x, std::size_t batch, const Tensor& w, const Tensor& b,
              std::size_t kernel, std::size_t stride, std::size_t dilation, std::size_t pad_left,
              std::size_t pad_right);

// ---------------------------------------------------------------------------

struct GnnConfig {
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::size_t max_sensors = 64;
  std::size_t max_lights = 16;
  double length_scale = 10.0;  // positions are divided by this
  Activation activation = Activation::tanh;
  // false: nodes start from their raw features only (no position, no
  // embedding) -- what is left of the encoder once the graph is taken away.
  bool node_attributes = true;
};

// A knowledge graph prepared for batched message passing. Nodes are ordered
// sensors first, then lights. Adjacency is symmetric and row-normalized per
// edge kind (mean over that kind's neighbors; isolated rows are zero).
struct GraphContext {
  std::size_t sensors = 0;
  std::size_t lights = 0;
  std::shared_ptr<const std::vector<double>> correlated;
  std::shared_ptr<const std::vector<double>> light_affects;
  Tensor positions;  // (nodes, 3), coordinates / length_scale
  // Embedding row of each sensor / light: rank of its id among the ids of
  // its kind. Follows the node rather than its index, so reordering the
  // graph permutes the outputs and changes nothing else.
  std::vector<std::size_t> sensor_slots, light_slots;

  static GraphContext from(const KnowledgeGraph& graph, double length_scale);
  std::size_t nodes() const { return sensors + lights; }
};

class GnnEncoder {
 public:
  GnnEncoder(const GnnConfig& cfg, std::size_t feature_dim, SeededRng& rng);

  // features: (batch * sensors, feature_dim) -> one token per sensor.
  Tensor encode(const GraphContext& graph, const Tensor& features, std::size_t batch) const;
  void collect(ParamList& out, const std::string& prefix) const;
  const GnnConfig& config() const { return cfg_; }

  struct Layer {
    Tensor w_self, w_correlated, w_light, bias;
  };
  Tensor w_feature, w_position, b_in, sensor_embedding, light_embedding;
  std::vector<Layer> layers;

 private:
  GnnConfig cfg_;
  std::size_t feature_dim_;
};

// ---------------------------------------------------------------------------

struct TcnConfig {
  std::size_t blocks = 3;
  std::size_t kernel = 3;
  std::size_t channels = 64;
  Activation activation = Activation::tanh;
};

class TcnEncoder {
 public:
  TcnEncoder(const TcnConfig& cfg, std::size_t in_channels, SeededRng& rng);

  // series: (batch * steps, in_channels) -> one token per step. Block k uses
  // dilation 2^k with left padding (kernel - 1) * 2^k; each block adds its
  // input back (residual).
  Tensor encode(const Tensor& series, std::size_t batch) const;
  // Last step's token of every block: (batch, channels).
  static Tensor last_token(const Tensor& tokens, std::size_t batch);
  void collect(ParamList& out, const std::string& prefix) const;
  const TcnConfig& config() const { return cfg_; }
  static std::size_t dilation(std::size_t block) { return std::size_t{1} << block; }

  struct Block {
    Tensor w, b;
  };
  Tensor w_in, b_in;
  std::vector<Block> blocks;

 private:
  TcnConfig cfg_;
  std::size_t in_channels_;
};

// ---------------------------------------------------------------------------

struct CnnConfig {
  std::size_t channels1 = 16;
  std::size_t channels2 = 32;
  std::size_t kernel = 3;
  std::size_t d_model = 64;
  Activation activation = Activation::tanh;
};

class CnnEncoder {
 public:
  static constexpr std::size_t kInputChannels = 18;

  CnnEncoder(const CnnConfig& cfg, SeededRng& rng);

  // spectra: (batch, 18). Two convolutions (stride 1, then stride 2) give
  // 9 positions; each becomes a token, plus one mean-pooled token.
  Tensor encode(const Tensor& spectra, std::size_t batch) const;
  // Activations of the second convolution, (batch * 9, channels2).
  Tensor features(const Tensor& spectra, std::size_t batch) const;
  std::size_t tokens_per_sample() const { return positions() + 1; }
  static std::size_t positions() { return 9; }
  void collect(ParamList& out, const std::string& prefix) const;

  Tensor w1, b1, w2, b2, w_token, b_token;

 private:
  CnnConfig cfg_;
};

// ---------------------------------------------------------------------------

// Stand-in used when the task-specific encoder is ablated: one linear map from
// the flattened raw input to `tokens` tokens of width d.
class FlatEncoder {
 public:
  FlatEncoder(std::size_t input_dim, std::size_t tokens, std::size_t d_model, SeededRng& rng);

  // x: (batch, input_dim) -> (batch * tokens, d).
  Tensor encode(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;

  Tensor w, b;

 private:
  std::size_t tokens_, d_;
};

}  // namespace lightllm
