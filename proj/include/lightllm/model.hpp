#pragma once

// The assembled model: task encoder -> latent fusion with the knowledge
// prompt -> frozen backbone with adapters -> task head. Ablation flags swap
// or remove single stages.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lightllm/encoders.hpp"
#include "lightllm/fusion.hpp"
#include "lightllm/heads.hpp"
#include "lightllm/lora.hpp"
#include "lightllm/prompt.hpp"
#include "lightllm/sensor_kg.hpp"

namespace lightllm {

enum class Task { localization, forecasting, estimation };
Task task_from_name(const std::string& name);
const char* task_name(Task task);

struct Ablation {
  bool disable_lfl = false;
  bool disable_tse = false;
  bool disable_lora = false;
  bool disable_kg = false;

  bool operator==(const Ablation&) const = default;
};

struct ModelConfig {
  Task task = Task::localization;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t ffn = 256;
  std::size_t encoder_layers = 2;  // GNN layers / TCN blocks
  LoraConfig lora;
  double fusion_dropout = 0.1;
  std::size_t prompt_length = 32;
  std::size_t vocab = 4096;
  Ablation ablation;

  void validate() const;
};

// Data-dependent sizes. Inputs always use the encoder's layout:
//   localization  (batch * sensors, 18)       deltas, each channel divided by its RMS over sensors
//   forecasting   (batch * (P + T), 3)        [output, clear sky, future flag]
//   estimation    (batch, 18)                 normalized reading
struct TaskShape {
  std::optional<KnowledgeGraph> graph;  // localization
  std::size_t classes = 0;              // localization
  std::size_t history = 0, horizon = 0;  // forecasting
  std::vector<double> levels = kDefaultQuantileLevels;
  std::size_t outputs = 0;  // estimation: cells
  std::string prompt;       // rendered knowledge prompt

  std::size_t input_rows() const;     // rows per sample
  std::size_t input_columns() const;  // features per row
};

class LightLlm {
 public:
  LightLlm(const ModelConfig& cfg, const TaskShape& shape, std::uint64_t seed);

  // Tokens after the encoder (and fusion unless disabled): (batch * n, d).
  Tensor fused_tokens(const Tensor& input, std::size_t batch, bool train, SeededRng* rng) const;
  // Backbone output: (batch * n, d).
  Tensor hidden(const Tensor& input, std::size_t batch, bool train, SeededRng* rng) const;
  // Head output: logits (batch, classes), sorted quantiles (batch * T, levels)
  // or estimates (batch, outputs).
  Tensor forward(const Tensor& input, std::size_t batch, bool train, SeededRng* rng) const;

  std::size_t tokens_per_sample() const { return tokens_; }
  const ModelConfig& config() const { return cfg_; }
  const TaskShape& shape() const { return shape_; }
  const FrozenBackbone& backbone() const { return backbone_; }

  // Everything the optimizer updates; excludes disabled stages.
  ParamList trainable() const;
  // Every tensor, frozen ones included (checkpoint order).
  ParamList all() const;

 private:
  Tensor encode(const Tensor& input, std::size_t batch) const;

  ModelConfig cfg_;
  TaskShape shape_;
  std::size_t tokens_ = 0;
  std::optional<GraphContext> graph_;
  std::optional<GnnEncoder> gnn_;
  std::optional<TcnEncoder> tcn_;
  std::optional<CnnEncoder> cnn_;
  std::optional<FlatEncoder> flat_;
  std::optional<PromptTable> prompt_;
  std::vector<std::int64_t> prompt_ids_;
  std::optional<LatentFusion> fusion_;
  FrozenBackbone backbone_;
  std::optional<AdapterSet> adapters_;
  std::optional<ClassificationHead> classify_;
  std::optional<QuantileHead> quantile_;
  std::optional<ScalarHead> scalar_;
};

// Adam with decays 0.9 / 0.999.
class Adam {
 public:
  Adam(ParamList params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  // Applies one update from the current gradients; parameters without a
  // gradient are left untouched. Gradients are cleared afterwards.
  void step();
  void zero_grad();
  std::size_t steps() const { return t_; }
  const ParamList& params() const { return params_; }

 private:
  ParamList params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

}  // namespace lightllm
