#include "lightllm/model.hpp"

#include <cmath>
#include <stdexcept>

namespace lightllm {

Task task_from_name(const std::string& name) {
  if (name == "localization") return Task::localization;
  if (name == "forecasting") return Task::forecasting;
  if (name == "estimation") return Task::estimation;
  throw std::invalid_argument("unknown task '" + name + "'");
}

const char* task_name(Task task) {
  switch (task) {
    case Task::localization: return "localization";
    case Task::forecasting: return "forecasting";
    case Task::estimation: return "estimation";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (d_model == 0 || heads == 0 || d_model % heads != 0)
    throw std::invalid_argument("model: d_model must be a positive multiple of heads");
  if (layers == 0 || ffn == 0 || encoder_layers == 0)
    throw std::invalid_argument("model: layers, ffn and encoder_layers must be positive");
  if (lora.r < 1 || lora.r > d_model)
    throw std::invalid_argument("model: lora r must lie in [1, d_model]");
  if (!(lora.dropout >= 0.0 && lora.dropout < 1.0) || !(fusion_dropout >= 0.0 && fusion_dropout < 1.0))
    throw std::invalid_argument("model: dropout must lie in [0, 1)");
  if (prompt_length == 0 || vocab == 0)
    throw std::invalid_argument("model: prompt length and vocabulary must be positive");
}

std::size_t TaskShape::input_rows() const {
  if (graph) return graph->sensors.size();
  if (horizon > 0) return history + horizon;
  return 1;
}

std::size_t TaskShape::input_columns() const {
  if (graph) return kChannels;
  if (horizon > 0) return 3;
  return CnnEncoder::kInputChannels;
}

LightLlm::LightLlm(const ModelConfig& cfg, const TaskShape& shape, std::uint64_t seed)
    : cfg_(cfg),
      shape_(shape),
      backbone_([&] {
        cfg.validate();
        SeededRng rng(seed, streams::kBackbone);
        return FrozenBackbone(BackboneConfig{cfg.layers, cfg.d_model, cfg.heads, cfg.ffn}, rng);
      }()) {
  const SeededRng root(seed, streams::kWeights);
  const std::size_t d = cfg.d_model;
  SeededRng enc_rng = root.derive(0);

  switch (cfg.task) {
    case Task::localization: {
      if (!shape.graph || shape.graph->sensors.empty() || shape.classes == 0)
        throw std::invalid_argument("model: localization needs a graph with sensors and classes");
      tokens_ = shape.graph->sensors.size();
      break;
    }
    case Task::forecasting:
      if (shape.history == 0 || shape.horizon == 0)
        throw std::invalid_argument("model: forecasting needs history and horizon");
      tokens_ = shape.history + shape.horizon;
      break;
    case Task::estimation:
      if (shape.outputs == 0) throw std::invalid_argument("model: estimation needs outputs");
      tokens_ = CnnEncoder::positions() + 1;
      break;
  }

  if (cfg.ablation.disable_tse) {
    flat_.emplace(shape.input_rows() * shape.input_columns(), tokens_, d, enc_rng);
  } else if (cfg.task == Task::localization) {
    const KnowledgeGraph g = cfg.ablation.disable_kg ? shape.graph->without_edges() : *shape.graph;
    GnnConfig gc;
    gc.layers = cfg.encoder_layers;
    gc.hidden = d;
    gc.max_sensors = std::max<std::size_t>(64, g.sensors.size());
    gc.max_lights = std::max<std::size_t>(16, g.lights.size());
    gc.node_attributes = !cfg.ablation.disable_kg;
    graph_ = GraphContext::from(g, gc.length_scale);
    gnn_.emplace(gc, kChannels, enc_rng);
  } else if (cfg.task == Task::forecasting) {
    TcnConfig tc;
    tc.blocks = cfg.encoder_layers + 1;
    tc.channels = d;
    tcn_.emplace(tc, 3, enc_rng);
  } else {
    CnnConfig cc;
    cc.d_model = d;
    cnn_.emplace(cc, enc_rng);
  }

  if (!cfg.ablation.disable_lfl) {
    SeededRng prng = root.derive(1);
    prompt_.emplace(PromptConfig{cfg.vocab, cfg.prompt_length, d}, prng);
    prompt_ids_ = prompt_token_ids(shape.prompt, cfg.vocab, cfg.prompt_length);
    SeededRng frng = root.derive(2);
    fusion_.emplace(FusionConfig{d, cfg.heads, cfg.fusion_dropout}, frng);
  }

  if (!cfg.ablation.disable_lora) {
    SeededRng lrng(seed, streams::kLora);
    adapters_.emplace(backbone_.config(), cfg.lora, lrng);
  }

  SeededRng hrng = root.derive(3);
  switch (cfg.task) {
    case Task::localization: classify_.emplace(d, shape.classes, hrng); break;
    case Task::forecasting: quantile_.emplace(d, shape.horizon, shape.levels, hrng); break;
    case Task::estimation: scalar_.emplace(d, shape.outputs, hrng); break;
  }
}

Tensor LightLlm::encode(const Tensor& input, std::size_t batch) const {
  const std::size_t rows = shape_.input_rows(), cols = shape_.input_columns();
  if (batch == 0 || input.rank() != 2 || input.dim(0) != batch * rows || input.dim(1) != cols)
    throw std::invalid_argument("model: input must be (" + std::to_string(batch * rows) + ", " +
                                std::to_string(cols) + "), got " + shape_string(input.shape()));
  if (flat_) return flat_->encode(reshape(input, {batch, rows * cols}));
  if (gnn_) return gnn_->encode(*graph_, input, batch);
  if (tcn_) return tcn_->encode(input, batch);
  return cnn_->encode(input, batch);
}

Tensor LightLlm::fused_tokens(const Tensor& input, std::size_t batch, bool train,
                              SeededRng* rng) const {
  Tensor tokens = encode(input, batch);
  if (!fusion_) return tokens;
  return fusion_->fuse(tokens, prompt_->embed_ids(prompt_ids_), batch, train, rng);
}

Tensor LightLlm::hidden(const Tensor& input, std::size_t batch, bool train, SeededRng* rng) const {
  return backbone_.forward(fused_tokens(input, batch, train, rng), batch,
                           adapters_ ? &*adapters_ : nullptr, train, rng);
}

Tensor LightLlm::forward(const Tensor& input, std::size_t batch, bool train,
                         SeededRng* rng) const {
  const Tensor h = hidden(input, batch, train, rng);
  if (classify_) return classify_->logits(h, tokens_);
  if (quantile_) return quantile_->forward(h, tokens_);
  return scalar_->forward(h, tokens_);
}

ParamList LightLlm::trainable() const {
  ParamList out;
  if (flat_) flat_->collect(out, "encoder.");
  if (gnn_) gnn_->collect(out, "encoder.");
  if (tcn_) tcn_->collect(out, "encoder.");
  if (cnn_) cnn_->collect(out, "encoder.");
  if (prompt_) prompt_->collect(out, "prompt.");
  if (fusion_) fusion_->collect(out, "fusion.");
  if (adapters_) adapters_->collect(out, "lora.");
  if (classify_) classify_->collect(out, "head.");
  if (quantile_) quantile_->collect(out, "head.");
  if (scalar_) scalar_->collect(out, "head.");
  return out;
}

ParamList LightLlm::all() const {
  ParamList out = trainable();
  backbone_.collect(out, "backbone.");
  return out;
}

// --- Adam --------------------------------------------------------------------

Adam::Adam(ParamList params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
  for (const auto& p : params_) {
    if (!p.tensor.is_leaf() || !p.tensor.requires_grad())
      throw std::invalid_argument("adam: parameter '" + p.name + "' is not a trainable leaf");
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k].tensor;
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_values();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
    p.clear_grad();
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.clear_grad();
}

}  // namespace lightllm
