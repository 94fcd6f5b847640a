#pragma once

// Experiment plumbing: configuration, seeded data preparation, the training
// loop, evaluation, the ablation grid and checkpoints.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lightllm/metrics.hpp"
#include "lightllm/model.hpp"
#include "lightllm/synth.hpp"

namespace lightllm {

struct ExperimentConfig {
  Task task = Task::localization;
  std::string scene = "office";  // fixture name or scene file; unused for forecasting
  std::uint64_t seed = 1;
  SplitMode split = SplitMode::seen;
  std::size_t samples = 2000;  // per environment (localization, estimation)
  double noise = 0.01;
  // forecasting
  std::size_t pv_days = 60;
  std::size_t history = 16;
  std::size_t horizon = 4;
  std::size_t stride = 3;
  double time_split = 0.7;  // train fraction for the unseen (temporal) split
  PvParams pv;
  // training
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 2e-3;
  ModelConfig model;  // model.task mirrors task

  void validate() const;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// Resolves a fixture name or a scene file path.
SceneSpec resolve_scene(const std::string& name_or_path);

// Everything a run consumes, derived from the seed alone.
struct PreparedData {
  Task task = Task::localization;
  SplitMode split = SplitMode::seen;
  SceneSpec scene;
  std::optional<KnowledgeGraph> graph;
  LocationCatalog catalog;
  std::vector<std::string> cells;
  Split<LocalizationSample> localization;
  Split<ForecastSample> forecasting;
  Split<EstimationSample> estimation;
  std::string prompt;
  std::uint64_t digest = 0;

  std::size_t train_size() const;
  std::size_t test_size() const;
};

PreparedData prepare_data(const ExperimentConfig& cfg);

// Rendered knowledge prompt for a task.
std::string task_prompt(const ExperimentConfig& cfg, const PreparedData& data);

// A model plus the input/target scaling fitted on its training split.
struct TrainedModel {
  ExperimentConfig config;
  TaskShape shape;
  LocationCatalog catalog;
  std::vector<std::string> cells;
  std::vector<double> feature_mean, feature_scale;  // per input column
  std::vector<double> target_scale;                 // estimation: per cell
  std::unique_ptr<LightLlm> model;
};

// Fresh model and scalers for the prepared data (no training).
TrainedModel initialize_model(const ExperimentConfig& cfg, const PreparedData& data);

struct RunResult {
  std::string label;
  nlohmann::json config;
  std::vector<double> epoch_loss;
  std::vector<MetricReport> reports;  // train split, then test split
  std::uint64_t dataset_digest = 0;
  std::size_t trainable_parameters = 0;
  std::uint64_t backbone_checksum = 0;
  double wall_seconds = 0.0;

  // Deterministic fields only unless with_timing is set.
  nlohmann::json to_json(bool with_timing = false) const;
  static RunResult from_json(const nlohmann::json& j);
  const MetricReport& report(const std::string& split) const;
};

// Trains `model` in place on data's training split, then evaluates both
// splits. Throws on a non-finite loss (naming epoch and step) and if the
// frozen backbone changed.
RunResult train(TrainedModel& model, const PreparedData& data);

// Evaluation mode (no dropout). The split name only labels the report.
MetricReport evaluate(const TrainedModel& model, const PreparedData& data, bool test_split);
MetricReport evaluate_localization(const TrainedModel& model,
                                   const std::vector<LocalizationSample>& samples,
                                   const std::string& split, std::uint64_t seed);
MetricReport evaluate_forecasting(const TrainedModel& model,
                                  const std::vector<ForecastSample>& samples,
                                  const std::string& split);
MetricReport evaluate_estimation(const TrainedModel& model,
                                 const std::vector<EstimationSample>& samples,
                                 const std::string& split);

// Convenience: prepare, initialize, train.
RunResult run_experiment(const ExperimentConfig& cfg, TrainedModel* keep = nullptr);

inline const std::vector<std::pair<std::string, Ablation>>& ablation_grid() {
  static const std::vector<std::pair<std::string, Ablation>> grid = {
      {"Normal", {}},
      {"w/o LFL", {true, false, false, false}},
      {"w/o TSE", {false, true, false, false}},
      {"w/o LoRA", {false, false, true, false}},
      {"w/o KG", {false, false, false, true}},
  };
  return grid;
}

// One run per grid entry on one shared dataset.
std::vector<RunResult> ablate(const ExperimentConfig& base);

// Writes <dir>/ablation.csv, <dir>/ablation.txt, <dir>/runs/<n>.json and
// <dir>/timing.json (the only file with wall-clock values).
void write_ablation(const std::string& dir, const std::vector<RunResult>& runs);
void write_run(const std::string& dir, const RunResult& run);

// Binary checkpoint: magic, JSON header (config, shapes, scalers), raw
// little-endian doubles in header order. Round trip is bit-exact.
void save_checkpoint(const TrainedModel& model, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);

}  // namespace lightllm
