#include "lightllm/harness.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "lightllm/errors.hpp"
#include "lightllm/prompt.hpp"
#include "lightllm/runtime.hpp"

namespace lightllm {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument(what); }

class Digest {
 public:
  void add(const void* data, std::size_t size) { h_ = fnv1a(data, size, h_); }
  void add(std::string_view s) {
    add(s.data(), s.size());
    add(&kSep, 1);
  }
  void add(double v) { add(&v, sizeof v); }
  void add(std::span<const double> v) {
    for (double x : v) add(x);
  }
  void add(std::uint64_t v) { add(&v, sizeof v); }
  std::uint64_t value() const { return h_; }

 private:
  static constexpr char kSep = '\x1f';
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

template <class T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) fail("config: " + where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) fail("config: unknown key '" + key + "' in " + where);
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// --- config ------------------------------------------------------------------

void ExperimentConfig::validate() const {
  model.validate();
  if (model.task != task) fail("config: model task does not match experiment task");
  if (batch_size == 0) fail("config: batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    fail("config: learning_rate must be positive");
  if (!(noise >= 0.0)) fail("config: noise must be non-negative");
  if (task == Task::forecasting) {
    if (pv_days == 0 || history == 0 || horizon == 0 || stride == 0)
      fail("config: pv_days, history, horizon and stride must be positive");
    if (!(time_split > 0.0 && time_split < 1.0)) fail("config: time_split must lie in (0, 1)");
    if (!(pv.peak_kw > 0.0)) fail("config: pv.peak_kw must be positive");
  } else if (samples < 2) {
    fail("config: at least two samples are needed");
  }
}

json config_to_json(const ExperimentConfig& c) {
  const ModelConfig& m = c.model;
  return json{
      {"task", task_name(c.task)},
      {"scene", c.scene},
      {"seed", c.seed},
      {"split", split_mode_name(c.split)},
      {"samples", c.samples},
      {"noise", c.noise},
      {"pv_days", c.pv_days},
      {"history", c.history},
      {"horizon", c.horizon},
      {"stride", c.stride},
      {"time_split", c.time_split},
      {"pv",
       {{"peak_kw", c.pv.peak_kw},
        {"step_minutes", c.pv.step_minutes},
        {"sunrise_hour", c.pv.sunrise_hour},
        {"daylength_hours", c.pv.daylength_hours},
        {"cloud_mean", c.pv.cloud_mean},
        {"cloud_reversion", c.pv.cloud_reversion},
        {"cloud_volatility", c.pv.cloud_volatility}}},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"learning_rate", c.learning_rate},
      {"model",
       {{"d_model", m.d_model},
        {"heads", m.heads},
        {"layers", m.layers},
        {"ffn", m.ffn},
        {"encoder_layers", m.encoder_layers},
        {"lora_r", m.lora.r},
        {"lora_alpha", m.lora.alpha},
        {"lora_dropout", m.lora.dropout},
        {"fusion_dropout", m.fusion_dropout},
        {"prompt_length", m.prompt_length},
        {"vocab", m.vocab},
        {"disable_lfl", m.ablation.disable_lfl},
        {"disable_tse", m.ablation.disable_tse},
        {"disable_lora", m.ablation.disable_lora},
        {"disable_kg", m.ablation.disable_kg}}},
  };
}

ExperimentConfig config_from_json(const json& j) {
  reject_unknown(j,
                 {"task", "scene", "seed", "split", "samples", "noise", "pv_days", "history",
                  "horizon", "stride", "time_split", "pv", "epochs", "batch_size",
                  "learning_rate", "model"},
                 "config");
  ExperimentConfig c;
  if (j.contains("task")) c.task = task_from_name(j.at("task").get<std::string>());
  read_if(j, "scene", c.scene);
  read_if(j, "seed", c.seed);
  if (j.contains("split")) c.split = split_mode_from_name(j.at("split").get<std::string>());
  read_if(j, "samples", c.samples);
  read_if(j, "noise", c.noise);
  read_if(j, "pv_days", c.pv_days);
  read_if(j, "history", c.history);
  read_if(j, "horizon", c.horizon);
  read_if(j, "stride", c.stride);
  read_if(j, "time_split", c.time_split);
  if (j.contains("pv")) {
    const json& p = j.at("pv");
    reject_unknown(p,
                   {"peak_kw", "step_minutes", "sunrise_hour", "daylength_hours", "cloud_mean",
                    "cloud_reversion", "cloud_volatility"},
                   "pv");
    read_if(p, "peak_kw", c.pv.peak_kw);
    read_if(p, "step_minutes", c.pv.step_minutes);
    read_if(p, "sunrise_hour", c.pv.sunrise_hour);
    read_if(p, "daylength_hours", c.pv.daylength_hours);
    read_if(p, "cloud_mean", c.pv.cloud_mean);
    read_if(p, "cloud_reversion", c.pv.cloud_reversion);
    read_if(p, "cloud_volatility", c.pv.cloud_volatility);
  }
  read_if(j, "epochs", c.epochs);
  read_if(j, "batch_size", c.batch_size);
  read_if(j, "learning_rate", c.learning_rate);
  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown(m,
                   {"d_model", "heads", "layers", "ffn", "encoder_layers", "lora_r", "lora_alpha",
                    "lora_dropout", "fusion_dropout", "prompt_length", "vocab", "disable_lfl",
                    "disable_tse", "disable_lora", "disable_kg"},
                   "model");
    read_if(m, "d_model", c.model.d_model);
    read_if(m, "heads", c.model.heads);
    read_if(m, "layers", c.model.layers);
    read_if(m, "ffn", c.model.ffn);
    read_if(m, "encoder_layers", c.model.encoder_layers);
    read_if(m, "lora_r", c.model.lora.r);
    read_if(m, "lora_alpha", c.model.lora.alpha);
    read_if(m, "lora_dropout", c.model.lora.dropout);
    read_if(m, "fusion_dropout", c.model.fusion_dropout);
    read_if(m, "prompt_length", c.model.prompt_length);
    read_if(m, "vocab", c.model.vocab);
    read_if(m, "disable_lfl", c.model.ablation.disable_lfl);
    read_if(m, "disable_tse", c.model.ablation.disable_tse);
    read_if(m, "disable_lora", c.model.ablation.disable_lora);
    read_if(m, "disable_kg", c.model.ablation.disable_kg);
  }
  c.model.task = c.task;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

SceneSpec resolve_scene(const std::string& name_or_path) {
  if (std::filesystem::exists(name_or_path)) return load_scene(name_or_path);
  return scene_by_name(name_or_path);
}

// --- data --------------------------------------------------------------------

std::size_t PreparedData::train_size() const {
  switch (task) {
    case Task::localization: return localization.train.size();
    case Task::forecasting: return forecasting.train.size();
    case Task::estimation: return estimation.train.size();
  }
  return 0;
}

std::size_t PreparedData::test_size() const {
  switch (task) {
    case Task::localization: return localization.test.size();
    case Task::forecasting: return forecasting.test.size();
    case Task::estimation: return estimation.test.size();
  }
  return 0;
}

std::string task_prompt(const ExperimentConfig& cfg, const PreparedData& data) {
  Bindings b;
  const SceneSpec& s = data.scene;
  switch (cfg.task) {
    case Task::localization: {
      b["sensor_count"] = std::to_string(s.sensors.size());
      b["room_width"] = format_number(s.room_max.x - s.room_min.x);
      b["room_depth"] = format_number(s.room_max.y - s.room_min.y);
      b["light_count"] = std::to_string(s.lights.size());
      b["class_count"] = std::to_string(data.catalog.entries.size());
      double z = 0.0;
      for (const auto& sn : s.sensors) z += sn.position.z;
      z /= static_cast<double>(s.sensors.size());
      b["sensor_layout"] = "spread over the floor plan at about " + format_number(std::round(z * 10) / 10) +
                           " m height, facing the ceiling";
      break;
    }
    case Task::forecasting: {
      double lo = 0.0, hi = 0.0;
      for (const auto& w : data.forecasting.train)
        for (double v : w.target_kw) hi = std::max(hi, v);
      b["peak_kw"] = format_number(cfg.pv.peak_kw);
      b["step_minutes"] = std::to_string(cfg.pv.step_minutes);
      b["latitude"] = "unknown";
      b["longitude"] = "unknown";
      b["T"] = std::to_string(cfg.horizon);
      b["P"] = std::to_string(cfg.history);
      b["min_value"] = format_number(lo);
      b["max_value"] = format_number(std::round(hi * 100) / 100);
      break;
    }
    case Task::estimation: {
      const auto& wl = channel_wavelengths();
      b["channel_min"] = format_number(wl.front());
      b["channel_max"] = format_number(std::round(wl.back()));
      b["cell_count"] = std::to_string(data.cells.size());
      std::string names;
      for (std::size_t i = 0; i < data.cells.size(); ++i)
        names += (i ? (i + 1 == data.cells.size() ? " and " : ", ") : "") + data.cells[i];
      b["cell_names"] = names;
      break;
    }
  }
  const std::string text = render_prompt(builtin_template(task_name(cfg.task)), b);
  check_sections(text);
  return text;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  cfg.validate();
  PreparedData d;
  d.task = cfg.task;
  d.split = cfg.split;
  GenerationConfig gen;
  gen.noise = cfg.noise;
  const SeededRng data_rng(cfg.seed, streams::kData);
  const SeededRng test_rng(cfg.seed, streams::kTestData);
  Digest dg;
  dg.add(task_name(cfg.task));

  switch (cfg.task) {
    case Task::localization: {
      d.scene = resolve_scene(cfg.scene);
      d.catalog = catalog_for(d.scene);
      d.graph = build_knowledge_graph(d.scene);
      std::vector<std::vector<LocalizationSample>> envs;
      envs.push_back(generate_localization_dataset(d.scene, d.catalog, cfg.samples, 0, data_rng, gen));
      if (cfg.split == SplitMode::unseen)
        envs.push_back(generate_localization_dataset(unseen_variant(d.scene), d.catalog,
                                                     cfg.samples, 1, test_rng, gen));
      d.localization = make_splits(envs, cfg.split, SeededRng(cfg.seed, streams::kSplit));
      for (const auto* part : {&d.localization.train, &d.localization.test})
        for (const auto& s : *part) {
          dg.add(s.id);
          dg.add(std::uint64_t{s.class_id});
          dg.add(s.x);
          dg.add(s.y);
          dg.add(s.deltas);
        }
      break;
    }
    case Task::forecasting: {
      d.scene.name = "pv";
      SeededRng rng = data_rng;
      const PvSeries series = generate_pv_series(cfg.pv_days, cfg.pv, rng);
      const auto windows = forecast_windows(series, cfg.history, cfg.horizon, cfg.stride);
      if (cfg.split == SplitMode::unseen)
        d.forecasting = split_by_time(windows, cfg.time_split);
      else
        d.forecasting = make_splits<ForecastSample>({windows}, cfg.split,
                                                    SeededRng(cfg.seed, streams::kSplit));
      for (const auto* part : {&d.forecasting.train, &d.forecasting.test})
        for (const auto& s : *part) {
          dg.add(s.id);
          dg.add(s.history_kw);
          dg.add(s.clear_sky_kw);
          dg.add(s.target_kw);
        }
      break;
    }
    case Task::estimation: {
      d.scene = estimation_scene(false);
      for (const auto& c : d.scene.cells) d.cells.push_back(c.id);
      std::vector<std::vector<EstimationSample>> envs;
      envs.push_back(generate_estimation_dataset(d.scene, cfg.samples, 0, data_rng, gen));
      if (cfg.split == SplitMode::unseen)
        envs.push_back(generate_estimation_dataset(estimation_scene(true), cfg.samples, 1, test_rng, gen));
      d.estimation = make_splits(envs, cfg.split, SeededRng(cfg.seed, streams::kSplit));
      for (const auto* part : {&d.estimation.train, &d.estimation.test})
        for (const auto& s : *part) {
          dg.add(s.id);
          dg.add(s.reading);
          dg.add(s.current);
        }
      break;
    }
  }
  dg.add(std::uint64_t{d.train_size()});
  dg.add(std::uint64_t{d.test_size()});
  d.digest = dg.value();
  d.prompt = task_prompt(cfg, d);
  return d;
}

// --- featurization -----------------------------------------------------------

namespace {

// Raw (unscaled) input rows of one sample.
// Localization: each channel is divided by its RMS over the sensors of the
// sample, so a relit room (other spectra, other intensities) keeps the
// shadow pattern and loses the per-channel gain.
void raw_rows(const LocalizationSample& s, std::vector<double>& out) {
  const std::size_t base = out.size(), sensors = s.deltas.size() / kChannels;
  out.insert(out.end(), s.deltas.begin(), s.deltas.end());
  for (std::size_t c = 0; c < kChannels; ++c) {
    double ss = 0.0;
    for (std::size_t k = 0; k < sensors; ++k) ss += s.deltas[k * kChannels + c] * s.deltas[k * kChannels + c];
    const double rms = std::sqrt(ss / static_cast<double>(sensors));
    if (!(rms > 1e-12)) continue;
    for (std::size_t k = 0; k < sensors; ++k) out[base + k * kChannels + c] /= rms;
  }
}

void raw_rows(const ForecastSample& s, double peak, std::vector<double>& out) {
  const std::size_t p = s.history_kw.size();
  for (std::size_t t = 0; t < s.clear_sky_kw.size(); ++t) {
    out.push_back(t < p ? s.history_kw[t] / peak : 0.0);
    out.push_back(s.clear_sky_kw[t] / peak);
    out.push_back(t < p ? 0.0 : 1.0);
  }
}

void raw_rows(const EstimationSample& s, std::vector<double>& out) {
  out.insert(out.end(), s.reading.begin(), s.reading.end());
}

void fit_scaler(const std::vector<double>& rows, std::size_t cols, std::vector<double>& mean,
                std::vector<double>& scale) {
  const std::size_t n = rows.size() / cols;
  mean.assign(cols, 0.0);
  scale.assign(cols, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < cols; ++c) mean[c] += rows[r * cols + c];
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double dv = rows[r * cols + c] - mean[c];
      scale[c] += dv * dv;
    }
  for (double& s : scale) {
    s = std::sqrt(s / static_cast<double>(n));
    if (!(s > 1e-12)) s = 1.0;
  }
}

Tensor scaled_input(const TrainedModel& m, std::vector<double> rows, std::size_t batch) {
  const std::size_t cols = m.shape.input_columns();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t c = i % cols;
    rows[i] = (rows[i] - m.feature_mean[c]) / m.feature_scale[c];
  }
  return Tensor({batch * m.shape.input_rows(), cols}, std::move(rows));
}

template <class Sample>
Tensor batch_input(const TrainedModel& m, const std::vector<Sample>& samples,
                   std::span<const std::size_t> idx) {
  std::vector<double> rows;
  for (std::size_t i : idx) {
    if constexpr (std::is_same_v<Sample, ForecastSample>)
      raw_rows(samples[i], m.config.pv.peak_kw, rows);
    else
      raw_rows(samples[i], rows);
  }
  return scaled_input(m, std::move(rows), idx.size());
}

std::size_t class_index(const LocationCatalog& catalog, std::size_t id) {
  for (std::size_t i = 0; i < catalog.entries.size(); ++i)
    if (catalog.entries[i].id == id) return i;
  fail("unknown class id " + std::to_string(id));
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

constexpr std::size_t kEvalBatch = 64;

}  // namespace

TrainedModel initialize_model(const ExperimentConfig& cfg, const PreparedData& data) {
  cfg.validate();
  if (cfg.task != data.task) fail("initialize_model: data prepared for another task");
  if (data.train_size() == 0) fail("initialize_model: empty training split");
  TrainedModel m;
  m.config = cfg;
  m.catalog = data.catalog;
  m.cells = data.cells;
  m.shape.prompt = data.prompt;
  std::vector<double> rows;
  switch (cfg.task) {
    case Task::localization:
      m.shape.graph = data.graph;
      m.shape.classes = data.catalog.entries.size();
      for (const auto& s : data.localization.train) raw_rows(s, rows);
      break;
    case Task::forecasting:
      m.shape.history = cfg.history;
      m.shape.horizon = cfg.horizon;
      break;
    case Task::estimation: {
      m.shape.outputs = data.cells.size();
      for (const auto& s : data.estimation.train) raw_rows(s, rows);
      m.target_scale.assign(m.shape.outputs, 0.0);
      for (const auto& s : data.estimation.train)
        for (std::size_t c = 0; c < m.shape.outputs; ++c) m.target_scale[c] += s.current[c];
      for (double& t : m.target_scale) {
        t /= static_cast<double>(data.estimation.train.size());
        if (!(t > 0.0)) t = 1.0;
      }
      break;
    }
  }
  const std::size_t cols = m.shape.input_columns();
  if (cfg.task == Task::forecasting) {
    m.feature_mean.assign(cols, 0.0);
    m.feature_scale.assign(cols, 1.0);
  } else {
    fit_scaler(rows, cols, m.feature_mean, m.feature_scale);
  }
  m.model = std::make_unique<LightLlm>(cfg.model, m.shape, cfg.seed);
  return m;
}

// --- evaluation --------------------------------------------------------------

MetricReport evaluate_localization(const TrainedModel& m,
                                   const std::vector<LocalizationSample>& samples,
                                   const std::string& split, std::uint64_t seed) {
  if (samples.empty()) fail("evaluate: no samples");
  NoGradGuard no_grad;
  std::vector<Point2> pred, truth, guess;
  std::size_t correct = 0;
  SeededRng guesser(seed, streams::kBaseline);
  const auto all = iota_indices(samples.size());
  for (std::size_t b0 = 0; b0 < samples.size(); b0 += kEvalBatch) {
    const std::span<const std::size_t> idx(all.data() + b0, std::min(kEvalBatch, samples.size() - b0));
    const Tensor logits = m.model->forward(batch_input(m, samples, idx), idx.size(), false, nullptr);
    const std::size_t k = logits.dim(1);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto& s = samples[idx[r]];
      const LocationPrediction p = classify_location(logits.values().subspan(r * k, k), m.catalog);
      pred.emplace_back(p.x, p.y);
      truth.emplace_back(s.x, s.y);
      if (p.class_id == s.class_id) ++correct;
      const auto& g = m.catalog.entries[guesser.below(m.catalog.entries.size())];
      guess.emplace_back(g.x, g.y);
    }
  }
  const double ps[] = {25, 50, 75, 90};
  const auto q = localization_percentiles(pred, truth, ps);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    total += std::hypot(pred[i].first - truth[i].first, pred[i].second - truth[i].second);
  const double median[] = {50};
  MetricReport r{"localization", split, {}, samples.size()};
  r.values["p25_m"] = q[0];
  r.values["median_m"] = q[1];
  r.values["p75_m"] = q[2];
  r.values["p90_m"] = q[3];
  r.values["mean_m"] = total / static_cast<double>(pred.size());
  r.values["accuracy"] = static_cast<double>(correct) / static_cast<double>(samples.size());
  r.values["random_median_m"] = localization_percentiles(guess, truth, median)[0];
  r.validate();
  return r;
}

MetricReport evaluate_forecasting(const TrainedModel& m, const std::vector<ForecastSample>& samples,
                                  const std::string& split) {
  if (samples.empty()) fail("evaluate: no samples");
  NoGradGuard no_grad;
  const auto& levels = m.shape.levels;
  const std::size_t T = m.shape.horizon, L = levels.size();
  const double a = levels.front() + (1.0 - levels.back());
  double crps = 0.0, persist = 0.0, wink = 0.0;
  std::size_t covered = 0, count = 0;
  const auto all = iota_indices(samples.size());
  for (std::size_t b0 = 0; b0 < samples.size(); b0 += kEvalBatch) {
    const std::span<const std::size_t> idx(all.data() + b0, std::min(kEvalBatch, samples.size() - b0));
    const Tensor out = m.model->forward(batch_input(m, samples, idx), idx.size(), false, nullptr);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto& s = samples[idx[r]];
      if (s.target_kw.size() != T) fail("evaluate: sample horizon does not match the model");
      const ForecastDistribution dist =
          to_distribution(out.values().subspan(r * T * L, T * L), T, levels, m.config.pv.peak_kw);
      const auto base = smart_persistence_forecast(s.history_kw, s.clear_sky_kw, T);
      for (std::size_t t = 0; t < T; ++t) {
        const double y = s.target_kw[t];
        crps += crps_from_quantiles(levels, dist.values[t], y);
        persist += std::abs(base[t] - y);
        const double lo = dist.values[t].front(), hi = dist.values[t].back();
        wink += winkler_score(lo, hi, y, a);
        if (y >= lo && y <= hi) ++covered;
        ++count;
      }
    }
  }
  const double n = static_cast<double>(count);
  MetricReport r{"forecasting", split, {}, samples.size()};
  r.values["crps_kw"] = crps / n;
  r.values["persistence_crps_kw"] = persist / n;
  if (persist > 0.0) r.values["forecast_skill_pct"] = forecast_skill(crps / n, persist / n);
  r.values["winkler_kw"] = wink / n;
  r.values["coverage"] = static_cast<double>(covered) / n;
  r.validate();
  return r;
}

MetricReport evaluate_estimation(const TrainedModel& m, const std::vector<EstimationSample>& samples,
                                 const std::string& split) {
  if (samples.empty()) fail("evaluate: no samples");
  NoGradGuard no_grad;
  const std::size_t C = m.shape.outputs;
  std::vector<std::vector<double>> actual(C), predicted(C);
  const auto all = iota_indices(samples.size());
  for (std::size_t b0 = 0; b0 < samples.size(); b0 += kEvalBatch) {
    const std::span<const std::size_t> idx(all.data() + b0, std::min(kEvalBatch, samples.size() - b0));
    const Tensor out = m.model->forward(batch_input(m, samples, idx), idx.size(), false, nullptr);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto& s = samples[idx[r]];
      if (s.current.size() != C) fail("evaluate: sample cell count does not match the model");
      for (std::size_t c = 0; c < C; ++c) {
        actual[c].push_back(s.current[c]);
        predicted[c].push_back(out.at(r, c) * m.target_scale[c]);
      }
    }
  }
  MetricReport r{"estimation", split, {}, samples.size()};
  double mean_mape = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    const std::string& name = c < m.cells.size() ? m.cells[c] : "cell" + std::to_string(c);
    const double e = mape(actual[c], predicted[c]);
    r.values["mape_" + name] = e;
    r.values["mse_" + name] = mse(actual[c], predicted[c]);
    mean_mape += e / static_cast<double>(C);
  }
  r.values["mape_mean"] = mean_mape;
  r.validate();
  return r;
}

MetricReport evaluate(const TrainedModel& m, const PreparedData& data, bool test_split) {
  const std::string split = test_split ? split_mode_name(data.split) : "train";
  if (test_split) {
    // The test split must never have been trained on.
    check_disjoint(data.localization.train, data.localization.test);
    check_disjoint(data.forecasting.train, data.forecasting.test);
    check_disjoint(data.estimation.train, data.estimation.test);
  }
  switch (data.task) {
    case Task::localization:
      return evaluate_localization(m, test_split ? data.localization.test : data.localization.train,
                                   split, m.config.seed);
    case Task::forecasting:
      return evaluate_forecasting(m, test_split ? data.forecasting.test : data.forecasting.train, split);
    case Task::estimation:
      return evaluate_estimation(m, test_split ? data.estimation.test : data.estimation.train, split);
  }
  fail("evaluate: unknown task");
}

// --- training ----------------------------------------------------------------

namespace {

Tensor batch_loss(const TrainedModel& m, const PreparedData& data,
                  std::span<const std::size_t> idx, SeededRng& dropout_rng) {
  const LightLlm& model = *m.model;
  switch (data.task) {
    case Task::localization: {
      const auto& s = data.localization.train;
      std::vector<std::size_t> labels;
      for (std::size_t i : idx) labels.push_back(class_index(m.catalog, s[i].class_id));
      return cross_entropy(model.forward(batch_input(m, s, idx), idx.size(), true, &dropout_rng),
                           labels);
    }
    case Task::forecasting: {
      const auto& s = data.forecasting.train;
      std::vector<double> target;
      for (std::size_t i : idx)
        for (double v : s[i].target_kw) target.push_back(v / m.config.pv.peak_kw);
      return pinball_loss(model.forward(batch_input(m, s, idx), idx.size(), true, &dropout_rng),
                          target, m.shape.levels);
    }
    case Task::estimation: {
      const auto& s = data.estimation.train;
      std::vector<double> target;
      for (std::size_t i : idx)
        for (std::size_t c = 0; c < m.shape.outputs; ++c)
          target.push_back(s[i].current[c] / m.target_scale[c]);
      return mse_loss(model.forward(batch_input(m, s, idx), idx.size(), true, &dropout_rng), target);
    }
  }
  fail("train: unknown task");
}

}  // namespace

RunResult train(TrainedModel& m, const PreparedData& data) {
  tune_allocator();
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig& cfg = m.config;
  RunResult r;
  r.config = config_to_json(cfg);
  r.dataset_digest = data.digest;
  const ParamList params = m.model->trainable();
  r.trainable_parameters = count_values(params);
  if (params.empty()) fail("train: nothing to train");
  const std::uint64_t checksum = m.model->backbone().checksum();

  Adam opt(params, cfg.learning_rate);
  SeededRng dropout_rng(cfg.seed, streams::kDropout);
  const SeededRng shuffle_root(cfg.seed, streams::kShuffle);
  const std::size_t n = data.train_size();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = iota_indices(n);
    SeededRng shuffle = shuffle_root.derive(epoch);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    double total = 0.0;
    std::size_t step = 0;
    for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch_size, ++step) {
      const std::span<const std::size_t> idx(order.data() + b0, std::min(cfg.batch_size, n - b0));
      const Tensor loss = batch_loss(m, data, idx, dropout_rng);
      const double value = loss.item();
      if (!std::isfinite(value))
        fail("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
             std::to_string(step));
      loss.backward();
      opt.step();
      total += value * static_cast<double>(idx.size());
    }
    r.epoch_loss.push_back(total / static_cast<double>(n));
  }
  if (m.model->backbone().checksum() != checksum)
    throw ContractError("train: frozen backbone weights changed");
  r.backbone_checksum = checksum;
  r.reports.push_back(evaluate(m, data, false));
  r.reports.push_back(evaluate(m, data, true));
  r.wall_seconds = elapsed_since(t0);
  return r;
}

RunResult run_experiment(const ExperimentConfig& cfg, TrainedModel* keep) {
  const PreparedData data = prepare_data(cfg);
  TrainedModel m = initialize_model(cfg, data);
  RunResult r = train(m, data);
  if (keep) *keep = std::move(m);
  return r;
}

// --- results -----------------------------------------------------------------

json RunResult::to_json(bool with_timing) const {
  json reps = json::array();
  for (const auto& rep : reports)
    reps.push_back({{"task", rep.task}, {"split", rep.split}, {"n", rep.n}, {"values", rep.values}});
  json j{{"label", label},
         {"config", config},
         {"epoch_loss", epoch_loss},
         {"reports", reps},
         {"dataset_digest", dataset_digest},
         {"trainable_parameters", trainable_parameters},
         {"backbone_checksum", backbone_checksum}};
  if (with_timing) j["wall_seconds"] = wall_seconds;
  return j;
}

RunResult RunResult::from_json(const json& j) {
  RunResult r;
  r.label = j.at("label").get<std::string>();
  r.config = j.at("config");
  r.epoch_loss = j.at("epoch_loss").get<std::vector<double>>();
  for (const auto& rep : j.at("reports")) {
    MetricReport m{rep.at("task").get<std::string>(), rep.at("split").get<std::string>(),
                   rep.at("values").get<std::map<std::string, double>>(),
                   rep.at("n").get<std::size_t>()};
    m.validate();
    r.reports.push_back(std::move(m));
  }
  r.dataset_digest = j.at("dataset_digest").get<std::uint64_t>();
  r.trainable_parameters = j.at("trainable_parameters").get<std::size_t>();
  r.backbone_checksum = j.at("backbone_checksum").get<std::uint64_t>();
  if (j.contains("wall_seconds")) r.wall_seconds = j.at("wall_seconds").get<double>();
  return r;
}

const MetricReport& RunResult::report(const std::string& split) const {
  for (const auto& rep : reports)
    if (rep.split == split) return rep;
  fail("run '" + label + "' has no report for split '" + split + "'");
}

std::vector<RunResult> ablate(const ExperimentConfig& base) {
  base.validate();
  const PreparedData data = prepare_data(base);
  std::vector<RunResult> runs;
  for (const auto& [label, flags] : ablation_grid()) {
    ExperimentConfig cfg = base;
    cfg.model.ablation = flags;
    TrainedModel m = initialize_model(cfg, data);
    RunResult r = train(m, data);
    r.label = label;
    runs.push_back(std::move(r));
  }
  for (const auto& r : runs)
    if (r.dataset_digest != runs.front().dataset_digest)
      throw ContractError("ablate: runs consumed different datasets");
  return runs;
}

namespace {

std::string slug(const std::string& label) {
  std::string out;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (!out.empty() && out.back() != '-')
      out += '-';
  }
  return out;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) fail("cannot write '" + p.string() + "'");
  out << text;
}

}  // namespace

void write_run(const std::string& dir, const RunResult& run) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  write_text(d / "run.json", run.to_json().dump(2) + "\n");
  std::ostringstream csv;
  write_report_csv(csv, run.reports);
  write_text(d / "report.csv", csv.str());
  write_text(d / "timing.json", json{{"wall_seconds", run.wall_seconds}}.dump(2) + "\n");
}

void write_ablation(const std::string& dir, const std::vector<RunResult>& runs) {
  const std::filesystem::path d(dir);
  std::filesystem::create_directories(d / "runs");
  std::vector<std::pair<std::string, MetricReport>> rows;
  json timing = json::object();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const RunResult& r = runs[i];
    const std::string split = r.config.at("split").get<std::string>();
    rows.emplace_back(r.label, r.report(split));
    write_text(d / "runs" / (std::to_string(i) + "-" + slug(r.label) + ".json"), r.to_json().dump(2) + "\n");
    timing[r.label] = r.wall_seconds;
  }
  std::ostringstream csv, table;
  write_labeled_csv(csv, rows);
  write_report_table(table, rows);
  write_text(d / "ablation.csv", csv.str());
  write_text(d / "ablation.txt", table.str());
  write_text(d / "timing.json", timing.dump(2) + "\n");
}

// --- checkpoints -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'L', 'L', 'M', 'C', 'K', 'P', 'T', '1'};

json catalog_json(const LocationCatalog& c) {
  json a = json::array();
  for (const auto& e : c.entries) a.push_back(json::array({e.id, e.x, e.y}));
  return a;
}

}  // namespace

void save_checkpoint(const TrainedModel& m, const std::string& path) {
  static_assert(std::endian::native == std::endian::little, "checkpoints assume little-endian");
  if (!m.model) fail("save_checkpoint: no model");
  const ParamList params = m.model->all();
  json tensors = json::array();
  for (const auto& p : params) tensors.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  json header{{"config", config_to_json(m.config)},
              {"classes", m.shape.classes},
              {"history", m.shape.history},
              {"horizon", m.shape.horizon},
              {"levels", m.shape.levels},
              {"outputs", m.shape.outputs},
              {"prompt", m.shape.prompt},
              {"catalog", catalog_json(m.catalog)},
              {"cells", m.cells},
              {"feature_mean", m.feature_mean},
              {"feature_scale", m.feature_scale},
              {"target_scale", m.target_scale},
              {"tensors", tensors}};
  if (m.shape.graph) {
    const auto& g = *m.shape.graph;
    json edges = json::array();
    for (const auto& e : g.edges) edges.push_back({{"a", e.a}, {"b", e.b}, {"kind", edge_kind_name(e.kind)}});
    json sensors = json::array(), lights = json::array();
    for (const auto& s : g.sensors)
      sensors.push_back({{"id", s.id},
                         {"position", {s.position.x, s.position.y, s.position.z}},
                         {"orientation", {s.orientation.x, s.orientation.y, s.orientation.z}},
                         {"fov_angle", s.fov_angle},
                         {"range", s.range}});
    for (const auto& l : g.lights)
      lights.push_back({{"id", l.id}, {"position", {l.position.x, l.position.y, l.position.z}}, {"spectrum", l.spectrum}});
    header["graph"] = {{"sensors", sensors}, {"lights", lights}, {"edges", edges}};
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params) {
    const auto v = p.tensor.values();
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) fail("failed writing checkpoint '" + path + "'");
}

TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open checkpoint '" + path + "'");
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + sizeof magic, kMagic))
    fail("'" + path + "' is not a lightllm checkpoint");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (std::uint64_t{1} << 32)) fail("checkpoint '" + path + "': bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) fail("checkpoint '" + path + "': truncated header");
  const json h = json::parse(text);

  TrainedModel m;
  m.config = config_from_json(h.at("config"));
  m.shape.classes = h.at("classes").get<std::size_t>();
  m.shape.history = h.at("history").get<std::size_t>();
  m.shape.horizon = h.at("horizon").get<std::size_t>();
  m.shape.levels = h.at("levels").get<std::vector<double>>();
  m.shape.outputs = h.at("outputs").get<std::size_t>();
  m.shape.prompt = h.at("prompt").get<std::string>();
  for (const auto& e : h.at("catalog"))
    m.catalog.entries.push_back({e.at(0).get<std::size_t>(), e.at(1).get<double>(), e.at(2).get<double>()});
  m.cells = h.at("cells").get<std::vector<std::string>>();
  m.feature_mean = h.at("feature_mean").get<std::vector<double>>();
  m.feature_scale = h.at("feature_scale").get<std::vector<double>>();
  m.target_scale = h.at("target_scale").get<std::vector<double>>();
  if (h.contains("graph")) {
    const json& g = h.at("graph");
    KnowledgeGraph kg;
    for (const auto& s : g.at("sensors")) {
      SensorNode n;
      n.id = s.at("id").get<std::string>();
      const auto p = s.at("position").get<std::array<double, 3>>();
      const auto o = s.at("orientation").get<std::array<double, 3>>();
      n.position = {p[0], p[1], p[2]};
      n.orientation = {o[0], o[1], o[2]};
      n.fov_angle = s.at("fov_angle").get<double>();
      n.range = s.at("range").get<double>();
      kg.sensors.push_back(n);
    }
    for (const auto& l : g.at("lights")) {
      LightNode n;
      n.id = l.at("id").get<std::string>();
      const auto p = l.at("position").get<std::array<double, 3>>();
      n.position = {p[0], p[1], p[2]};
      n.spectrum = l.at("spectrum").get<std::array<double, kChannels>>();
      kg.lights.push_back(n);
    }
    for (const auto& e : g.at("edges"))
      kg.edges.push_back({e.at("a").get<std::string>(), e.at("b").get<std::string>(),
                          edge_kind_from_name(e.at("kind").get<std::string>())});
    m.shape.graph = std::move(kg);
  }
  m.model = std::make_unique<LightLlm>(m.config.model, m.shape, m.config.seed);

  ParamList params = m.model->all();
  const json& tensors = h.at("tensors");
  if (tensors.size() != params.size())
    fail("checkpoint '" + path + "': tensor count does not match the configured model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (tensors[i].at("name").get<std::string>() != params[i].name ||
        tensors[i].at("shape").get<Shape>() != params[i].tensor.shape())
      fail("checkpoint '" + path + "': tensor '" + params[i].name + "' does not match");
    auto v = params[i].tensor.mutable_values();
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) fail("checkpoint '" + path + "': truncated tensor data");
  }
  if (in.peek() != std::char_traits<char>::eof()) fail("checkpoint '" + path + "': trailing data");
  return m;
}

}  // namespace lightllm
