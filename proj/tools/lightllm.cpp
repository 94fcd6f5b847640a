// lightllm command-line front end.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lightllm/harness.hpp"
#include "lightllm/runtime.hpp"

using namespace lightllm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Command-line overrides for config keys. Only options actually given are
// applied on top of the config file.
struct Overrides {
  std::optional<std::string> task, scene, split;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples, epochs, batch_size, pv_days, history, horizon, stride;
  std::optional<double> learning_rate, noise;
  std::optional<std::size_t> d_model, heads, layers, ffn, encoder_layers, lora_r, prompt_length,
      vocab;
  std::optional<double> lora_alpha, lora_dropout, fusion_dropout;
  std::optional<bool> disable_lfl, disable_tse, disable_lora, disable_kg;

  void attach(CLI::App* app) {
    app->add_option("--task", task, "localization | forecasting | estimation");
    app->add_option("--scene", scene, "fixture name or scene file");
    app->add_option("--split", split, "seen | unseen");
    app->add_option("--seed", seed);
    app->add_option("--samples", samples, "samples per environment");
    app->add_option("--epochs", epochs);
    app->add_option("--batch-size", batch_size);
    app->add_option("--lr", learning_rate, "learning rate");
    app->add_option("--noise", noise);
    app->add_option("--pv-days", pv_days);
    app->add_option("--history", history);
    app->add_option("--horizon", horizon);
    app->add_option("--stride", stride);
    app->add_option("--d-model", d_model);
    app->add_option("--heads", heads);
    app->add_option("--layers", layers);
    app->add_option("--ffn", ffn);
    app->add_option("--encoder-layers", encoder_layers);
    app->add_option("--lora-r", lora_r);
    app->add_option("--lora-alpha", lora_alpha);
    app->add_option("--lora-dropout", lora_dropout);
    app->add_option("--fusion-dropout", fusion_dropout);
    app->add_option("--prompt-length", prompt_length);
    app->add_option("--vocab", vocab);
    app->add_option("--disable-lfl", disable_lfl);
    app->add_option("--disable-tse", disable_tse);
    app->add_option("--disable-lora", disable_lora);
    app->add_option("--disable-kg", disable_kg);
  }

  void apply(json& j) const {
    auto set = [&](const char* key, const auto& v) {
      if (v) j[key] = *v;
    };
    auto set_model = [&](const char* key, const auto& v) {
      if (v) j["model"][key] = *v;
    };
    set("task", task);
    set("scene", scene);
    set("split", split);
    set("seed", seed);
    set("samples", samples);
    set("epochs", epochs);
    set("batch_size", batch_size);
    set("learning_rate", learning_rate);
    set("noise", noise);
    set("pv_days", pv_days);
    set("history", history);
    set("horizon", horizon);
    set("stride", stride);
    set_model("d_model", d_model);
    set_model("heads", heads);
    set_model("layers", layers);
    set_model("ffn", ffn);
    set_model("encoder_layers", encoder_layers);
    set_model("lora_r", lora_r);
    set_model("lora_alpha", lora_alpha);
    set_model("lora_dropout", lora_dropout);
    set_model("fusion_dropout", fusion_dropout);
    set_model("prompt_length", prompt_length);
    set_model("vocab", vocab);
    set_model("disable_lfl", disable_lfl);
    set_model("disable_tse", disable_tse);
    set_model("disable_lora", disable_lora);
    set_model("disable_kg", disable_kg);
  }
};

ExperimentConfig make_config(const std::string& path, const Overrides& o) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config '" + path + "'");
    j = json::parse(in);
  }
  o.apply(j);
  return config_from_json(j);
}

std::ofstream open_out(const std::string& path) {
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write '" + path + "'");
  return out;
}

void print_reports(const std::vector<std::pair<std::string, MetricReport>>& rows,
                   const std::string& format) {
  if (format == "csv")
    write_labeled_csv(std::cout, rows);
  else if (format == "table")
    write_report_table(std::cout, rows);
  else
    throw std::invalid_argument("unknown format '" + format + "' (csv | table)");
}

// --- commands -----------------------------------------------------------------

int cmd_generate(const std::string& task_s, const std::string& scene_s, std::uint64_t seed,
                 const std::string& out_path, std::size_t samples, std::size_t env,
                 std::size_t days) {
  const Task task = task_from_name(task_s);
  if (env > 1) throw std::invalid_argument("generate: --env must be 0 or 1");
  const SeededRng rng(seed, env == 0 ? streams::kData : streams::kTestData);
  std::ofstream out = open_out(out_path);
  switch (task) {
    case Task::localization: {
      const SceneSpec base = resolve_scene(scene_s);
      const SceneSpec scene = env == 0 ? base : unseen_variant(base);
      const LocationCatalog catalog = catalog_for(base);
      write_localization_jsonl(out, scene, catalog,
                               generate_localization_dataset(scene, catalog, samples, env, rng));
      break;
    }
    case Task::estimation: {
      const SceneSpec scene = estimation_scene(env == 1);
      write_estimation_jsonl(out, scene, generate_estimation_dataset(scene, samples, env, rng));
      break;
    }
    case Task::forecasting: {
      SeededRng r = rng;
      write_pv_csv(out, generate_pv_series(days, PvParams{}, r));
      break;
    }
  }
  std::cerr << "wrote " << out_path << "\n";
  return 0;
}

int cmd_build_kg(const std::string& scene_s, const std::string& out_path) {
  const KnowledgeGraph g = build_knowledge_graph(resolve_scene(scene_s));
  std::ofstream out = open_out(out_path);
  write_edges_jsonl(g, out);
  std::cerr << "wrote " << g.edges.size() << " edges to " << out_path << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& out_dir) {
  TrainedModel model;
  RunResult r = run_experiment(cfg, &model);
  r.label = task_name(cfg.task);
  write_run(out_dir, r);
  save_checkpoint(model, (fs::path(out_dir) / "model.ckpt").string());
  std::vector<std::pair<std::string, MetricReport>> rows;
  for (const auto& rep : r.reports) rows.emplace_back(rep.split, rep);
  write_report_table(std::cout, rows);
  std::cerr << "final training loss "
            << (r.epoch_loss.empty() ? std::string("n/a") : format_number(r.epoch_loss.back()))
            << ", " << format_number(r.wall_seconds) << " s; wrote " << out_dir << "\n";
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data_path,
                 const std::string& format) {
  const TrainedModel m = load_checkpoint(model_path);
  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open data '" + data_path + "'");
  MetricReport rep;
  switch (m.config.task) {
    case Task::localization: {
      const LocalizationFile f = read_localization_jsonl(in);
      rep = evaluate_localization(m, f.samples, "file", m.config.seed);
      break;
    }
    case Task::estimation: {
      const EstimationFile f = read_estimation_jsonl(in);
      rep = evaluate_estimation(m, f.samples, "file");
      break;
    }
    case Task::forecasting: {
      const PvSeries series = read_pv_csv(in);
      rep = evaluate_forecasting(
          m, forecast_windows(series, m.config.history, m.config.horizon, m.config.stride), "file");
      break;
    }
  }
  print_reports({{fs::path(data_path).filename().string(), rep}}, format);
  return 0;
}

int cmd_ablate(const ExperimentConfig& cfg, const std::string& out_dir) {
  const auto runs = ablate(cfg);
  write_ablation(out_dir, runs);
  std::vector<std::pair<std::string, MetricReport>> rows;
  for (const auto& r : runs) rows.emplace_back(r.label, r.report(split_mode_name(cfg.split)));
  write_report_table(std::cout, rows);
  std::cerr << "wrote " << out_dir << "\n";
  return 0;
}

std::vector<fs::path> run_files(const std::string& p) {
  const fs::path path(p);
  if (fs::is_regular_file(path)) return {path};
  if (!fs::is_directory(path)) throw std::invalid_argument("no such run or directory '" + p + "'");
  std::vector<fs::path> out;
  if (fs::exists(path / "run.json")) out.push_back(path / "run.json");
  if (fs::is_directory(path / "runs"))
    for (const auto& e : fs::directory_iterator(path / "runs"))
      if (e.path().extension() == ".json") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw std::invalid_argument("no run files under '" + p + "'");
  return out;
}

int cmd_report(const std::vector<std::string>& paths, const std::string& format,
               const std::string& split) {
  std::vector<std::pair<std::string, MetricReport>> rows;
  for (const auto& p : paths)
    for (const auto& f : run_files(p)) {
      std::ifstream in(f);
      const RunResult r = RunResult::from_json(json::parse(in));
      const std::string s = split.empty() ? r.config.at("split").get<std::string>() : split;
      rows.emplace_back(r.label.empty() ? f.stem().string() : r.label, r.report(s));
    }
  print_reports(rows, format);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"lightllm: light-sensing models on a frozen backbone"};
  app.require_subcommand(1);

  std::string task = "localization", scene = "office", out, config, model, data,
              format = "table", split;
  std::uint64_t seed = 1;
  std::size_t samples = 2000, env = 0, days = 60;
  std::vector<std::string> runs;
  Overrides train_o, ablate_o;

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  gen->add_option("--task", task)->required();
  gen->add_option("--scene", scene, "fixture name or scene file");
  gen->add_option("--seed", seed);
  gen->add_option("--out", out)->required();
  gen->add_option("--samples", samples);
  gen->add_option("--env", env, "0 = training environment, 1 = unseen variant");
  gen->add_option("--days", days, "forecasting: days of PV output");

  auto* kg = app.add_subcommand("build-kg", "export the sensor knowledge graph");
  kg->add_option("--scene", scene)->required();
  kg->add_option("--out", out)->required();

  auto* tr = app.add_subcommand("train", "train one configuration");
  tr->add_option("--config", config, "JSON config file");
  tr->add_option("--out", out, "output directory")->default_val("runs/train");
  train_o.attach(tr);

  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset file");
  ev->add_option("--model", model)->required();
  ev->add_option("--data", data)->required();
  ev->add_option("--format", format, "csv | table");

  auto* ab = app.add_subcommand("ablate", "run the ablation grid");
  ab->add_option("--config", config, "JSON config file");
  ab->add_option("--out", out, "output directory")->default_val("runs/ablate");
  ablate_o.attach(ab);

  auto* rp = app.add_subcommand("report", "tabulate saved runs");
  rp->add_option("--runs", runs, "run.json files or run directories")->required();
  rp->add_option("--format", format, "csv | table");
  rp->add_option("--split", split, "report split (default: the run's test split)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (gen->parsed()) return cmd_generate(task, scene, seed, out, samples, env, days);
    if (kg->parsed()) return cmd_build_kg(scene, out);
    if (tr->parsed()) return cmd_train(make_config(config, train_o), out);
    if (ev->parsed()) return cmd_evaluate(model, data, format);
    if (ab->parsed()) return cmd_ablate(make_config(config, ablate_o), out);
    if (rp->parsed()) return cmd_report(runs, format, split);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
