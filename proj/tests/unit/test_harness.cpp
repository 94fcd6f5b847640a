#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "lightllm/harness.hpp"

using namespace lightllm;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny(Task task) {
  ExperimentConfig cfg;
  cfg.task = task;
  cfg.scene = task == Task::estimation ? "estimation" : "apartment";
  cfg.samples = 40;
  cfg.pv_days = 4;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.model.task = task;
  cfg.model.d_model = 16;
  cfg.model.heads = 2;
  cfg.model.layers = 1;
  cfg.model.ffn = 32;
  cfg.model.encoder_layers = 1;
  cfg.model.lora.r = 2;
  cfg.model.lora.alpha = 2.0;
  cfg.model.prompt_length = 8;
  cfg.model.vocab = 256;
  return cfg;
}

std::vector<double> flat_values(const LightLlm& m) {
  std::vector<double> out;
  for (const auto& p : m.all()) out.insert(out.end(), p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("lightllm-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("json round trip and unknown keys") {
    ExperimentConfig cfg = tiny(Task::forecasting);
    cfg.model.ablation.disable_kg = true;
    const auto j = config_to_json(cfg);
    CHECK(config_to_json(config_from_json(j)) == j);
    auto bad = j;
    bad["learning_rat"] = 0.1;
    CHECK_THROWS_AS(config_from_json(bad), std::invalid_argument);
    auto bad_model = j;
    bad_model["model"]["depth"] = 3;
    CHECK_THROWS_AS(config_from_json(bad_model), std::invalid_argument);
    CHECK(config_from_json(nlohmann::json::object()).epochs == 30);
  }

  TEST_CASE("validation") {
    ExperimentConfig cfg = tiny(Task::localization);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny(Task::localization);
    cfg.learning_rate = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK_THROWS_AS(resolve_scene("no-such-scene"), std::invalid_argument);
  }
}

TEST_SUITE("data") {
  TEST_CASE("prepared data is a function of the seed") {
    const auto cfg = tiny(Task::localization);
    const auto a = prepare_data(cfg), b = prepare_data(cfg);
    CHECK(a.digest == b.digest);
    CHECK(a.train_size() == 32);
    CHECK(a.test_size() == 8);
    auto other = cfg;
    other.seed = 2;
    CHECK(prepare_data(other).digest != a.digest);
    CHECK_NOTHROW(check_sections(a.prompt));
  }

  TEST_CASE("unseen localization tests on the second environment") {
    auto cfg = tiny(Task::localization);
    cfg.split = SplitMode::unseen;
    const auto d = prepare_data(cfg);
    CHECK(d.train_size() == 40);
    CHECK(d.test_size() == 40);
    for (const auto& s : d.localization.test) CHECK(s.env == 1);
  }
}

TEST_SUITE("training") {
  TEST_CASE("zero epochs leave the model untouched") {
    auto cfg = tiny(Task::localization);
    cfg.epochs = 0;
    const auto data = prepare_data(cfg);
    TrainedModel m = initialize_model(cfg, data);
    const auto before = flat_values(*m.model);
    const RunResult r = train(m, data);
    CHECK(flat_values(*m.model) == before);
    CHECK(r.epoch_loss.empty());
    CHECK(r.reports.size() == 2);
  }

  TEST_CASE("training keeps the backbone and is reproducible") {
    const auto cfg = tiny(Task::localization);
    TrainedModel kept;
    const RunResult a = run_experiment(cfg, &kept);
    const RunResult b = run_experiment(cfg);
    CHECK(a.to_json() == b.to_json());
    CHECK(a.backbone_checksum == kept.model->backbone().checksum());
    REQUIRE(a.epoch_loss.size() == 1);
    CHECK(std::isfinite(a.epoch_loss[0]));
    const auto data = prepare_data(cfg);
    const auto e1 = evaluate(kept, data, true), e2 = evaluate(kept, data, true);
    CHECK(e1.values == e2.values);
    CHECK(RunResult::from_json(a.to_json(true)).to_json() == a.to_json());
  }

  TEST_CASE("every task trains to finite metrics") {
    for (Task task : {Task::forecasting, Task::estimation}) {
      const RunResult r = run_experiment(tiny(task));
      const auto& rep = r.report(r.reports.back().split);
      REQUIRE_FALSE(rep.values.empty());
      for (const auto& [k, v] : rep.values) CHECK(std::isfinite(v));
    }
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("save and load are bit-exact") {
    auto cfg = tiny(Task::localization);
    TrainedModel m;
    run_experiment(cfg, &m);
    const fs::path dir = scratch("ckpt");
    save_checkpoint(m, (dir / "m.ckpt").string());
    const TrainedModel back = load_checkpoint((dir / "m.ckpt").string());
    CHECK(flat_values(*back.model) == flat_values(*m.model));
    CHECK(back.feature_mean == m.feature_mean);
    const auto data = prepare_data(cfg);
    CHECK(evaluate(back, data, true).values == evaluate(m, data, true).values);

    std::ofstream(dir / "m.ckpt", std::ios::app) << "x";
    CHECK_THROWS_AS(load_checkpoint((dir / "m.ckpt").string()), std::invalid_argument);
    std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint((dir / "junk.ckpt").string()), std::invalid_argument);
  }
}

TEST_SUITE("ablation") {
  TEST_CASE("grid shares data and differs in what trains") {
    auto cfg = tiny(Task::localization);
    const auto runs = ablate(cfg);
    REQUIRE(runs.size() == 5);
    CHECK(runs[0].label == "Normal");
    for (const auto& r : runs) {
      CHECK(r.dataset_digest == runs[0].dataset_digest);
      CHECK(r.backbone_checksum == runs[0].backbone_checksum);
    }
    CHECK(runs[3].label == "w/o LoRA");
    CHECK(runs[3].trainable_parameters < runs[0].trainable_parameters);

    const fs::path a = scratch("ablate-a");
    write_ablation(a.string(), runs);
    for (const char* f : {"ablation.csv", "ablation.txt", "timing.json"}) CHECK(fs::exists(a / f));
    std::ifstream csv(a / "ablation.csv");
    std::stringstream body;
    body << csv.rdbuf();
    CHECK(body.str().rfind("config,task,split,metric,value,n\n", 0) == 0);
    CHECK(body.str().find("\nw/o KG,localization,seen,median_m,") != std::string::npos);
  }
}
