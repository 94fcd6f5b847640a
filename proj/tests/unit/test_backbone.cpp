#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "lightllm/gradcheck.hpp"
#include "lightllm/heads.hpp"
#include "lightllm/lora.hpp"
#include "lightllm/model.hpp"

using namespace lightllm;

namespace {

Tensor probe(const Tensor& out, std::uint64_t seed = 3) {
  SeededRng rng(seed, 0);
  return sum(mul(out, Tensor::randn(out.shape(), rng, 1.0)));
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

std::vector<Tensor> tensors(const ParamList& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

const BackboneConfig kSmall{1, 8, 2, 16};

}  // namespace

TEST_SUITE("lora") {
  TEST_CASE("fresh adapters leave the frozen output bit-identical on 100 inputs") {
    SeededRng brng(1, streams::kBackbone), lrng(1, streams::kLora), rng(1, 0);
    FrozenBackbone bb({2, 16, 4, 32}, brng);
    AdapterSet adapters({2, 16, 4, 32}, LoraConfig{}, lrng);
    for (int i = 0; i < 100; ++i) {
      SeededRng r = rng.derive(i);
      const std::size_t batch = 1 + r.below(3), n = 1 + r.below(6);
      Tensor x = Tensor::randn({batch * n, 16}, r, 1.0);
      Tensor frozen = bb.forward(x, batch, nullptr, false, nullptr);
      Tensor adapted = bb.forward(x, batch, &adapters, false, nullptr);
      REQUIRE(same_bits(frozen.values(), adapted.values()));
    }
  }

  TEST_CASE("ten training steps move the adapted output away from the frozen one") {
    SeededRng brng(2, streams::kBackbone), lrng(2, streams::kLora), rng(2, 0);
    FrozenBackbone bb(kSmall, brng);
    AdapterSet adapters(kSmall, LoraConfig{4, 4.0, 0.0, 0.02}, lrng);
    const std::uint64_t before = bb.checksum();
    ParamList params;
    adapters.collect(params, "lora.");
    Adam opt(params, 1e-2);
    Tensor x = Tensor::randn({6, 8}, rng, 1.0);
    const std::vector<double> target(48, 0.5);
    for (int step = 0; step < 10; ++step) {
      mse_loss(reshape(bb.forward(x, 2, &adapters, true, &rng), {48}), target).backward();
      opt.step();
    }
    CHECK(opt.steps() == 10);
    Tensor frozen = bb.forward(x, 2, nullptr, false, nullptr);
    Tensor adapted = bb.forward(x, 2, &adapters, false, nullptr);
    CHECK_FALSE(same_bits(frozen.values(), adapted.values()));
    CHECK(bb.checksum() == before);
  }

  TEST_CASE("rank bounds and parameter counts") {
    SeededRng rng(3, 0);
    CHECK_THROWS_AS(LoraAdapter(8, 8, LoraConfig{0, 1.0, 0.0, 0.02}, rng), std::invalid_argument);
    CHECK_THROWS_AS(LoraAdapter(8, 8, LoraConfig{9, 1.0, 0.0, 0.02}, rng), std::invalid_argument);
    CHECK_THROWS_AS(LoraAdapter(8, 8, LoraConfig{2, 1.0, 1.0, 0.02}, rng), std::invalid_argument);
    LoraAdapter a(8, 6, LoraConfig{2, 4.0, 0.1, 0.02}, rng);
    CHECK(a.rank() == 2);
    CHECK(a.scale() == 2.0);
    CHECK(a.parameter_count() == 8 * 2 + 2 * 6);
    for (double v : a.b.values()) CHECK(v == 0.0);
    AdapterSet set({3, 8, 2, 16}, LoraConfig{2, 2.0, 0.0, 0.02}, rng);
    CHECK(set.parameter_count() == 3 * 4 * (8 * 2 + 2 * 8));
  }

  TEST_CASE("adapted_forward adds the scaled low-rank path") {
    SeededRng rng(4, 0);
    LoraAdapter a(2, 2, LoraConfig{1, 2.0, 0.0, 0.02}, rng);
    a.a.mutable_values()[0] = 1.0;
    a.a.mutable_values()[1] = 2.0;
    a.b.mutable_values()[0] = 3.0;
    a.b.mutable_values()[1] = -1.0;
    Tensor x({1, 2}, {1.0, 1.0}), w({2, 2}, {1, 0, 0, 1});
    Tensor y = adapted_forward(x, w, &a, false, nullptr);
    // x W = (1, 1); x A = 3; s = 2 -> 2 * 3 * (3, -1) = (18, -6).
    CHECK(y[0] == doctest::Approx(19.0));
    CHECK(y[1] == doctest::Approx(-5.0));
    CHECK_THROWS_AS(adapted_forward(Tensor::zeros({1, 3}), w, &a, false, nullptr), std::invalid_argument);
  }

  TEST_CASE("gradient check through the adapted backbone") {
    SeededRng brng(5, streams::kBackbone), lrng(5, streams::kLora), rng(5, 0);
    FrozenBackbone bb(kSmall, brng);
    AdapterSet adapters(kSmall, LoraConfig{2, 2.0, 0.0, 0.02}, lrng);
    ParamList p;
    adapters.collect(p, "lora.");
    // Nonzero B so that A receives a gradient too.
    for (auto& np : p)
      for (double& v : np.tensor.mutable_values()) v += 0.1 * rng.normal();
    auto params = tensors(p);
    params.push_back(Tensor::randn({2 * 3, 8}, rng, 1.0, true));
    const Tensor x = params.back();
    CHECK(check_gradients([&] { return probe(bb.forward(x, 2, &adapters, false, nullptr)); }, params) < 1e-4);
  }

  TEST_CASE("backbone weights never require gradients") {
    SeededRng rng(6, streams::kBackbone);
    FrozenBackbone bb(kSmall, rng);
    ParamList p;
    bb.collect(p, "backbone.");
    CHECK_FALSE(p.empty());
    for (const auto& np : p) CHECK_FALSE(np.tensor.requires_grad());
    CHECK_THROWS_AS(FrozenBackbone({1, 8, 3, 16}, rng), std::invalid_argument);
  }
}

TEST_SUITE("heads") {
  TEST_CASE("classify_location on a two-entry catalog") {
    LocationCatalog cat{{{0, 0.5, 0.5}, {1, 1.5, 0.5}}};
    const std::vector<double> logits = {0.0, 1.0};
    const auto pred = classify_location(logits, cat);
    CHECK(pred.probabilities[0] == doctest::Approx(0.2689414214));
    CHECK(pred.probabilities[1] == doctest::Approx(0.7310585786));
    CHECK(pred.class_id == 1);
    CHECK(pred.x == 1.5);
    const std::vector<double> tie = {2.0, 2.0};
    CHECK(classify_location(tie, cat).class_id == 0);
    const std::vector<double> wrong = {1.0};
    CHECK_THROWS_AS(classify_location(wrong, cat), std::invalid_argument);
  }

  TEST_CASE("catalog validation and nearest") {
    LocationCatalog dup{{{0, 0, 0}, {0, 1, 1}}};
    CHECK_THROWS_AS(dup.validate(), std::invalid_argument);
    LocationCatalog cat{{{3, 0, 0}, {7, 2, 0}}};
    CHECK(cat.nearest(0.9, 0) == 3);
    CHECK(cat.nearest(1.0, 0) == 3);
    CHECK(cat.nearest(1.1, 0) == 7);
    CHECK_THROWS_AS(cat.by_id(5), std::invalid_argument);
  }

  TEST_CASE("gradient check through each head") {
    SeededRng rng(7, 0);
    Tensor tokens = Tensor::randn({2 * 4, 8}, rng, 1.0, true);
    ClassificationHead cls(8, 5, rng);
    QuantileHead q(8, 3, kDefaultQuantileLevels, rng);
    ScalarHead sc(8, 2, rng);
    for (int which = 0; which < 3; ++which) {
      ParamList p;
      if (which == 0) cls.collect(p, "head.");
      if (which == 1) q.collect(p, "head.");
      if (which == 2) sc.collect(p, "head.");
      auto params = tensors(p);
      params.push_back(tokens);
      auto f = [&] {
        if (which == 0) return probe(cls.logits(tokens, 4));
        if (which == 1) return probe(q.forward(tokens, 4));
        return probe(sc.forward(tokens, 4));
      };
      CHECK(check_gradients(f, params) < 1e-4);
    }
  }

  TEST_CASE("quantile rows are sorted and form a valid distribution") {
    SeededRng rng(8, 0);
    QuantileHead q(8, 3, kDefaultQuantileLevels, rng);
    Tensor out = q.forward(Tensor::randn({2 * 4, 8}, rng, 1.0), 4);
    REQUIRE(out.shape() == Shape{6, 5});
    for (std::size_t s = 0; s < 2; ++s) {
      const auto d = to_distribution(out.values().subspan(s * 15, 15), 3, kDefaultQuantileLevels, 30.0);
      CHECK_NOTHROW(d.validate());
    }
    CHECK_THROWS_AS(q.forward(Tensor::zeros({2, 8}), 1), std::invalid_argument);
    ForecastDistribution bad{{0.5, 0.4}, {{1.0, 2.0}}};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  }

  TEST_CASE("sort_rows routes gradients to the original positions") {
    Tensor x({1, 3}, {3.0, 1.0, 2.0}, true);
    Tensor y = sort_rows(x);
    CHECK(y[0] == 1.0);
    CHECK(y[2] == 3.0);
    sum(mul(y, Tensor({1, 3}, {1.0, 10.0, 100.0}))).backward();
    CHECK(x.grad()[0] == 100.0);
    CHECK(x.grad()[1] == 1.0);
    CHECK(x.grad()[2] == 10.0);
  }
}

TEST_SUITE("model") {
  TEST_CASE("config validation and task names") {
    ModelConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.heads = 5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.lora.r = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK(task_from_name("forecasting") == Task::forecasting);
    CHECK(std::string(task_name(Task::estimation)) == "estimation");
    CHECK_THROWS_AS(task_from_name("juggling"), std::invalid_argument);
  }

  TEST_CASE("ablations change the trainable set but not the backbone") {
    TaskShape shape;
    shape.horizon = 2;
    shape.history = 4;
    shape.prompt = "<Dataset Description>: pv\n<Task Description>: forecast";
    ModelConfig cfg;
    cfg.task = Task::forecasting;
    cfg.d_model = 16;
    cfg.ffn = 32;
    cfg.heads = 2;
    LightLlm normal(cfg, shape, 4);
    cfg.ablation.disable_lora = true;
    LightLlm no_lora(cfg, shape, 4);
    CHECK(count_values(no_lora.trainable()) < count_values(normal.trainable()));
    CHECK(normal.backbone().checksum() == no_lora.backbone().checksum());
    for (const auto& p : normal.trainable()) CHECK(p.tensor.requires_grad());
    CHECK(normal.all().size() > normal.trainable().size());
    CHECK_THROWS_AS(normal.forward(Tensor::zeros({5, 3}), 1, false, nullptr), std::invalid_argument);
  }

  TEST_CASE("Adam skips parameters without gradients and clears them") {
    Tensor a = Tensor::full({2}, 1.0, true), b = Tensor::full({2}, 1.0, true);
    Adam opt({{"a", a}, {"b", b}}, 0.1);
    sum(a).backward();
    opt.step();
    // First bias-corrected step moves by lr * sign(g).
    CHECK(a[0] == doctest::Approx(0.9));
    CHECK(b[0] == 1.0);
    CHECK_FALSE(a.has_grad());
  }
}
