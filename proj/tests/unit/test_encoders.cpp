#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "lightllm/encoders.hpp"
#include "lightllm/fusion.hpp"
#include "lightllm/gradcheck.hpp"
#include "lightllm/prompt.hpp"
#include "lightllm/synth.hpp"

using namespace lightllm;

namespace {

Tensor probe(const Tensor& out, std::uint64_t seed = 7) {
  SeededRng rng(seed, 0);
  return sum(mul(out, Tensor::randn(out.shape(), rng, 1.0)));
}

std::vector<Tensor> tensors(const ParamList& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

}  // namespace

TEST_SUITE("gnn") {
  TEST_CASE("gradient check through the GNN encoder") {
    const auto graph = GraphContext::from(build_knowledge_graph(fig3_scene()), 10.0);
    SeededRng rng(1, 0);
    GnnEncoder enc({2, 8, 64, 4, 10.0, Activation::tanh}, 18, rng);
    ParamList p;
    enc.collect(p, "gnn.");
    auto params = tensors(p);
    params.push_back(Tensor::randn({2 * graph.sensors, 18}, rng, 1.0, true));
    const Tensor x = params.back();
    const double err = check_gradients([&] { return probe(enc.encode(graph, x, 2)); }, params);
    CHECK(err < 1e-4);
  }

  TEST_CASE("without node attributes sensors differ only by their features") {
    const auto graph = GraphContext::from(build_knowledge_graph(fig3_scene()).without_edges(), 10.0);
    SeededRng rng(5, 0);
    GnnEncoder enc({2, 8, 64, 4, 10.0, Activation::tanh, false}, 18, rng);
    ParamList p;
    enc.collect(p, "gnn.");
    for (const auto& np : p) CHECK(np.name.find("embedding") == std::string::npos);
    std::vector<double> row(18);
    for (auto& v : row) v = rng.normal();
    std::vector<double> x;
    for (std::size_t i = 0; i < graph.sensors; ++i) x.insert(x.end(), row.begin(), row.end());
    Tensor out = enc.encode(graph, Tensor({graph.sensors, 18}, x), 1);
    for (std::size_t i = 1; i < graph.sensors; ++i)
      for (std::size_t j = 0; j < 8; ++j) CHECK(out[i * 8 + j] == out[j]);
  }

  TEST_CASE("output has one token per sensor and rejects bad input") {
    const auto graph = GraphContext::from(build_knowledge_graph(apartment_scene()), 10.0);
    SeededRng rng(2, 0);
    GnnEncoder enc({2, 8, 64, 16, 10.0, Activation::tanh}, 18, rng);
    Tensor x = Tensor::randn({3 * graph.sensors, 18}, rng, 1.0);
    Tensor out = enc.encode(graph, x, 3);
    CHECK(out.dim(0) == 3 * graph.sensors);
    CHECK(out.dim(1) == 8);
    CHECK_THROWS_AS(enc.encode(graph, Tensor::zeros({5, 18}), 1), std::invalid_argument);
  }

  TEST_CASE("samples in a batch do not interact") {
    const auto graph = GraphContext::from(build_knowledge_graph(fig3_scene()), 10.0);
    SeededRng rng(3, 0);
    GnnEncoder enc({2, 8, 64, 4, 10.0, Activation::tanh}, 18, rng);
    std::vector<double> a(3 * 18), b(3 * 18);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    std::vector<double> ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    Tensor single = enc.encode(graph, Tensor({3, 18}, a), 1);
    Tensor pair = enc.encode(graph, Tensor({6, 18}, ab), 2);
    for (std::size_t i = 0; i < single.size(); ++i) CHECK(single[i] == doctest::Approx(pair[i]).epsilon(1e-12));
  }

  TEST_CASE("reordering the sensors reorders the tokens") {
    const KnowledgeGraph kg = build_knowledge_graph(apartment_scene());
    KnowledgeGraph shuffled = kg;
    std::reverse(shuffled.sensors.begin(), shuffled.sensors.end());
    std::reverse(shuffled.lights.begin(), shuffled.lights.end());
    const auto g = GraphContext::from(kg, 10.0), gs = GraphContext::from(shuffled, 10.0);
    SeededRng rng(9, 0);
    GnnEncoder enc({2, 8, 64, 16, 10.0, Activation::tanh}, 18, rng);
    const std::size_t s = g.sensors;
    std::vector<double> x(s * 18), xs(s * 18);
    for (auto& v : x) v = rng.normal();
    for (std::size_t i = 0; i < s; ++i)
      std::copy_n(x.begin() + i * 18, 18, xs.begin() + (s - 1 - i) * 18);
    Tensor out = enc.encode(g, Tensor({s, 18}, x), 1);
    Tensor outs = enc.encode(gs, Tensor({s, 18}, xs), 1);
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < 8; ++j)
        CHECK(out[i * 8 + j] == doctest::Approx(outs[(s - 1 - i) * 8 + j]).epsilon(1e-12));
  }
}

TEST_SUITE("tcn") {
  TEST_CASE("gradient check through the TCN encoder") {
    SeededRng rng(4, 0);
    TcnEncoder enc({2, 3, 6, Activation::tanh}, 3, rng);
    ParamList p;
    enc.collect(p, "tcn.");
    auto params = tensors(p);
    params.push_back(Tensor::randn({2 * 7, 3}, rng, 1.0, true));
    const Tensor x = params.back();
    CHECK(check_gradients([&] { return probe(enc.encode(x, 2)); }, params) < 1e-4);
  }

  TEST_CASE("causality is exact on 50 random cases") {
    SeededRng rng(5, 0);
    TcnEncoder enc({3, 3, 8, Activation::tanh}, 3, rng);
    const std::size_t steps = 12;
    for (int trial = 0; trial < 50; ++trial) {
      SeededRng r = rng.derive(trial);
      std::vector<double> x(steps * 3);
      for (auto& v : x) v = r.normal();
      const std::size_t k = 1 + r.below(steps - 1);
      std::vector<double> y = x;
      for (std::size_t i = k * 3; i < y.size(); ++i) y[i] += r.normal();
      Tensor a = enc.encode(Tensor({steps, 3}, x), 1), b = enc.encode(Tensor({steps, 3}, y), 1);
      const std::size_t w = a.dim(1);
      REQUIRE(same_bits(a.values().subspan(0, k * w), b.values().subspan(0, k * w)));
      bool later_changed = false;
      for (std::size_t i = k * w; i < a.size(); ++i) later_changed |= a[i] != b[i];
      CHECK(later_changed);
    }
  }

  TEST_CASE("dilation doubles per block") {
    CHECK(TcnEncoder::dilation(0) == 1);
    CHECK(TcnEncoder::dilation(3) == 8);
  }

  TEST_CASE("conv1d matches a hand computation") {
    // One channel, kernel 2, dilation 1, left pad 1: y[o] = w0 x[o-1] + w1 x[o] + b.
    Tensor x({4, 1}, {1, 2, 3, 4}), w({2, 1}, {10, 1}), b({1}, {0.5});
    Tensor y = conv1d(x, 1, w, b, 2, 1, 1, 1, 0);
    const std::vector<double> want = {1.5, 12.5, 23.5, 34.5};
    REQUIRE(y.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == want[i]);
  }
}

TEST_SUITE("cnn") {
  TEST_CASE("gradient check through the CNN encoder") {
    SeededRng rng(6, 0);
    CnnEncoder enc({4, 6, 3, 8, Activation::tanh}, rng);
    ParamList p;
    enc.collect(p, "cnn.");
    auto params = tensors(p);
    params.push_back(Tensor::randn({2, 18}, rng, 1.0, true));
    const Tensor x = params.back();
    CHECK(check_gradients([&] { return probe(enc.encode(x, 2)); }, params) < 1e-4);
  }

  TEST_CASE("ten tokens per sample") {
    SeededRng rng(7, 0);
    CnnEncoder enc({4, 6, 3, 8, Activation::tanh}, rng);
    Tensor out = enc.encode(Tensor::randn({3, 18}, rng, 1.0), 3);
    CHECK(enc.tokens_per_sample() == 10);
    CHECK(out.dim(0) == 30);
    CHECK(enc.features(Tensor::randn({3, 18}, rng, 1.0), 3).dim(0) == 27);
    CHECK_THROWS_AS(enc.encode(Tensor::zeros({3, 17}), 3), std::invalid_argument);
  }
}

TEST_SUITE("flat") {
  TEST_CASE("gradient check through the flat encoder") {
    SeededRng rng(8, 0);
    FlatEncoder enc(12, 3, 4, rng);
    ParamList p;
    enc.collect(p, "flat.");
    auto params = tensors(p);
    params.push_back(Tensor::randn({2, 12}, rng, 1.0, true));
    const Tensor x = params.back();
    CHECK(check_gradients([&] { return probe(enc.encode(x)); }, params) < 1e-4);
    CHECK(enc.encode(x).dim(0) == 6);
  }
}

TEST_SUITE("prompt") {
  TEST_CASE("builtin templates render with every section") {
    for (const char* task : {"localization", "forecasting", "estimation"}) {
      const PromptTemplate tpl = builtin_template(task);
      Bindings b;
      for (const auto& s : tpl.slots()) b[s] = "value_" + s;
      const std::string text = render_prompt(tpl, b);
      CHECK_NOTHROW(check_sections(text));
      CHECK(text.find('{') == std::string::npos);
    }
    CHECK_THROWS_AS(builtin_template("dancing"), std::invalid_argument);
  }

  TEST_CASE("an unbound slot names itself") {
    PromptTemplate tpl{"t", "<Dataset Description>: {room}\n<Task Description>: {goal}"};
    CHECK(tpl.slots() == std::vector<std::string>{"room", "goal"});
    try {
      (void)render_prompt(tpl, {{"room", "office"}});
      FAIL("expected RenderError");
    } catch (const RenderError& e) {
      CHECK(e.slot() == "goal");
    }
  }

  TEST_CASE("missing or empty sections are rejected") {
    CHECK_THROWS_AS(check_sections("<Dataset Description>: a\n<Task Description>: b"), std::invalid_argument);
    CHECK_THROWS_AS(check_sections("<Dataset Description>:\n<Task Description>: b\n"
                                   "<Data Organization>: c\n<Key Input Characteristics>: d"),
                    std::invalid_argument);
    CHECK_NOTHROW(check_sections("<Dataset Description>: a\n<Task Description>: b\n"
                                 "<Data Organization>: c\n<Key Input Characteristics>: d"));
  }

  TEST_CASE("tokenizer and ids") {
    CHECK(tokenize("Room-A, 18 Channels!") ==
          std::vector<std::string>{"room", "-", "a", ",", "18", "channels", "!"});
    const auto ids = prompt_token_ids("a b", 100, 4);
    REQUIRE(ids.size() == 4);
    CHECK(ids[0] == static_cast<std::int64_t>(fnv1a("a") % 100));
    CHECK(ids[2] == -1);
    CHECK(prompt_token_ids("a b c d e f", 100, 3).size() == 3);
  }

  TEST_CASE("padded positions embed to zero rows") {
    SeededRng rng(9, 0);
    PromptTable table({64, 5, 4}, rng);
    Tensor e = table.embed("two words");
    CHECK(e.dim(0) == 5);
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(e.at(2, c) == 0.0);
      CHECK(e.at(4, c) == 0.0);
    }
    CHECK(e.at(0, 0) != 0.0);
  }
}

TEST_SUITE("fusion") {
  TEST_CASE("gradient check through the fusion layer with dropout off") {
    SeededRng rng(10, 0);
    LatentFusion lfl({8, 2, 0.1}, rng);
    ParamList p;
    lfl.collect(p, "fusion.");
    auto params = tensors(p);
    params.push_back(Tensor::randn({2 * 3, 8}, rng, 1.0, true));
    params.push_back(Tensor::randn({5, 8}, rng, 1.0, true));
    const Tensor f = params[params.size() - 2], pe = params.back();
    CHECK(check_gradients([&] { return probe(lfl.fuse(f, pe, 2, false, nullptr)); }, params) < 1e-4);
  }

  TEST_CASE("attention scores rows sum to one") {
    SeededRng rng(11, 0);
    Tensor s = attention_scores(Tensor::randn({3, 8}, rng, 1.0), Tensor::randn({5, 8}, rng, 1.0), 2);
    REQUIRE(s.shape() == Shape{2, 3, 5});
    for (std::size_t r = 0; r < 6; ++r) {
      double total = 0.0;
      for (std::size_t k = 0; k < 5; ++k) total += s[r * 5 + k];
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(attention_scores(Tensor::zeros({3, 8}), Tensor::zeros({5, 6}), 2),
                    std::invalid_argument);
  }

  TEST_CASE("permuting prompt tokens leaves the output bit-identical on 50 cases") {
    SeededRng rng(12, 0);
    LatentFusion lfl({8, 2, 0.1}, rng);
    for (int trial = 0; trial < 50; ++trial) {
      SeededRng r = rng.derive(trial);
      const std::size_t k = 2 + r.below(10);
      Tensor f = Tensor::randn({2 * 4, 8}, r, 1.0);
      Tensor pe = Tensor::randn({k, 8}, r, 1.0);
      std::vector<std::size_t> perm(k);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t i = k; i > 1; --i) std::swap(perm[i - 1], perm[r.below(i)]);
      Tensor a = lfl.fuse(f, pe, 2, false, nullptr);
      Tensor b = lfl.fuse(f, select_rows(pe, perm), 2, false, nullptr);
      REQUIRE(same_bits(a.values(), b.values()));
    }
  }

  TEST_CASE("dropout only in training and needs a generator") {
    SeededRng rng(13, 0);
    LatentFusion lfl({8, 2, 0.5}, rng);
    Tensor f = Tensor::randn({4, 8}, rng, 1.0), pe = Tensor::randn({3, 8}, rng, 1.0);
    Tensor a = lfl.fuse_attention(f, pe, 1, false, nullptr);
    Tensor b = lfl.fuse_attention(f, pe, 1, false, nullptr);
    CHECK(same_bits(a.values(), b.values()));
    CHECK_THROWS_AS(lfl.fuse_attention(f, pe, 1, true, nullptr), std::invalid_argument);
    SeededRng d(1, streams::kDropout);
    Tensor c = lfl.fuse_attention(f, pe, 1, true, &d);
    CHECK_FALSE(same_bits(a.values(), c.values()));
    CHECK_THROWS_AS(LatentFusion({8, 3, 0.1}, rng), std::invalid_argument);
  }
}
