#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "lightllm/rng.hpp"
#include "lightllm/sensor_kg.hpp"
#include "lightllm/synth.hpp"

using namespace lightllm;

namespace {

ConeRegion cone(Vec3 apex, Vec3 axis, double full_angle_deg, double range) {
  return {apex, normalized(axis), 0.5 * full_angle_deg * std::numbers::pi / 180.0, range};
}

// Dense-grid search for a point inside both cones.
bool grid_overlap(const ConeRegion& a, const ConeRegion& b, double step) {
  const double lo_x = std::min(a.apex.x - a.range, b.apex.x - b.range);
  const double hi_x = std::max(a.apex.x + a.range, b.apex.x + b.range);
  const double lo_y = std::min(a.apex.y - a.range, b.apex.y - b.range);
  const double hi_y = std::max(a.apex.y + a.range, b.apex.y + b.range);
  const double lo_z = std::min(a.apex.z - a.range, b.apex.z - b.range);
  const double hi_z = std::max(a.apex.z + a.range, b.apex.z + b.range);
  for (double x = lo_x; x <= hi_x; x += step)
    for (double y = lo_y; y <= hi_y; y += step)
      for (double z = lo_z; z <= hi_z; z += step)
        if (a.contains({x, y, z}) && b.contains({x, y, z})) return true;
  return false;
}

SceneSpec random_scene(SeededRng& rng, std::size_t sensors, std::size_t lights) {
  SceneSpec s;
  s.name = "random";
  s.room_min = {0, 0, 0};
  s.room_max = {6, 6, 3};
  for (std::size_t i = 0; i < sensors; ++i) {
    Vec3 axis = normalized({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 1.0});
    s.sensors.push_back({"S" + std::to_string(i), {rng.uniform(0, 6), rng.uniform(0, 6), rng.uniform(0.3, 1.5)},
                         axis, rng.uniform(60, 150), rng.uniform(1.5, 3.5)});
  }
  for (std::size_t i = 0; i < lights; ++i)
    s.lights.push_back({"L" + std::to_string(i), {rng.uniform(0, 6), rng.uniform(0, 6), 2.8},
                        light_spectrum(SpectrumKind::warm_led, 1.0)});
  for (int i = 0; i < 2; ++i) {
    const double x = rng.uniform(0, 5), y = rng.uniform(0, 5);
    s.obstacles.push_back({{x, y, 0}, {x + rng.uniform(0.1, 1), y + rng.uniform(0.1, 1), rng.uniform(0.5, 2.5)}});
  }
  return s;
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("cone membership") {
    const ConeRegion c = cone({0, 0, 0}, {0, 0, 1}, 60, 2);
    CHECK(c.contains({0, 0, 1}));
    CHECK_FALSE(c.contains({0, 0, 3}));
    // atan(1.5 / 1) = 56.3 degrees, beyond the 30 degree half-angle.
    CHECK(std::atan2(1.5, 1.0) * 180 / std::numbers::pi == doctest::Approx(56.31).epsilon(1e-3));
    CHECK_FALSE(c.contains({1.5, 0, 1}));
  }

  TEST_CASE("fov_of_sensor halves the full angle") {
    SensorNode s{"S", {1, 2, 3}, {0, 0, 1}, 60.0, 2.0};
    const ConeRegion c = fov_of_sensor(s);
    CHECK(c.half_angle == doctest::Approx(std::numbers::pi / 6));
    CHECK(c.apex == Vec3{1, 2, 3});
    CHECK(c.range == 2.0);
  }

  TEST_CASE("fov overlap examples") {
    const ConeRegion a = cone({0, 0, 0}, {0, 0, 1}, 60, 2);
    CHECK(fov_overlap(a, a));
    CHECK_FALSE(fov_overlap(a, cone({100, 0, 0}, {0, 0, 1}, 60, 2)));
    const ConeRegion facing = cone({0, 0, 1}, {0, 0, -1}, 60, 2);
    CHECK(grid_overlap(a, facing, 0.05));
    CHECK(fov_overlap(a, facing));
    CHECK(fov_overlap(facing, a));
    // Back to back: no common point.
    const ConeRegion away = cone({0, 0, -0.1}, {0, 0, -1}, 60, 2);
    CHECK_FALSE(grid_overlap(a, away, 0.05));
    CHECK_FALSE(fov_overlap(a, away));
  }

  TEST_CASE("sampled overlap is sound and symmetric on random cones") {
    SeededRng rng(21, 0);
    for (int trial = 0; trial < 200; ++trial) {
      auto random_cone = [&] {
        return cone({rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)},
                    {rng.normal(), rng.normal(), rng.normal()}, rng.uniform(20, 170), rng.uniform(0.5, 3));
      };
      const ConeRegion a = random_cone(), b = random_cone();
      const bool sampled = fov_overlap(a, b);
      REQUIRE(sampled == fov_overlap(b, a));
      // A sampled witness lies in both cones, so the grid must find overlap
      // near it; check on a coarse grid only when the sampler says no to
      // catch gross misses of large shared volumes.
      if (!sampled) {
        int shared = 0;
        for (double x = -5; x <= 5; x += 0.25)
          for (double y = -5; y <= 5; y += 0.25)
            for (double z = -5; z <= 5; z += 0.25) shared += a.contains({x, y, z}) && b.contains({x, y, z});
        REQUIRE(shared < 40);
      }
    }
  }

  TEST_CASE("segment box slab test") {
    const Vec3 p{0, 0, 0}, q{2, 0, 0};
    CHECK(segment_clear(p, q, {}));
    const BoxObstacle centered{{0.5, -0.5, -0.5}, {1.5, 0.5, 0.5}};
    CHECK_FALSE(segment_clear(p, q, std::vector<BoxObstacle>{centered}));
    const BoxObstacle off_axis{{0.5, 2, 2}, {1.5, 3, 3}};
    CHECK(segment_clear(p, q, std::vector<BoxObstacle>{off_axis}));
    // Box beyond the segment end.
    CHECK_FALSE(segment_hits_box(p, q, {{3, -1, -1}, {4, 1, 1}}));
    // Diagonal segment clipping a corner.
    CHECK(segment_hits_box({0, 0, 0}, {2, 2, 0}, {{0.9, 0.9, -1}, {1.1, 1.1, 1}}));
  }

  TEST_CASE("segment cylinder test") {
    // Horizontal segment at z = 1 through the axis.
    CHECK(segment_hits_cylinder({-1, 0, 1}, {1, 0, 1}, 0, 0, 0.25, 1.7));
    // Passing beside it.
    CHECK_FALSE(segment_hits_cylinder({-1, 0.3, 1}, {1, 0.3, 1}, 0, 0, 0.25, 1.7));
    // Passing over it.
    CHECK_FALSE(segment_hits_cylinder({-1, 0, 2}, {1, 0, 2}, 0, 0, 0.25, 1.7));
    // Steep segment entering through the top.
    CHECK(segment_hits_cylinder({0.1, 0, 3}, {0.1, 0, 1}, 0, 0, 0.25, 1.7));
    // Segment ending before the cylinder.
    CHECK_FALSE(segment_hits_cylinder({-2, 0, 1}, {-0.5, 0, 1}, 0, 0, 0.25, 1.7));
  }
}

TEST_SUITE("knowledge graph") {
  TEST_CASE("empty scene has no edges") {
    SceneSpec s;
    CHECK(build_knowledge_graph(s, KgConfig{}).edges.empty());
  }

  TEST_CASE("fig3 micro-scene") {
    const KnowledgeGraph g = build_knowledge_graph(fig3_scene());
    const std::vector<KgEdge> want = {{"S2", "S3", EdgeKind::correlated},
                                      {"L1", "S1", EdgeKind::light_affects},
                                      {"L1", "S2", EdgeKind::light_affects},
                                      {"L1", "S3", EdgeKind::light_affects},
                                      {"L2", "S3", EdgeKind::light_affects}};
    CHECK(g.edges == want);
  }

  TEST_CASE("distance gate") {
    SceneSpec s;
    s.sensors = {{"A", {0, 0, 1}, {0, 0, 1}, 120, 20}, {"B", {10, 0, 1}, {0, 0, 1}, 120, 20}};
    KgConfig cfg{5.0, 2.5, 120, 20};
    CHECK(build_knowledge_graph(s, cfg).edges.empty());
    cfg.distance_threshold = 11.0;
    CHECK(build_knowledge_graph(s, cfg).edges.size() == 1);
  }

  TEST_CASE("duplicate ids are rejected") {
    SceneSpec s = fig3_scene();
    s.lights[1].id = "S1";
    CHECK_THROWS_AS(build_knowledge_graph(s), std::invalid_argument);
  }

  TEST_CASE("properties on random scenes") {
    SeededRng rng(31, 0);
    for (int trial = 0; trial < 40; ++trial) {
      SceneSpec s = random_scene(rng, 8, 4);
      KgConfig cfg{rng.uniform(0.5, 3.0), rng.uniform(0.5, 2.5), 120, 3};
      const KnowledgeGraph g = build_knowledge_graph(s, cfg);
      REQUIRE(std::is_sorted(g.edges.begin(), g.edges.end()));
      REQUIRE(std::adjacent_find(g.edges.begin(), g.edges.end()) == g.edges.end());
      for (const KgEdge& e : g.edges) {
        const Vec3 pa = g.node_index(e.a) < g.sensors.size() ? g.sensors[g.node_index(e.a)].position
                                                             : g.lights[g.node_index(e.a) - g.sensors.size()].position;
        const Vec3 pb = g.sensors[g.node_index(e.b)].position;
        REQUIRE(segment_clear(pa, pb, s.obstacles));
        if (e.kind == EdgeKind::correlated) REQUIRE(e.a < e.b);
        else REQUIRE(g.node_index(e.a) >= g.sensors.size());
      }
      // Determinism.
      REQUIRE(build_knowledge_graph(s, cfg).edges == g.edges);
      // Swapping two sensors changes nothing.
      SceneSpec swapped = s;
      std::swap(swapped.sensors[0], swapped.sensors[5]);
      std::swap(swapped.sensors[2], swapped.sensors[3]);
      REQUIRE(build_knowledge_graph(swapped, cfg).edges == g.edges);
      // Monotone in the distance threshold.
      KgConfig wider = cfg;
      wider.distance_threshold += rng.uniform(0.0, 2.0);
      const auto more = build_knowledge_graph(s, wider).edges;
      for (const KgEdge& e : g.edges) REQUIRE(std::find(more.begin(), more.end(), e) != more.end());
    }
  }

  TEST_CASE("edge JSON-lines round trip") {
    const KnowledgeGraph g = build_knowledge_graph(fig3_scene());
    std::stringstream ss;
    write_edges_jsonl(g, ss);
    CHECK(ss.str().find(R"({"a":"S2","b":"S3","kind":"CORRELATED"})") != std::string::npos);
    CHECK(read_edges_jsonl(ss) == g.edges);
  }

  TEST_CASE("without_edges keeps nodes") {
    const KnowledgeGraph g = build_knowledge_graph(fig3_scene()).without_edges();
    CHECK(g.edges.empty());
    CHECK(g.node_count() == 5);
  }
}

TEST_SUITE("scene") {
  TEST_CASE("JSON round trip of every fixture") {
    for (const char* name : {"fig3", "apartment", "office", "apartment-unseen", "office-unseen",
                             "estimation", "estimation-unseen"}) {
      const SceneSpec s = scene_by_name(name);
      const SceneSpec back = scene_from_json(scene_to_json(s));
      CHECK(scene_to_json(back) == scene_to_json(s));
    }
  }

  TEST_CASE("invariants are enforced") {
    SceneSpec s = fig3_scene();
    s.sensors[0].orientation = {0, 0, 2};
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = fig3_scene();
    s.sensors[0].fov_angle = 180;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = fig3_scene();
    s.obstacles[0].min.x = 5;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = fig3_scene();
    s.lights[0].position.z = 10;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = fig3_scene();
    s.config.range = 0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  }

  TEST_CASE("fixture sizes and no sensor inside furniture") {
    CHECK(apartment_scene().sensors.size() == 17);
    CHECK(office_scene().sensors.size() == 27);
    for (const char* name : {"apartment", "office", "apartment-unseen", "office-unseen"}) {
      const SceneSpec s = scene_by_name(name);
      for (const auto& sensor : s.sensors)
        for (const auto& b : s.obstacles) {
          const Vec3 p = sensor.position;
          const bool inside = p.x >= b.min.x && p.x <= b.max.x && p.y >= b.min.y && p.y <= b.max.y &&
                              p.z >= b.min.z && p.z <= b.max.z;
          INFO(name << " " << sensor.id);
          CHECK_FALSE(inside);
        }
    }
  }
}
