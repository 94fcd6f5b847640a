#pragma once

// Geometric description of a lit room: the inputs of knowledge-graph
// construction and of the synthetic data generators.

#include <array>
#include <string>
#include <vector>

#include "json.hpp"
#include "lightllm/geometry.hpp"
#include "lightllm/solar.hpp"

namespace lightllm {

struct SensorNode {
  std::string id;
  Vec3 position;
  Vec3 orientation{0, 0, 1};
  double fov_angle = 120.0;  // full cone angle, degrees
  double range = 3.0;

  ConeRegion fov() const;
};

struct LightNode {
  std::string id;
  Vec3 position;
  std::array<double, kChannels> spectrum{};
};

struct KgConfig {
  double distance_threshold = 2.2;
  double vertical_threshold = 2.5;
  double fov_angle = 120.0;
  double range = 3.0;

  void validate() const;
};

// A solar cell placed in the room, facing `normal`.
struct PlacedCell {
  std::string id;
  Vec3 position;
  Vec3 normal{0, 0, 1};
  SolarCellSpec spec;
};

struct SceneSpec {
  std::string name;
  Vec3 room_min, room_max;
  std::vector<SensorNode> sensors;
  std::vector<LightNode> lights;
  std::vector<BoxObstacle> obstacles;
  std::vector<PlacedCell> cells;
  KgConfig config;

  bool inside_room(Vec3 p) const;
  // Throws std::invalid_argument on any violated invariant.
  void validate() const;
};

ConeRegion fov_of_sensor(const SensorNode& s);

SceneSpec scene_from_json(const nlohmann::json& j);
nlohmann::json scene_to_json(const SceneSpec& scene);
SceneSpec load_scene(const std::string& path);
void save_scene(const SceneSpec& scene, const std::string& path);

}  // namespace lightllm
