#include "lightllm/scene.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

namespace lightllm {

using nlohmann::json;

ConeRegion SensorNode::fov() const { return fov_of_sensor(*this); }

ConeRegion fov_of_sensor(const SensorNode& s) {
  return {s.position, s.orientation, 0.5 * s.fov_angle * std::numbers::pi / 180.0, s.range};
}

void KgConfig::validate() const {
  if (!(distance_threshold > 0 && vertical_threshold > 0 && fov_angle > 0 && range > 0))
    throw std::invalid_argument("kg config: thresholds, angle and range must be positive");
}

bool SceneSpec::inside_room(Vec3 p) const {
  return p.x >= room_min.x && p.x <= room_max.x && p.y >= room_min.y && p.y <= room_max.y &&
         p.z >= room_min.z && p.z <= room_max.z;
}

void SceneSpec::validate() const {
  config.validate();
  if (!(room_min.x < room_max.x && room_min.y < room_max.y && room_min.z < room_max.z))
    throw std::invalid_argument("scene: empty room extents");
  std::set<std::string> ids;
  auto claim = [&](const std::string& id, Vec3 p) {
    if (id.empty()) throw std::invalid_argument("scene: empty node id");
    if (!ids.insert(id).second) throw std::invalid_argument("scene: duplicate node id '" + id + "'");
    if (!inside_room(p)) throw std::invalid_argument("scene: node '" + id + "' outside the room");
  };
  for (const auto& s : sensors) {
    claim(s.id, s.position);
    if (std::abs(norm(s.orientation) - 1.0) > 1e-9)
      throw std::invalid_argument("scene: sensor '" + s.id + "' orientation is not unit length");
    if (!(s.fov_angle > 0 && s.fov_angle < 180))
      throw std::invalid_argument("scene: sensor '" + s.id + "' fov_angle outside (0, 180)");
    if (!(s.range > 0)) throw std::invalid_argument("scene: sensor '" + s.id + "' range <= 0");
  }
  for (const auto& l : lights) {
    claim(l.id, l.position);
    for (double v : l.spectrum)
      if (!(v >= 0.0)) throw std::invalid_argument("scene: light '" + l.id + "' negative spectrum");
  }
  for (const auto& c : cells) {
    claim(c.id, c.position);
    c.spec.validate();
    if (std::abs(norm(c.normal) - 1.0) > 1e-9)
      throw std::invalid_argument("scene: cell '" + c.id + "' normal is not unit length");
  }
  for (const auto& b : obstacles)
    if (!(b.min.x <= b.max.x && b.min.y <= b.max.y && b.min.z <= b.max.z))
      throw std::invalid_argument("scene: obstacle min corner exceeds max corner");
}

namespace {

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("scene: expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec_to(Vec3 v) { return json::array({v.x, v.y, v.z}); }

}  // namespace

SceneSpec scene_from_json(const json& j) {
  SceneSpec scene;
  scene.name = j.value("name", "");
  if (j.contains("config")) {
    const json& c = j["config"];
    scene.config.distance_threshold = c.value("distance_threshold", scene.config.distance_threshold);
    scene.config.vertical_threshold = c.value("vertical_threshold", scene.config.vertical_threshold);
    scene.config.fov_angle = c.value("fov_angle", scene.config.fov_angle);
    scene.config.range = c.value("range", scene.config.range);
  }
  scene.room_min = vec_from(j.at("room").at("min"));
  scene.room_max = vec_from(j.at("room").at("max"));
  for (const json& s : j.value("sensors", json::array())) {
    SensorNode node;
    node.id = s.at("id").get<std::string>();
    node.position = vec_from(s.at("position"));
    if (s.contains("orientation")) node.orientation = vec_from(s["orientation"]);
    node.fov_angle = s.value("fov_angle", scene.config.fov_angle);
    node.range = s.value("range", scene.config.range);
    scene.sensors.push_back(std::move(node));
  }
  for (const json& l : j.value("lights", json::array())) {
    LightNode node;
    node.id = l.at("id").get<std::string>();
    node.position = vec_from(l.at("position"));
    const auto spectrum = l.at("spectrum").get<std::vector<double>>();
    if (spectrum.size() != kChannels)
      throw std::invalid_argument("scene: light '" + node.id + "' needs 18 spectrum channels");
    std::copy(spectrum.begin(), spectrum.end(), node.spectrum.begin());
    scene.lights.push_back(std::move(node));
  }
  for (const json& o : j.value("obstacles", json::array()))
    scene.obstacles.push_back({vec_from(o.at("min")), vec_from(o.at("max"))});
  for (const json& c : j.value("cells", json::array())) {
    PlacedCell cell;
    cell.id = c.at("id").get<std::string>();
    cell.position = vec_from(c.at("position"));
    if (c.contains("normal")) cell.normal = vec_from(c["normal"]);
    cell.spec.area = c.at("area").get<double>();
    cell.spec.absorption = c.at("absorption").get<std::vector<double>>();
    cell.spec.acceptance_p = c.value("acceptance_p", 1.0);
    cell.spec.k = c.at("k").get<double>();
    scene.cells.push_back(std::move(cell));
  }
  scene.validate();
  return scene;
}

json scene_to_json(const SceneSpec& scene) {
  json j;
  j["name"] = scene.name;
  j["room"] = {{"min", vec_to(scene.room_min)}, {"max", vec_to(scene.room_max)}};
  j["config"] = {{"distance_threshold", scene.config.distance_threshold},
                 {"vertical_threshold", scene.config.vertical_threshold},
                 {"fov_angle", scene.config.fov_angle},
                 {"range", scene.config.range}};
  j["sensors"] = json::array();
  for (const auto& s : scene.sensors)
    j["sensors"].push_back({{"id", s.id},
                            {"position", vec_to(s.position)},
                            {"orientation", vec_to(s.orientation)},
                            {"fov_angle", s.fov_angle},
                            {"range", s.range}});
  j["lights"] = json::array();
  for (const auto& l : scene.lights)
    j["lights"].push_back({{"id", l.id}, {"position", vec_to(l.position)}, {"spectrum", l.spectrum}});
  j["obstacles"] = json::array();
  for (const auto& o : scene.obstacles)
    j["obstacles"].push_back({{"min", vec_to(o.min)}, {"max", vec_to(o.max)}});
  j["cells"] = json::array();
  for (const auto& c : scene.cells)
    j["cells"].push_back({{"id", c.id},
                          {"position", vec_to(c.position)},
                          {"normal", vec_to(c.normal)},
                          {"area", c.spec.area},
                          {"absorption", c.spec.absorption},
                          {"acceptance_p", c.spec.acceptance_p},
                          {"k", c.spec.k}});
  return j;
}

SceneSpec load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open scene file '" + path + "'");
  return scene_from_json(json::parse(in));
}

void save_scene(const SceneSpec& scene, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write scene file '" + path + "'");
  out << scene_to_json(scene).dump(2) << '\n';
}

}  // namespace lightllm
