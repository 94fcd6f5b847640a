#include "lightllm/sensor_kg.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <stdexcept>
#include <tuple>

#include "json.hpp"

namespace lightllm {

const char* edge_kind_name(EdgeKind kind) {
  return kind == EdgeKind::correlated ? "CORRELATED" : "LIGHT_AFFECTS";
}

EdgeKind edge_kind_from_name(const std::string& name) {
  if (name == "CORRELATED") return EdgeKind::correlated;
  if (name == "LIGHT_AFFECTS") return EdgeKind::light_affects;
  throw std::invalid_argument("unknown edge kind '" + name + "'");
}

bool operator<(const KgEdge& x, const KgEdge& y) {
  return std::tie(x.kind, x.a, x.b) < std::tie(y.kind, y.a, y.b);
}

std::size_t KnowledgeGraph::node_index(const std::string& id) const {
  for (std::size_t i = 0; i < sensors.size(); ++i)
    if (sensors[i].id == id) return i;
  for (std::size_t i = 0; i < lights.size(); ++i)
    if (lights[i].id == id) return sensors.size() + i;
  throw std::invalid_argument("knowledge graph: unknown node '" + id + "'");
}

KnowledgeGraph KnowledgeGraph::without_edges() const {
  KnowledgeGraph g = *this;
  g.edges.clear();
  return g;
}

KnowledgeGraph build_knowledge_graph(const SceneSpec& scene, const KgConfig& cfg) {
  cfg.validate();
  std::set<std::string> ids;
  for (const auto& s : scene.sensors)
    if (!ids.insert(s.id).second) throw std::invalid_argument("duplicate node id '" + s.id + "'");
  for (const auto& l : scene.lights)
    if (!ids.insert(l.id).second) throw std::invalid_argument("duplicate node id '" + l.id + "'");

  KnowledgeGraph g;
  g.sensors = scene.sensors;
  g.lights = scene.lights;

  // Phase 1: sensor pairs.
  for (std::size_t i = 0; i < scene.sensors.size(); ++i)
    for (std::size_t j = i + 1; j < scene.sensors.size(); ++j) {
      const SensorNode& si = scene.sensors[i];
      const SensorNode& sj = scene.sensors[j];
      if (distance(si.position, sj.position) > cfg.distance_threshold) continue;
      if (!fov_overlap(si.fov(), sj.fov())) continue;
      if (!segment_clear(si.position, sj.position, scene.obstacles)) continue;
      g.edges.push_back({std::min(si.id, sj.id), std::max(si.id, sj.id), EdgeKind::correlated});
    }

  // Phase 2: lights to sensors.
  for (const LightNode& l : scene.lights)
    for (const SensorNode& s : scene.sensors) {
      if (horizontal_distance(l.position, s.position) > cfg.distance_threshold) continue;
      if (std::abs(l.position.z - s.position.z) > cfg.vertical_threshold) continue;
      if (!segment_clear(l.position, s.position, scene.obstacles)) continue;
      g.edges.push_back({l.id, s.id, EdgeKind::light_affects});
    }

  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

void write_edges_jsonl(const KnowledgeGraph& graph, std::ostream& out) {
  for (const KgEdge& e : graph.edges)
    out << nlohmann::json{{"a", e.a}, {"b", e.b}, {"kind", edge_kind_name(e.kind)}}.dump() << '\n';
}

std::vector<KgEdge> read_edges_jsonl(std::istream& in) {
  std::vector<KgEdge> edges;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    edges.push_back({j.at("a").get<std::string>(), j.at("b").get<std::string>(),
                     edge_kind_from_name(j.at("kind").get<std::string>())});
  }
  return edges;
}

}  // namespace lightllm
