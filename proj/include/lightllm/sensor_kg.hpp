#pragma once

// Knowledge graph of sensors and light sources (node connection algorithm):
// CORRELATED edges between nearby sensors with overlapping, unobstructed
// fields of view; LIGHT_AFFECTS edges from lights to sensors within the
// horizontal and vertical reach thresholds and an unobstructed line of sight.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "lightllm/scene.hpp"

namespace lightllm {

enum class EdgeKind { correlated, light_affects };

const char* edge_kind_name(EdgeKind kind);
EdgeKind edge_kind_from_name(const std::string& name);

struct KgEdge {
  std::string a;  // the light for LIGHT_AFFECTS; the smaller id for CORRELATED
  std::string b;
  EdgeKind kind;

  friend bool operator==(const KgEdge&, const KgEdge&) = default;
};

bool operator<(const KgEdge& x, const KgEdge& y);

struct KnowledgeGraph {
  std::vector<SensorNode> sensors;
  std::vector<LightNode> lights;
  std::vector<KgEdge> edges;  // sorted by (kind, a, b)

  // Node index in [sensors..., lights...] order; throws on unknown ids.
  std::size_t node_index(const std::string& id) const;
  std::size_t node_count() const { return sensors.size() + lights.size(); }
  KnowledgeGraph without_edges() const;
};

KnowledgeGraph build_knowledge_graph(const SceneSpec& scene, const KgConfig& cfg);
inline KnowledgeGraph build_knowledge_graph(const SceneSpec& scene) {
  return build_knowledge_graph(scene, scene.config);
}

// One JSON object per line: {"a": ..., "b": ..., "kind": ...}.
void write_edges_jsonl(const KnowledgeGraph& graph, std::ostream& out);
std::vector<KgEdge> read_edges_jsonl(std::istream& in);

}  // namespace lightllm
