// Concept graphs: anatomical concept nodes joined by directed spatial edges.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cgn/errors.hpp"

namespace cgn {

/// Standard scan plane classes. The index mapping is fixed and used in files.
enum class PlaneClass : int { FASP = 0, FFSP = 1, FTSP = 2, OTHER = 3 };

inline constexpr std::size_t kNumPlaneClasses = 4;
inline constexpr std::array<std::string_view, kNumPlaneClasses> kPlaneNames = {"FASP", "FFSP", "FTSP",
                                                                             "OTHER"};

inline std::string_view to_string(PlaneClass c) { return kPlaneNames.at(static_cast<std::size_t>(c)); }

inline std::optional<PlaneClass> parse_plane(std::string_view s) {
  for (std::size_t i = 0; i < kPlaneNames.size(); ++i)
    if (kPlaneNames[i] == s) return static_cast<PlaneClass>(i);
  return std::nullopt;
}

inline PlaneClass plane_from_index(std::size_t i) {
  if (i >= kNumPlaneClasses) throw ContractError("plane class index out of range: " + std::to_string(i));
  return static_cast<PlaneClass>(i);
}

enum class ConceptLabel { SB, UV, SP, CSP, LT, RT, FM, MP, UNKNOWN };

inline constexpr std::array<std::string_view, 9> kConceptNames = {"SB", "UV", "SP", "CSP", "LT",
                                                                "RT", "FM", "MP", "UNKNOWN"};

inline std::string_view to_string(ConceptLabel c) { return kConceptNames.at(static_cast<std::size_t>(c)); }

inline std::optional<ConceptLabel> parse_concept(std::string_view s) {
  for (std::size_t i = 0; i < kConceptNames.size(); ++i)
    if (kConceptNames[i] == s) return static_cast<ConceptLabel>(i);
  return std::nullopt;
}

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct ConceptNode {
  int id = 0;
  ConceptLabel label = ConceptLabel::UNKNOWN;
  Point2 centroid;  // normalized image coordinates in [0,1]
  std::vector<double> features;
};

/// Displacement from source to destination centroid; doubles as the initial
/// edge feature vector (dx, dy, distance, angle).
struct SpatialRelation {
  double dx = 0.0;
  double dy = 0.0;
  double distance = 0.0;
  double angle = 0.0;  // radians in (-pi, pi]

  static SpatialRelation between(Point2 src, Point2 dst) {
    SpatialRelation r;
    r.dx = dst.x - src.x;
    r.dy = dst.y - src.y;
    r.distance = std::sqrt(r.dx * r.dx + r.dy * r.dy);
    r.angle = std::atan2(r.dy, r.dx);
    if (r.angle <= -std::numbers::pi) r.angle = std::numbers::pi;
    return r;
  }

  std::array<double, 4> as_array() const { return {dx, dy, distance, angle}; }
};

inline constexpr std::size_t kSpatialDim = 4;

struct ConceptEdge {
  int src = 0;
  int dst = 0;
  SpatialRelation spatial;
  double alpha = 1.0;  // prior coefficient weighting the source's message
};

struct ConceptGraph {
  std::vector<ConceptNode> nodes;
  std::vector<ConceptEdge> edges;
  PlaneClass label = PlaneClass::OTHER;

  std::size_t feature_dim() const { return nodes.empty() ? 0 : nodes.front().features.size(); }
};

/// Prior coefficients keyed by ordered (source concept, destination concept).
/// Lookups of unlisted pairs fall back to `default_value`.
class PriorTable {
 public:
  PriorTable() = default;
  explicit PriorTable(double default_value) { set_default(default_value); }

  void set_default(double v) {
    check(v, "default");
    default_ = v;
  }
  void set(ConceptLabel src, ConceptLabel dst, double v) {
    check(v, std::string(to_string(src)) + "->" + std::string(to_string(dst)));
    values_[{src, dst}] = v;
  }
  double lookup(ConceptLabel src, ConceptLabel dst) const {
    auto it = values_.find({src, dst});
    return it == values_.end() ? default_ : it->second;
  }
  double default_value() const noexcept { return default_; }
  const std::map<std::pair<ConceptLabel, ConceptLabel>, double>& entries() const noexcept {
    return values_;
  }

 private:
  static void check(double v, const std::string& key) {
    if (!std::isfinite(v) || v < 0.0)
      throw ValidationError("prior coefficient for " + key + " must be finite and >= 0");
  }

  double default_ = 1.0;
  std::map<std::pair<ConceptLabel, ConceptLabel>, double> values_;
};

struct Violation {
  std::string kind;
  std::string detail;
  std::optional<std::size_t> node_index;
  std::optional<std::size_t> edge_index;
};

inline constexpr double kDistanceTolerance = 1e-9;

/// Every invariant violation in `graph`. `feature_dim` defaults to the first
/// node's feature length.
inline std::vector<Violation> validate(const ConceptGraph& graph,
                                       std::optional<std::size_t> feature_dim = std::nullopt) {
  std::vector<Violation> out;
  const std::size_t n = graph.nodes.size();
  if (n == 0) out.push_back({"empty graph", "graph has no nodes", {}, {}});
  const std::size_t dim = feature_dim.value_or(graph.feature_dim());

  std::set<int> ids;
  for (std::size_t i = 0; i < n; ++i) {
    const ConceptNode& node = graph.nodes[i];
    if (!ids.insert(node.id).second)
      out.push_back({"duplicate node id", "id " + std::to_string(node.id), i, {}});
    if (node.id < 0 || static_cast<std::size_t>(node.id) >= n)
      out.push_back({"non-contiguous node id", "id " + std::to_string(node.id), i, {}});
    const auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(node.centroid.x) || !in_unit(node.centroid.y))
      out.push_back({"centroid out of range", "centroid outside [0,1]^2", i, {}});
    if (node.features.size() != dim)
      out.push_back({"feature length", "expected " + std::to_string(dim) + ", got " +
                                           std::to_string(node.features.size()),
                     i,
                     {}});
    for (double f : node.features)
      if (!std::isfinite(f)) {
        out.push_back({"non-finite feature", "node features contain NaN/Inf", i, {}});
        break;
      }
  }

  std::set<std::pair<int, int>> seen;
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const ConceptEdge& edge = graph.edges[e];
    if (!ids.contains(edge.src) || !ids.contains(edge.dst)) {
      out.push_back({"dangling endpoint",
                     "edge " + std::to_string(edge.src) + "->" + std::to_string(edge.dst),
                     {},
                     e});
      continue;
    }
    if (edge.src == edge.dst) out.push_back({"self loop", "src == dst", {}, e});
    if (!seen.insert({edge.src, edge.dst}).second)
      out.push_back({"duplicate edge", "repeated (src, dst) pair", {}, e});
    const auto& s = edge.spatial;
    if (!std::isfinite(s.dx) || !std::isfinite(s.dy) || !std::isfinite(s.distance) ||
        !std::isfinite(s.angle)) {
      out.push_back({"non-finite spatial", "spatial features contain NaN/Inf", {}, e});
    } else if (std::abs(s.distance - std::sqrt(s.dx * s.dx + s.dy * s.dy)) > kDistanceTolerance) {
      out.push_back({"inconsistent distance", "distance != sqrt(dx^2 + dy^2)", {}, e});
    }
    if (!std::isfinite(edge.alpha) || edge.alpha < 0.0)
      out.push_back({"negative alpha", "prior coefficient must be >= 0", {}, e});
  }
  return out;
}

inline std::string describe(const std::vector<Violation>& violations) {
  std::string s;
  for (const auto& v : violations) {
    if (!s.empty()) s += "; ";
    s += v.kind;
    if (v.node_index) s += " (node " + std::to_string(*v.node_index) + ")";
    if (v.edge_index) s += " (edge " + std::to_string(*v.edge_index) + ")";
    if (!v.detail.empty()) s += ": " + v.detail;
  }
  return s;
}

/// Builds the directed-complete graph over `nodes`: for every ordered pair
/// (i, j), i != j, one edge with spatial relation dst - src and alpha from
/// `priors`. Nodes are reordered by id.
inline ConceptGraph build_graph(std::vector<ConceptNode> nodes, const PriorTable& priors,
                                PlaneClass label = PlaneClass::OTHER) {
  if (nodes.empty()) throw ValidationError("build_graph: at least one node is required");
  std::sort(nodes.begin(), nodes.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (i > 0 && nodes[i].id == nodes[i - 1].id)
      throw ValidationError("build_graph: duplicate node id " + std::to_string(nodes[i].id));
    const Point2 c = nodes[i].centroid;
    if (!(c.x >= 0.0 && c.x <= 1.0 && c.y >= 0.0 && c.y <= 1.0))
      throw ValidationError("build_graph: centroid of node " + std::to_string(nodes[i].id) +
                            " outside [0,1]^2");
  }
  ConceptGraph g;
  g.label = label;
  g.nodes = std::move(nodes);
  for (const auto& src : g.nodes)
    for (const auto& dst : g.nodes) {
      if (src.id == dst.id) continue;
      g.edges.push_back({src.id, dst.id, SpatialRelation::between(src.centroid, dst.centroid),
                         priors.lookup(src.label, dst.label)});
    }
  if (auto v = validate(g); !v.empty()) throw ValidationError("build_graph: " + describe(v));
  return g;
}

/// Copy of `graph` without node `index` and its incident edges; remaining
/// node ids are renumbered contiguously in their original order.
inline ConceptGraph remove_node(const ConceptGraph& graph, std::size_t index) {
  if (index >= graph.nodes.size()) throw ContractError("remove_node: index out of range");
  const int removed = graph.nodes[index].id;
  std::map<int, int> remap;
  ConceptGraph out;
  out.label = graph.label;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    if (i == index) continue;
    ConceptNode node = graph.nodes[i];
    remap[node.id] = static_cast<int>(out.nodes.size());
    node.id = static_cast<int>(out.nodes.size());
    out.nodes.push_back(std::move(node));
  }
  for (const auto& e : graph.edges) {
    if (e.src == removed || e.dst == removed) continue;
    ConceptEdge copy = e;
    copy.src = remap.at(e.src);
    copy.dst = remap.at(e.dst);
    out.edges.push_back(copy);
  }
  return out;
}

/// Relabels node ids by `perm` (old position i gets new id perm[i]), remaps
/// edges accordingly and stores nodes in new-id order. Edge order is kept.
inline ConceptGraph permute_nodes(const ConceptGraph& graph, const std::vector<std::size_t>& perm) {
  if (perm.size() != graph.nodes.size()) throw ContractError("permute_nodes: size mismatch");
  ConceptGraph out;
  out.label = graph.label;
  out.nodes.resize(graph.nodes.size());
  std::map<int, int> remap;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    ConceptNode node = graph.nodes[i];
    remap[node.id] = static_cast<int>(perm[i]);
    node.id = static_cast<int>(perm[i]);
    out.nodes.at(perm[i]) = std::move(node);
  }
  for (auto e : graph.edges) {
    e.src = remap.at(e.src);
    e.dst = remap.at(e.dst);
    out.edges.push_back(e);
  }
  return out;
}

/// Position of the node with id `id`.
inline std::size_t node_index(const ConceptGraph& graph, int id) {
  for (std::size_t i = 0; i < graph.nodes.size(); ++i)
    if (graph.nodes[i].id == id) return i;
  throw ContractError("no node with id " + std::to_string(id));
}

}  // namespace cgn
