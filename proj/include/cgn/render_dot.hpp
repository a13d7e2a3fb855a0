// Graphviz DOT rendering of an explained concept graph: node fill runs from
// blue (lowest score) to red (highest) after min-max normalization.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "cgn/concept_graph.hpp"
#include "cgn/errors.hpp"
#include "cgn/explainers.hpp"

namespace cgn {

/// Min-max normalized position of each score; all-equal scores map to 0.5.
inline std::vector<double> normalize_scores(const std::vector<double>& scores) {
  std::vector<double> t(scores.size(), 0.5);
  if (scores.empty()) return t;
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  if (!(*hi > *lo)) return t;
  for (std::size_t i = 0; i < scores.size(); ++i) t[i] = (scores[i] - *lo) / (*hi - *lo);
  return t;
}

/// "#RRGGBB" for t in [0,1]: (255 t, 0, 255 (1 - t)), rounded.
inline std::string heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(255.0 * t));
  const int b = static_cast<int>(std::lround(255.0 * (1.0 - t)));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02X%02X%02X", r, 0, b);
  return buf;
}

inline std::string format_score(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s = buf;
  return s == "-0.000" ? "0.000" : s;
}

inline std::string render_dot(const ConceptGraph& graph, const Explanation& ex) {
  if (ex.node_scores.size() != graph.nodes.size())
    throw ContractError("render_dot: " + std::to_string(ex.node_scores.size()) + " node scores for " +
                        std::to_string(graph.nodes.size()) + " nodes");
  if (ex.edge_scores && ex.edge_scores->size() != graph.edges.size())
    throw ContractError("render_dot: " + std::to_string(ex.edge_scores->size()) + " edge scores for " +
                        std::to_string(graph.edges.size()) + " edges");
  const auto t = normalize_scores(ex.node_scores);
  std::string out = "digraph concept_graph {\n";
  out += "  graph [label=\"" + std::string(to_string(graph.label)) + " " + std::string(to_string(ex.method)) +
         " class " + std::to_string(ex.target_class) + "\"];\n";
  out += "  node [shape=ellipse, style=filled, fontcolor=white];\n";
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const auto& n = graph.nodes[i];
    out += "  n" + std::to_string(n.id) + " [label=\"" + std::string(to_string(n.label)) + "\\n" +
           format_score(ex.node_scores[i]) + "\", fillcolor=\"" + heat_color(t[i]) + "\"];\n";
  }
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto& edge = graph.edges[e];
    out += "  n" + std::to_string(edge.src) + " -> n" + std::to_string(edge.dst);
    if (ex.edge_scores) out += " [label=\"" + format_score((*ex.edge_scores)[e]) + "\"]";
    out += ";\n";
  }
  out += "}\n";
  return out;
}

}  // namespace cgn
