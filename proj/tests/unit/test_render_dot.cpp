#include <gtest/gtest.h>

#include "cgn/render_dot.hpp"

using namespace cgn;

namespace {

ConceptGraph three_nodes() {
  std::vector<ConceptNode> nodes;
  const ConceptLabel labels[3] = {ConceptLabel::SB, ConceptLabel::UV, ConceptLabel::SP};
  for (int i = 0; i < 3; ++i) {
    ConceptNode n;
    n.id = i;
    n.label = labels[i];
    n.centroid = {0.2 + 0.3 * i, 0.5};
    n.features = {0.1 * i, 0.3};
    nodes.push_back(n);
  }
  return build_graph(std::move(nodes), PriorTable(1.0), PlaneClass::FASP);
}

Explanation scores(std::vector<double> s) {
  Explanation e;
  e.method = Method::IG;
  e.target_class = 0;
  e.node_scores = std::move(s);
  return e;
}

std::string fill_of(const std::string& dot, int id) {
  const auto at = dot.find("  n" + std::to_string(id) + " [label=");
  if (at == std::string::npos) return "";
  const auto f = dot.find("fillcolor=\"", at);
  return dot.substr(f + 11, 7);
}

}  // namespace

TEST(RenderDot, EndpointsArePureBlueAndRed) {
  const auto dot = render_dot(three_nodes(), scores({0.4, -1.5, 2.5}));
  EXPECT_EQ(fill_of(dot, 1), "#0000FF");
  EXPECT_EQ(fill_of(dot, 2), "#FF0000");
  // (0.4 + 1.5) / 4 = 0.475 of the way: round(121.125) = 121 = 0x79, round(133.875) = 134 = 0x86
  EXPECT_EQ(fill_of(dot, 0), "#790086");
}

TEST(RenderDot, EqualScoresAreMidScale) {
  const auto dot = render_dot(three_nodes(), scores({0.7, 0.7, 0.7}));
  // 127.5 rounds away from zero on both channels
  for (int i = 0; i < 3; ++i) EXPECT_EQ(fill_of(dot, i), "#800080");
}

TEST(RenderDot, LabelsCarryConceptAndScore) {
  const auto dot = render_dot(three_nodes(), scores({0.12345, -0.0001, 2.0}));
  EXPECT_NE(dot.find("label=\"SB\\n0.123\""), std::string::npos);
  EXPECT_NE(dot.find("label=\"UV\\n0.000\""), std::string::npos);
  EXPECT_NE(dot.find("label=\"SP\\n2.000\""), std::string::npos);
  EXPECT_EQ(dot.rfind("digraph concept_graph {", 0), 0u);
  EXPECT_EQ(dot.back(), '\n');
}

TEST(RenderDot, EdgeLabelsOnlyWhenPresent) {
  const auto g = three_nodes();
  auto e = scores({1, 2, 3});
  const auto plain = render_dot(g, e);
  EXPECT_EQ(plain.find("-> n1 [label="), std::string::npos);
  EXPECT_NE(plain.find("n0 -> n1;"), std::string::npos);
  e.edge_scores = std::vector<double>(g.edges.size(), 0.0);
  (*e.edge_scores)[0] = 1.25;
  const auto labelled = render_dot(g, e);
  const std::string first = "n" + std::to_string(g.edges[0].src) + " -> n" + std::to_string(g.edges[0].dst) +
                            " [label=\"1.250\"];";
  EXPECT_NE(labelled.find(first), std::string::npos);
}

TEST(RenderDot, DeterministicBytes) {
  const auto g = three_nodes();
  const auto e = scores({0.3, 0.1, 0.2});
  EXPECT_EQ(render_dot(g, e), render_dot(g, e));
}

TEST(RenderDot, MismatchIsContractError) {
  const auto g = three_nodes();
  EXPECT_THROW(render_dot(g, scores({1.0, 2.0})), ContractError);
  auto e = scores({1, 2, 3});
  e.edge_scores = std::vector<double>{1.0};
  EXPECT_THROW(render_dot(g, e), ContractError);
}

TEST(HeatColor, LinearRamp) {
  EXPECT_EQ(heat_color(0.0), "#0000FF");
  EXPECT_EQ(heat_color(1.0), "#FF0000");
  EXPECT_EQ(heat_color(-3.0), "#0000FF");
  EXPECT_EQ(heat_color(0.2), "#3300CC");
  const auto t = normalize_scores({2.0, 4.0, 3.0});
  EXPECT_EQ(t, (std::vector<double>{0.0, 1.0, 0.5}));
}
