// Post-hoc attribution for graph classifiers: gradient x input saliency,
// integrated gradients, and Grad-CAM over a layer's node activations, plus a
// node-deletion faithfulness probe.
//
// Explainers are templates over any model exposing
//   ForwardTrace forward(Tape&, const GraphTensors&, Var x, Var e) const
//   std::size_t num_classes() const
// The explained score is the pre-softmax logit of the target class.
#pragma once

#include <algorithm>
#include <concepts>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cgn/concept_graph.hpp"
#include "cgn/errors.hpp"
#include "cgn/gcn_model.hpp"
#include "cgn/tensor.hpp"
#include "json.hpp"

namespace cgn {

template <class M>
concept GraphClassifier = requires(const M& m, Tape& t, const GraphTensors& g, Var x, Var e) {
  { m.forward(t, g, x, e) } -> std::same_as<ForwardTrace>;
  { m.num_classes() } -> std::convertible_to<std::size_t>;
};

enum class Method { SA, IG, GRADCAM };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::SA: return "SA";
    case Method::IG: return "IG";
    case Method::GRADCAM: return "GRADCAM";
  }
  return "?";
}

struct Explanation {
  Method method = Method::SA;
  std::size_t target_class = 0;
  std::vector<double> node_scores;
  std::optional<std::vector<double>> edge_scores;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
};

inline nlohmann::ordered_json explanation_to_json(const Explanation& e) {
  nlohmann::ordered_json j;
  j["method"] = std::string(to_string(e.method));
  j["target_class"] = e.target_class;
  j["node_scores"] = e.node_scores;
  j["edge_scores"] = e.edge_scores ? nlohmann::ordered_json(*e.edge_scores) : nlohmann::ordered_json(nullptr);
  j["meta"] = e.meta;
  return j;
}

/// Accepts either json flavour; an ordered document keeps its meta key order.
template <class J>
Explanation explanation_from_json(const J& j) {
  Explanation e;
  try {
    const auto m = j.at("method").template get<std::string>();
    if (m == "SA") e.method = Method::SA;
    else if (m == "IG") e.method = Method::IG;
    else if (m == "GRADCAM") e.method = Method::GRADCAM;
    else throw SchemaError("explanation: unknown method '" + m + "'");
    e.target_class = j.at("target_class").template get<std::size_t>();
    e.node_scores = j.at("node_scores").template get<std::vector<double>>();
    if (!j.at("edge_scores").is_null()) e.edge_scores = j.at("edge_scores").template get<std::vector<double>>();
    if (j.contains("meta")) e.meta = nlohmann::ordered_json::parse(j.at("meta").dump());
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError(std::string("explanation: ") + ex.what());
  }
  return e;
}

namespace detail {

template <GraphClassifier M>
void check_target(const M& model, std::size_t c) {
  if (c >= model.num_classes())
    throw ContractError("target class " + std::to_string(c) + " out of range for " +
                        std::to_string(model.num_classes()) + " classes");
}

struct InputGradients {
  double score = 0.0;
  Tensor node;  // d score / d X
  Tensor edge;  // d score / d E
};

template <GraphClassifier M>
InputGradients input_gradients(const M& model, const GraphTensors& g, const Tensor& x, const Tensor& e,
                               std::size_t c) {
  Tape tape;
  Var xv = tape.borrow(x, true);
  Var ev = tape.borrow(e, true);
  Var y = pick(model.forward(tape, g, xv, ev).logits, c);
  tape.backward(y);
  return {y.value().item(), tape.gradient(xv), tape.gradient(ev)};
}

/// Per-column sums of a (features x items) elementwise product.
inline std::vector<double> column_dot(const Tensor& a, const Tensor& b) {
  std::vector<double> out(a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out[c] += a.at(r, c) * b.at(r, c);
  return out;
}

template <GraphClassifier M>
double logit(const M& model, const GraphTensors& g, std::size_t c) {
  Tape tape;
  Var x = tape.borrow(g.node_features, false);
  Var e = tape.borrow(g.edge_features, false);
  return model.forward(tape, g, x, e).logits.value().data.at(c);
}

}  // namespace detail

/// Target-class logit for `graph`.
template <GraphClassifier M>
double class_logit(const M& model, const ConceptGraph& graph, std::size_t c) {
  detail::check_target(model, c);
  return detail::logit(model, to_tensors(graph), c);
}

struct SaOptions {
  /// Score nodes by the squared gradient norm instead of gradient . input.
  bool squared_norm = false;
};

template <GraphClassifier M>
Explanation explain_sa(const M& model, const ConceptGraph& graph, std::size_t c, SaOptions opt = {}) {
  detail::check_target(model, c);
  const GraphTensors g = to_tensors(graph);
  const auto grads = detail::input_gradients(model, g, g.node_features, g.edge_features, c);
  Explanation ex;
  ex.method = Method::SA;
  ex.target_class = c;
  if (opt.squared_norm) {
    ex.node_scores = detail::column_dot(grads.node, grads.node);
    ex.edge_scores = detail::column_dot(grads.edge, grads.edge);
  } else {
    ex.node_scores = detail::column_dot(grads.node, g.node_features);
    ex.edge_scores = detail::column_dot(grads.edge, g.edge_features);
  }
  ex.meta["variant"] = opt.squared_norm ? "squared_norm" : "gradient_x_input";
  ex.meta["score"] = grads.score;
  return ex;
}

enum class IntegrationRule { LeftRiemann, Trapezoid, Simpson };

inline std::string_view to_string(IntegrationRule r) {
  switch (r) {
    case IntegrationRule::LeftRiemann: return "left-riemann";
    case IntegrationRule::Trapezoid: return "trapezoid";
    case IntegrationRule::Simpson: return "simpson";
  }
  return "?";
}

inline std::optional<IntegrationRule> parse_integration_rule(std::string_view s) {
  if (s == "left-riemann") return IntegrationRule::LeftRiemann;
  if (s == "trapezoid") return IntegrationRule::Trapezoid;
  if (s == "simpson") return IntegrationRule::Simpson;
  return std::nullopt;
}

struct IgConfig {
  /// Baseline features on the same topology; all-zero when absent.
  std::optional<ConceptGraph> baseline;
  std::size_t steps = 50;
  IntegrationRule rule = IntegrationRule::Trapezoid;
};

/// Integrated gradients along the straight path from the baseline to the
/// input, over node features and initial edge features jointly. meta holds
/// the score difference and the completeness residual.
template <GraphClassifier M>
Explanation explain_ig(const M& model, const ConceptGraph& graph, std::size_t c, const IgConfig& cfg = {}) {
  detail::check_target(model, c);
  if (cfg.steps < 1) throw ContractError("IG needs at least one step");
  if (cfg.rule == IntegrationRule::Simpson && cfg.steps % 2)
    throw ContractError("IG simpson rule needs an even step count");
  const GraphTensors g = to_tensors(graph);
  Tensor base_x = Tensor::zeros(g.node_features.shape);
  Tensor base_e = Tensor::zeros(g.edge_features.shape);
  if (cfg.baseline) {
    const ConceptGraph& b = *cfg.baseline;
    bool same = b.nodes.size() == graph.nodes.size() && b.edges.size() == graph.edges.size();
    for (std::size_t i = 0; same && i < b.edges.size(); ++i)
      same = b.edges[i].src == graph.edges[i].src && b.edges[i].dst == graph.edges[i].dst;
    for (std::size_t i = 0; same && i < b.nodes.size(); ++i) same = b.nodes[i].id == graph.nodes[i].id;
    if (!same || b.feature_dim() != graph.feature_dim())
      throw ContractError("IG baseline topology differs from the input graph");
    const GraphTensors bt = to_tensors(b);
    base_x = bt.node_features;
    base_e = bt.edge_features;
  }

  const std::size_t m = cfg.steps;
  std::vector<std::pair<double, double>> nodes;  // (alpha, weight)
  if (cfg.rule == IntegrationRule::Trapezoid) {
    for (std::size_t k = 0; k <= m; ++k)
      nodes.emplace_back(static_cast<double>(k) / static_cast<double>(m),
                         (k == 0 || k == m ? 0.5 : 1.0) / static_cast<double>(m));
  } else if (cfg.rule == IntegrationRule::Simpson) {
    // composite 1-4-2-4-...-4-1 weights over m intervals
    for (std::size_t k = 0; k <= m; ++k)
      nodes.emplace_back(static_cast<double>(k) / static_cast<double>(m),
                         (k == 0 || k == m ? 1.0 : k % 2 ? 4.0 : 2.0) / (3.0 * static_cast<double>(m)));
  } else {
    for (std::size_t k = 0; k < m; ++k)
      nodes.emplace_back(static_cast<double>(k) / static_cast<double>(m), 1.0 / static_cast<double>(m));
  }

  Tensor dx = g.node_features, de = g.edge_features;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] -= base_x.data[i];
  for (std::size_t i = 0; i < de.size(); ++i) de.data[i] -= base_e.data[i];

  Tensor avg_x = Tensor::zeros(dx.shape), avg_e = Tensor::zeros(de.shape);
  Tensor px = base_x, pe = base_e;
  for (const auto& [alpha, weight] : nodes) {
    for (std::size_t i = 0; i < px.size(); ++i) px.data[i] = base_x.data[i] + alpha * dx.data[i];
    for (std::size_t i = 0; i < pe.size(); ++i) pe.data[i] = base_e.data[i] + alpha * de.data[i];
    const auto grads = detail::input_gradients(model, g, px, pe, c);
    for (std::size_t i = 0; i < avg_x.size(); ++i) avg_x.data[i] += weight * grads.node.data[i];
    for (std::size_t i = 0; i < avg_e.size(); ++i) avg_e.data[i] += weight * grads.edge.data[i];
  }

  Explanation ex;
  ex.method = Method::IG;
  ex.target_class = c;
  ex.node_scores = detail::column_dot(avg_x, dx);
  ex.edge_scores = detail::column_dot(avg_e, de);

  GraphTensors baseline_g = g;
  baseline_g.node_features = base_x;
  baseline_g.edge_features = base_e;
  const double delta = detail::logit(model, g, c) - detail::logit(model, baseline_g, c);
  double total = 0.0;
  for (double s : ex.node_scores) total += s;
  for (double s : *ex.edge_scores) total += s;
  ex.meta["baseline"] = cfg.baseline ? "custom" : "zero";
  ex.meta["steps"] = m;
  ex.meta["rule"] = std::string(to_string(cfg.rule));
  ex.meta["score_delta"] = delta;
  ex.meta["attribution_sum"] = total;
  ex.meta["completeness_residual"] = std::abs(total - delta);
  return ex;
}

/// Grad-CAM on a (channels x nodes) activation matrix and its gradient:
/// w_k = mean over nodes of the gradient, s_i = ReLU(sum_k w_k a_{k,i}).
inline std::vector<double> gradcam_scores(const Tensor& activations, const Tensor& gradients) {
  if (activations.shape != gradients.shape || activations.rank() != 2)
    throw DimensionError("gradcam: activation and gradient shapes differ");
  const std::size_t channels = activations.rows(), n = activations.cols();
  std::vector<double> w(channels, 0.0);
  for (std::size_t k = 0; k < channels; ++k) {
    for (std::size_t i = 0; i < n; ++i) w[k] += gradients.at(k, i);
    w[k] /= static_cast<double>(n);
  }
  std::vector<double> s(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < channels; ++k) acc += w[k] * activations.at(k, i);
    s[i] = acc > 0.0 ? acc : 0.0;
  }
  return s;
}

/// `layer` defaults to the last layer producing node states.
template <GraphClassifier M>
Explanation explain_gradcam(const M& model, const ConceptGraph& graph, std::size_t c,
                            std::optional<std::size_t> layer = std::nullopt) {
  detail::check_target(model, c);
  const GraphTensors g = to_tensors(graph);
  Tape tape;
  Var x = tape.borrow(g.node_features, true);
  Var e = tape.borrow(g.edge_features, true);
  const ForwardTrace trace = model.forward(tape, g, x, e);
  if (trace.node_states.empty()) throw ContractError("gradcam: model exposes no layer activations");
  const std::size_t l = layer.value_or(trace.node_states.size() - 1);
  if (l >= trace.node_states.size())
    throw ContractError("gradcam: layer " + std::to_string(l) + " out of range (" +
                        std::to_string(trace.node_states.size()) + " layers)");
  Var y = pick(trace.logits, c);
  tape.backward(y);
  Explanation ex;
  ex.method = Method::GRADCAM;
  ex.target_class = c;
  ex.node_scores = gradcam_scores(trace.node_states[l].value(), tape.gradient(trace.node_states[l]));
  ex.meta["layer"] = l;
  return ex;
}

struct FaithfulnessResult {
  std::size_t top_node = 0;
  std::size_t random_node = 0;
  double delta_top = 0.0;     // logit(full) - logit(without top node)
  double delta_random = 0.0;  // logit(full) - logit(without random node)
};

/// Deletes the highest-scoring node (ties to the lowest index) and, separately,
/// a seeded uniformly chosen other node, reporting the target-logit drops.
template <GraphClassifier M>
FaithfulnessResult faithfulness_probe(const M& model, const ConceptGraph& graph, const Explanation& ex,
                                      std::uint64_t seed = 0) {
  const std::size_t n = graph.nodes.size();
  if (n < 2) throw ContractError("faithfulness_probe: graph needs at least two nodes");
  if (ex.node_scores.size() != n) throw ContractError("faithfulness_probe: explanation does not match graph");
  detail::check_target(model, ex.target_class);
  FaithfulnessResult r;
  r.top_node = argmax(ex.node_scores);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_other(0, n - 2);
  r.random_node = pick_other(rng);
  if (r.random_node >= r.top_node) ++r.random_node;
  const std::size_t c = ex.target_class;
  const double full = class_logit(model, graph, c);
  r.delta_top = full - class_logit(model, remove_node(graph, r.top_node), c);
  r.delta_random = full - class_logit(model, remove_node(graph, r.random_node), c);
  return r;
}

}  // namespace cgn
