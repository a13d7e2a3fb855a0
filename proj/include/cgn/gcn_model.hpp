// Edge-featured GraphConv classifier with mean-pool readout and MLP head.
//
// Node features are held column-per-node: X is (features x nodes), E is
// (edge features x edges). One layer computes
//
//   X' = act(W1 X + b + W3 [ (W2 X) G ; E ] S)      E' = W4 E
//
// with act softplus by default or relu.
// where G (nodes x edges) carries alpha_e at (src(e), e) and S (edges x nodes)
// carries 1 at (e, dst(e)). Column e of (W2 X) G is alpha_e W2 x_src(e), so the
// product sums, for each node, W3 concat(alpha_ji W2 x_j, e_ji) over in-edges.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <string>
#include <vector>

#include "cgn/concept_graph.hpp"
#include "cgn/dataset_io.hpp"
#include "cgn/errors.hpp"
#include "cgn/tensor.hpp"

namespace cgn {

enum class Activation { Relu, Softplus };

inline std::string_view to_string(Activation a) { return a == Activation::Relu ? "relu" : "softplus"; }

inline std::optional<Activation> parse_activation(std::string_view s) {
  if (s == "relu") return Activation::Relu;
  if (s == "softplus") return Activation::Softplus;
  return std::nullopt;
}

inline Var activate(Activation a, Var v) { return a == Activation::Relu ? relu(v) : softplus(v); }

struct ModelConfig {
  std::size_t feature_dim = 16;
  std::size_t hidden = 64;
  std::size_t message_dim = 64;
  std::size_t edge_dim = kSpatialDim;
  std::size_t layers = 3;
  std::size_t readout_hidden = 64;
  std::size_t classes = kNumPlaneClasses;
  Activation activation = Activation::Softplus;

  void check() const {
    if (feature_dim == 0 || hidden == 0 || message_dim == 0 || edge_dim == 0 || layers == 0 ||
        readout_hidden == 0 || classes == 0)
      throw ConfigError("model widths and depth must all be >= 1");
  }
};

struct GraphConvLayer {
  Tensor w_self;      // W1: out x in
  Tensor w_neighbor;  // W2: msg x in
  Tensor w_message;   // W3: out x (msg + edge_in)
  Tensor w_edge;      // W4: edge_out x edge_in
  Tensor bias;        // out

  std::size_t in_dim() const { return w_self.cols(); }
  std::size_t out_dim() const { return w_self.rows(); }
  std::size_t message_dim() const { return w_neighbor.rows(); }
  std::size_t edge_in() const { return w_edge.cols(); }
  std::size_t edge_out() const { return w_edge.rows(); }

  void check(std::size_t index) const {
    const auto fail = [&](const std::string& what) {
      throw DimensionError("layer " + std::to_string(index) + ": " + what);
    };
    if (w_self.rank() != 2 || w_neighbor.rank() != 2 || w_message.rank() != 2 ||
        w_edge.rank() != 2 || bias.rank() != 1)
      fail("weights must be matrices and bias a vector");
    if (w_neighbor.cols() != in_dim()) fail("W2 input width differs from W1");
    if (w_message.rows() != out_dim() || w_message.cols() != message_dim() + edge_in())
      fail("W3 must be out x (msg + edge_in)");
    if (bias.size() != out_dim()) fail("bias length differs from output width");
  }
};

struct Readout {
  Tensor hidden_weight;  // readout_hidden x hidden
  Tensor hidden_bias;
  Tensor out_weight;  // classes x readout_hidden
  Tensor out_bias;
};

/// Per-graph constant tensors consumed by the model.
struct GraphTensors {
  Tensor node_features;  // D x n
  Tensor edge_features;  // 4 x m
  Tensor gather;         // n x m, alpha at (src, e)
  Tensor scatter;        // m x n, 1 at (e, dst)
  std::vector<ConceptLabel> labels;
  std::vector<std::pair<std::size_t, std::size_t>> endpoints;  // (src, dst) positions

  std::size_t num_nodes() const { return labels.size(); }
  std::size_t num_edges() const { return endpoints.size(); }
};

inline GraphTensors to_tensors(const ConceptGraph& g) {
  const std::size_t n = g.nodes.size();
  const std::size_t m = g.edges.size();
  if (n == 0) throw ContractError("empty graph");
  const std::size_t d = g.feature_dim();
  GraphTensors t;
  t.node_features = Tensor::zeros({d, n});
  t.edge_features = Tensor::zeros({kSpatialDim, m});
  t.gather = Tensor::zeros({n, m});
  t.scatter = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = g.nodes[i].features;
    if (f.size() != d) throw DimensionError("node " + std::to_string(i) + " feature length differs");
    for (std::size_t k = 0; k < d; ++k) t.node_features.at(k, i) = f[k];
    t.labels.push_back(g.nodes[i].label);
  }
  for (std::size_t e = 0; e < m; ++e) {
    const auto& edge = g.edges[e];
    const std::size_t s = node_index(g, edge.src);
    const std::size_t r = node_index(g, edge.dst);
    const auto sp = edge.spatial.as_array();
    for (std::size_t k = 0; k < kSpatialDim; ++k) t.edge_features.at(k, e) = sp[k];
    t.gather.at(s, e) = edge.alpha;
    t.scatter.at(e, r) = 1.0;
    t.endpoints.emplace_back(s, r);
  }
  return t;
}

struct ForwardTrace {
  Var logits;
  std::vector<Var> node_states;  // post-activation output of each layer
  std::vector<Var> edge_states;  // edge features after each layer's update
  Var pooled;
};

struct PredictionScores {
  std::vector<double> logits;
  std::vector<double> probabilities;
  std::size_t predicted = 0;
};

/// Argmax with ties going to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline PredictionScores scores_from_logits(std::vector<double> logits) {
  PredictionScores s;
  s.probabilities = softmax_values(logits);
  s.predicted = argmax(logits);
  s.logits = std::move(logits);
  return s;
}

class GcnModel {
 public:
  ModelConfig config;
  std::uint64_t seed = 0;
  std::vector<GraphConvLayer> layers;
  Readout readout;

  std::size_t num_classes() const { return config.classes; }
  std::size_t num_layers() const { return layers.size(); }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> p;
    for (auto& l : layers) {
      p.push_back(&l.w_self);
      p.push_back(&l.w_neighbor);
      p.push_back(&l.w_message);
      p.push_back(&l.w_edge);
      p.push_back(&l.bias);
    }
    p.push_back(&readout.hidden_weight);
    p.push_back(&readout.hidden_bias);
    p.push_back(&readout.out_weight);
    p.push_back(&readout.out_bias);
    return p;
  }
  std::vector<const Tensor*> parameters() const {
    auto p = const_cast<GcnModel*>(this)->parameters();
    return {p.begin(), p.end()};
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> names;
    for (std::size_t l = 0; l < layers.size(); ++l)
      for (const char* w : {"W1", "W2", "W3", "W4", "b"})
        names.push_back("layers." + std::to_string(l) + "." + w);
    for (const char* w : {"M1", "c1", "M2", "c2"}) names.push_back(std::string("readout.") + w);
    return names;
  }

  /// Runs every layer, mean-pools and applies the readout. Parameters are
  /// borrowed onto the tape; when `param_vars` is given they are recorded with
  /// requires_grad and their Vars are appended in parameters() order.
  ForwardTrace forward(Tape& tape, const GraphTensors& g, Var x, Var e,
                       std::vector<Var>* param_vars = nullptr) const {
    if (g.num_nodes() == 0) throw ContractError("empty graph");
    if (x.shape().size() != 2 || x.shape()[0] != config.feature_dim)
      throw DimensionError("node features must be " + std::to_string(config.feature_dim) +
                           " x n, got " + shape_str(x.shape()));
    const bool track = param_vars != nullptr;
    const auto bind = [&](const Tensor& t) {
      Var v = tape.borrow(t, track);
      if (track) param_vars->push_back(v);
      return v;
    };
    Var gather = tape.borrow(g.gather, false);
    Var scatter = tape.borrow(g.scatter, false);

    ForwardTrace trace;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const GraphConvLayer& layer = layers[i];
      Var w1 = bind(layer.w_self), w2 = bind(layer.w_neighbor), w3 = bind(layer.w_message),
          w4 = bind(layer.w_edge), b = bind(layer.bias);
      try {
        Var self = matmul(w1, x);
        Var messages = matmul(matmul(w2, x), gather);
        Var incoming = matmul(matmul(w3, concat(messages, e, 0)), scatter);
        x = activate(config.activation, add_bias(add(self, incoming), b));
        e = matmul(w4, e);
      } catch (const DimensionError& err) {
        throw DimensionError("layer " + std::to_string(i) + ": " + err.what());
      }
      trace.node_states.push_back(x);
      trace.edge_states.push_back(e);
    }
    Var m1 = bind(readout.hidden_weight), c1 = bind(readout.hidden_bias),
        m2 = bind(readout.out_weight), c2 = bind(readout.out_bias);
    trace.pooled = mean(x, 1);
    Var h = activate(config.activation, add(matmul(m1, trace.pooled), c1));
    trace.logits = add(matmul(m2, h), c2);
    return trace;
  }

  PredictionScores predict(const GraphTensors& g) const {
    Tape tape;
    Var x = tape.borrow(g.node_features, false);
    Var e = tape.borrow(g.edge_features, false);
    return scores_from_logits(forward(tape, g, x, e).logits.value().data);
  }
};

namespace detail {

inline Tensor glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t = Tensor::zeros({rows, cols});
  for (double& v : t.data) v = dist(rng);
  return t;
}

}  // namespace detail

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
inline GcnModel init_model(const ModelConfig& config, std::uint64_t seed) {
  config.check();
  GcnModel m;
  m.config = config;
  m.seed = seed;
  std::mt19937_64 rng(seed);
  std::size_t in = config.feature_dim;
  for (std::size_t l = 0; l < config.layers; ++l) {
    GraphConvLayer layer;
    layer.w_self = detail::glorot(config.hidden, in, rng);
    layer.w_neighbor = detail::glorot(config.message_dim, in, rng);
    layer.w_message = detail::glorot(config.hidden, config.message_dim + config.edge_dim, rng);
    layer.w_edge = detail::glorot(config.edge_dim, config.edge_dim, rng);
    layer.bias = Tensor::zeros({config.hidden});
    m.layers.push_back(std::move(layer));
    in = config.hidden;
  }
  m.readout.hidden_weight = detail::glorot(config.readout_hidden, config.hidden, rng);
  m.readout.hidden_bias = Tensor::zeros({config.readout_hidden});
  m.readout.out_weight = detail::glorot(config.classes, config.readout_hidden, rng);
  m.readout.out_bias = Tensor::zeros({config.classes});
  return m;
}

/// One layer's node update applied outside a model.
inline Tensor layer_forward(const GraphConvLayer& layer, const Tensor& x, const Tensor& e,
                            const Tensor& gather, const Tensor& scatter,
                            Activation activation = Activation::Relu, std::size_t index = 0) {
  layer.check(index);
  Tape tape;
  try {
    Var xv = tape.borrow(x, false), ev = tape.borrow(e, false);
    Var self = matmul(tape.borrow(layer.w_self, false), xv);
    Var messages = matmul(matmul(tape.borrow(layer.w_neighbor, false), xv), tape.borrow(gather, false));
    Var incoming = matmul(matmul(tape.borrow(layer.w_message, false), concat(messages, ev, 0)),
                          tape.borrow(scatter, false));
    return activate(activation, add_bias(add(self, incoming), tape.borrow(layer.bias, false))).value();
  } catch (const DimensionError& err) {
    throw DimensionError("layer " + std::to_string(index) + ": " + err.what());
  }
}

inline Tensor edge_update(const GraphConvLayer& layer, const Tensor& e) {
  if (e.rank() != 2 || e.rows() != layer.edge_in())
    throw DimensionError("edge_update: edge features " + shape_str(e.shape) + " do not match W4 " +
                         shape_str(layer.w_edge.shape));
  Tape tape;
  return matmul(tape.borrow(layer.w_edge, false), tape.borrow(e, false)).value();
}

inline PredictionScores readout_predict(const GcnModel& model, const ConceptGraph& graph) {
  if (graph.nodes.empty()) throw ContractError("empty graph");
  if (graph.feature_dim() != model.config.feature_dim)
    throw DimensionError("graph feature dim " + std::to_string(graph.feature_dim()) +
                         " does not match model " + std::to_string(model.config.feature_dim));
  return model.predict(to_tensors(graph));
}

// Checkpoints -----------------------------------------------------------------

namespace detail {

inline OrderedJson tensor_to_json(const Tensor& t) {
  if (t.rank() == 1) return OrderedJson(t.data);
  OrderedJson rows = OrderedJson::array();
  for (std::size_t r = 0; r < t.rows(); ++r)
    rows.push_back(std::vector<double>(t.data.begin() + r * t.cols(), t.data.begin() + (r + 1) * t.cols()));
  return rows;
}

inline Tensor tensor_from_json(const Json& j, const Shape& expected, const std::string& name) {
  std::vector<double> data;
  try {
    if (expected.size() == 1) {
      data = j.get<std::vector<double>>();
    } else {
      for (const auto& row : j) {
        auto r = row.get<std::vector<double>>();
        if (r.size() != expected[1]) throw SchemaError(name + ": ragged row");
        data.insert(data.end(), r.begin(), r.end());
      }
    }
  } catch (const Json::exception&) {
    throw SchemaError(name + ": expected nested numeric arrays");
  }
  if (data.size() != shape_numel(expected))
    throw SchemaError(name + ": expected shape " + shape_str(expected));
  return Tensor(expected, std::move(data));
}

}  // namespace detail

inline OrderedJson config_to_json(const ModelConfig& c) {
  OrderedJson j;
  j["feature_dim"] = c.feature_dim;
  j["hidden"] = c.hidden;
  j["message_dim"] = c.message_dim;
  j["edge_dim"] = c.edge_dim;
  j["layers"] = c.layers;
  j["readout_hidden"] = c.readout_hidden;
  j["classes"] = c.classes;
  j["activation"] = std::string(to_string(c.activation));
  return j;
}

inline ModelConfig config_from_json(const Json& j) {
  ModelConfig c;
  try {
    c.feature_dim = j.at("feature_dim").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.message_dim = j.at("message_dim").get<std::size_t>();
    c.edge_dim = j.at("edge_dim").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.readout_hidden = j.at("readout_hidden").get<std::size_t>();
    c.classes = j.at("classes").get<std::size_t>();
    const auto act = parse_activation(j.value("activation", std::string("relu")));
    if (!act) throw SchemaError("checkpoint config: unknown activation");
    c.activation = *act;
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("checkpoint config: ") + e.what());
  }
  return c;
}

inline OrderedJson to_checkpoint(const GcnModel& m) {
  OrderedJson j;
  j["version"] = 1;
  j["config"] = config_to_json(m.config);
  j["seed"] = m.seed;
  OrderedJson layers = OrderedJson::array();
  for (const auto& l : m.layers) {
    OrderedJson jl;
    jl["W1"] = detail::tensor_to_json(l.w_self);
    jl["W2"] = detail::tensor_to_json(l.w_neighbor);
    jl["W3"] = detail::tensor_to_json(l.w_message);
    jl["W4"] = detail::tensor_to_json(l.w_edge);
    jl["b"] = detail::tensor_to_json(l.bias);
    layers.push_back(std::move(jl));
  }
  j["layers"] = std::move(layers);
  OrderedJson r;
  r["M1"] = detail::tensor_to_json(m.readout.hidden_weight);
  r["c1"] = detail::tensor_to_json(m.readout.hidden_bias);
  r["M2"] = detail::tensor_to_json(m.readout.out_weight);
  r["c2"] = detail::tensor_to_json(m.readout.out_bias);
  j["readout"] = std::move(r);
  return j;
}

inline GcnModel from_checkpoint(const Json& j) {
  if (!j.is_object() || !j.contains("version") || j.at("version") != 1)
    throw SchemaError("checkpoint: missing or unsupported version");
  if (!j.contains("config") || !j.contains("layers") || !j.contains("readout"))
    throw SchemaError("checkpoint: missing config, layers or readout");
  GcnModel m;
  m.config = config_from_json(j.at("config"));
  m.config.check();
  m.seed = j.value("seed", std::uint64_t{0});
  const auto& c = m.config;
  const Json& layers = j.at("layers");
  if (!layers.is_array() || layers.size() != c.layers)
    throw SchemaError("checkpoint: layer count does not match config");
  std::size_t in = c.feature_dim;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Json& jl = layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    GraphConvLayer l;
    try {
      l.w_self = detail::tensor_from_json(jl.at("W1"), {c.hidden, in}, p + "W1");
      l.w_neighbor = detail::tensor_from_json(jl.at("W2"), {c.message_dim, in}, p + "W2");
      l.w_message = detail::tensor_from_json(jl.at("W3"), {c.hidden, c.message_dim + c.edge_dim}, p + "W3");
      l.w_edge = detail::tensor_from_json(jl.at("W4"), {c.edge_dim, c.edge_dim}, p + "W4");
      l.bias = detail::tensor_from_json(jl.at("b"), {c.hidden}, p + "b");
    } catch (const Json::out_of_range& e) {
      throw SchemaError(p + e.what());
    }
    m.layers.push_back(std::move(l));
    in = c.hidden;
  }
  const Json& r = j.at("readout");
  try {
    m.readout.hidden_weight = detail::tensor_from_json(r.at("M1"), {c.readout_hidden, c.hidden}, "readout.M1");
    m.readout.hidden_bias = detail::tensor_from_json(r.at("c1"), {c.readout_hidden}, "readout.c1");
    m.readout.out_weight = detail::tensor_from_json(r.at("M2"), {c.classes, c.readout_hidden}, "readout.M2");
    m.readout.out_bias = detail::tensor_from_json(r.at("c2"), {c.classes}, "readout.c2");
  } catch (const Json::out_of_range& e) {
    throw SchemaError(std::string("readout: ") + e.what());
  }
  for (const Tensor* t : m.parameters())
    if (!t->all_finite()) throw SchemaError("checkpoint holds non-finite weights");
  return m;
}

inline void save_checkpoint(const std::string& path, const GcnModel& m) {
  write_text_file(path, to_checkpoint(m).dump() + "\n");
}

inline GcnModel load_checkpoint(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const Json::parse_error& e) {
    throw ParseError("checkpoint '" + path + "': " + e.what());
  }
  return from_checkpoint(j);
}

/// True when every parameter of `a` and `b` is bitwise identical.
inline bool same_weights(const GcnModel& a, const GcnModel& b) {
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!pa[i]->same_values(*pb[i])) return false;
  return true;
}

}  // namespace cgn
