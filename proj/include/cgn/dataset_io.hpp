// JSON Lines persistence for concept-graph datasets and prior tables.
//
// Line 1 is a header object; each following line holds one graph. Doubles are
// written in shortest round-trip form, so parse(serialize(d)) reproduces every
// value bitwise.
#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cgn/concept_graph.hpp"
#include "cgn/errors.hpp"
#include "json.hpp"

namespace cgn {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

inline constexpr int kDatasetVersion = 1;

struct Dataset {
  std::size_t feature_dim = 0;
  std::vector<ConceptGraph> graphs;
  /// Optional "synth" header block written by the generator; null when absent.
  OrderedJson synth;
};

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw InputError("write failed for '" + path + "'");
}

inline OrderedJson graph_to_json(const ConceptGraph& g) {
  OrderedJson j;
  j["label"] = static_cast<int>(g.label);
  OrderedJson nodes = OrderedJson::array();
  for (const auto& n : g.nodes) {
    OrderedJson jn;
    jn["id"] = n.id;
    jn["concept"] = std::string(to_string(n.label));
    jn["centroid"] = {n.centroid.x, n.centroid.y};
    jn["features"] = n.features;
    nodes.push_back(std::move(jn));
  }
  j["nodes"] = std::move(nodes);
  OrderedJson edges = OrderedJson::array();
  for (const auto& e : g.edges) {
    OrderedJson je;
    je["src"] = e.src;
    je["dst"] = e.dst;
    je["spatial"] = e.spatial.as_array();
    je["alpha"] = e.alpha;
    edges.push_back(std::move(je));
  }
  j["edges"] = std::move(edges);
  return j;
}

inline OrderedJson dataset_header(const Dataset& d) {
  OrderedJson h;
  h["version"] = kDatasetVersion;
  h["feature_dim"] = d.feature_dim;
  OrderedJson classes = OrderedJson::array();
  for (auto name : kPlaneNames) classes.push_back(std::string(name));
  h["classes"] = std::move(classes);
  if (!d.synth.is_null()) h["synth"] = d.synth;
  return h;
}

/// Throws ValidationError naming the first invalid graph.
inline std::string serialize(const Dataset& d) {
  std::string out = dataset_header(d).dump();
  out += '\n';
  for (std::size_t i = 0; i < d.graphs.size(); ++i) {
    if (auto v = validate(d.graphs[i], d.feature_dim); !v.empty())
      throw ValidationError("graph " + std::to_string(i) + ": " + describe(v));
    out += graph_to_json(d.graphs[i]).dump();
    out += '\n';
  }
  return out;
}

namespace detail {

inline const Json& field(const Json& obj, const char* name, std::size_t line) {
  if (!obj.is_object() || !obj.contains(name))
    throw SchemaError("missing field \"" + std::string(name) + "\" (line " + std::to_string(line) + ")");
  return obj.at(name);
}

template <class T>
T field_as(const Json& obj, const char* name, std::size_t line) {
  const Json& v = field(obj, name, line);
  try {
    return v.get<T>();
  } catch (const Json::exception&) {
    throw SchemaError("field \"" + std::string(name) + "\" has the wrong type (line " +
                      std::to_string(line) + ")");
  }
}

inline std::vector<double> number_list(const Json& obj, const char* name, std::size_t line) {
  const Json& v = field(obj, name, line);
  if (!v.is_array())
    throw SchemaError("field \"" + std::string(name) + "\" must be an array (line " +
                      std::to_string(line) + ")");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number())
      throw SchemaError("field \"" + std::string(name) + "\" must hold numbers (line " +
                        std::to_string(line) + ")");
    out.push_back(x.get<double>());
  }
  return out;
}

inline ConceptGraph graph_from_json(const Json& j, std::size_t feature_dim, std::size_t line) {
  ConceptGraph g;
  const int label = field_as<int>(j, "label", line);
  if (label < 0 || label >= static_cast<int>(kNumPlaneClasses))
    throw SchemaError("field \"label\" out of range (line " + std::to_string(line) + ")");
  g.label = static_cast<PlaneClass>(label);
  const Json& nodes = field(j, "nodes", line);
  if (!nodes.is_array()) throw SchemaError("field \"nodes\" must be an array (line " + std::to_string(line) + ")");
  for (const auto& jn : nodes) {
    ConceptNode n;
    n.id = field_as<int>(jn, "id", line);
    const auto concept_name = field_as<std::string>(jn, "concept", line);
    const auto concept_label = parse_concept(concept_name);
    if (!concept_label)
      throw SchemaError("field \"concept\" has unknown value '" + concept_name + "' (line " +
                        std::to_string(line) + ")");
    n.label = *concept_label;
    const auto c = number_list(jn, "centroid", line);
    if (c.size() != 2)
      throw SchemaError("field \"centroid\" must have 2 entries (line " + std::to_string(line) + ")");
    n.centroid = {c[0], c[1]};
    n.features = number_list(jn, "features", line);
    if (n.features.size() != feature_dim)
      throw SchemaError("feature length " + std::to_string(n.features.size()) +
                        " does not match header feature_dim " + std::to_string(feature_dim) +
                        " (line " + std::to_string(line) + ")");
    g.nodes.push_back(std::move(n));
  }
  const Json& edges = field(j, "edges", line);
  if (!edges.is_array()) throw SchemaError("field \"edges\" must be an array (line " + std::to_string(line) + ")");
  for (const auto& je : edges) {
    ConceptEdge e;
    e.src = field_as<int>(je, "src", line);
    e.dst = field_as<int>(je, "dst", line);
    const auto s = number_list(je, "spatial", line);
    if (s.size() != kSpatialDim)
      throw SchemaError("field \"spatial\" must have 4 entries (line " + std::to_string(line) + ")");
    e.spatial = {s[0], s[1], s[2], s[3]};
    e.alpha = field_as<double>(je, "alpha", line);
    g.edges.push_back(e);
  }
  return g;
}

}  // namespace detail

inline Dataset parse(std::string_view text) {
  Dataset d;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    if (!j.is_object()) throw ParseError("expected a JSON object", line_no);

    if (!have_header) {
      const int version = detail::field_as<int>(j, "version", line_no);
      if (version != kDatasetVersion)
        throw SchemaError("unsupported dataset version " + std::to_string(version));
      d.feature_dim = detail::field_as<std::size_t>(j, "feature_dim", line_no);
      const auto classes = detail::field_as<std::vector<std::string>>(j, "classes", line_no);
      if (classes.size() != kNumPlaneClasses ||
          !std::equal(classes.begin(), classes.end(), kPlaneNames.begin()))
        throw SchemaError("field \"classes\" must be [\"FASP\",\"FFSP\",\"FTSP\",\"OTHER\"]");
      if (j.contains("synth")) d.synth = OrderedJson::parse(j.at("synth").dump());
      have_header = true;
      continue;
    }
    d.graphs.push_back(detail::graph_from_json(j, d.feature_dim, line_no));
  }
  if (!have_header) throw ParseError("missing header line", 1);
  return d;
}

inline Dataset read_dataset(const std::string& path) { return parse(read_text_file(path)); }

inline void write_dataset(const std::string& path, const Dataset& d) {
  write_text_file(path, serialize(d));
}

inline PriorTable prior_table_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("prior table must be a JSON object");
  PriorTable table;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) throw SchemaError("prior \"" + key + "\" must be a number");
    const double v = value.get<double>();
    if (key == "default") {
      table.set_default(v);
      continue;
    }
    const auto arrow = key.find("->");
    if (arrow == std::string::npos) throw SchemaError("prior key \"" + key + "\" is not SRC->DST");
    const auto src = parse_concept(key.substr(0, arrow));
    const auto dst = parse_concept(key.substr(arrow + 2));
    if (!src || !dst) throw SchemaError("prior key \"" + key + "\" names an unknown concept");
    table.set(*src, *dst, v);
  }
  return table;
}

inline OrderedJson prior_table_to_json(const PriorTable& table) {
  OrderedJson j;
  for (const auto& [key, v] : table.entries())
    j[std::string(to_string(key.first)) + "->" + std::string(to_string(key.second))] = v;
  j["default"] = table.default_value();
  return j;
}

inline PriorTable load_prior_table(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const Json::parse_error& e) {
    throw ParseError("prior table '" + path + "': " + e.what());
  }
  return prior_table_from_json(j);
}

}  // namespace cgn
