// Command-line front end: synth | train | eval | explain | extract | render.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data or validation
// error, 3 numeric error. Results go to files or stdout; the resolved
// configuration and diagnostics go to stderr.
#pragma once

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cgn/concept_extract.hpp"
#include "cgn/dataset_io.hpp"
#include "cgn/errors.hpp"
#include "cgn/explainers.hpp"
#include "cgn/gcn_model.hpp"
#include "cgn/image.hpp"
#include "cgn/metrics.hpp"
#include "cgn/render_dot.hpp"
#include "cgn/synthgen.hpp"
#include "cgn/trainer.hpp"

namespace cgn::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Expands `--config file.json` into flags placed right after the subcommand
/// name, ahead of the user's own, so explicit flags win (options keep the last
/// value given). JSON keys are flag names without dashes; `true` becomes a
/// bare flag, `false` is dropped.
inline std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  if (args.empty()) return args;
  std::vector<std::string> out{args[0]};
  std::size_t first = 1;
  if (args.size() > 1 && args[1].rfind("-", 0) != 0) out.push_back(args[first++]);  // subcommand
  std::vector<std::string> rest;
  std::optional<std::string> path;
  for (std::size_t i = first; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config needs a file");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (path) {
    Json j;
    try {
      j = Json::parse(read_text_file(*path));
    } catch (const Json::parse_error& e) {
      throw ParseError("config '" + *path + "': " + e.what());
    }
    if (!j.is_object()) throw SchemaError("config '" + *path + "' must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& v = it.value();
      if (v.is_boolean()) {
        if (v.get<bool>()) out.push_back("--" + it.key());
        continue;
      }
      out.push_back("--" + it.key());
      out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    }
  }
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

struct SynthArgs {
  std::size_t total = 2000;
  std::uint64_t seed = 0;
  double sigma = 0.15;
  double jitter = 0.03;
  std::string out;
};

struct TrainArgs {
  std::string data;
  std::size_t epochs = 200;
  std::size_t batch = 128;
  double lr = 1e-2;
  std::uint64_t seed = 0;
  std::string out;
  std::string history;
  std::size_t hidden = 64;
  std::size_t layers = 3;
  std::string activation = "softplus";
};

struct EvalArgs {
  std::string data;
  std::string model;
  std::string report;
  std::string part = "test";
};

struct ExplainArgs {
  std::string data;
  std::string model;
  std::string method = "ig";
  std::optional<std::size_t> target;
  std::size_t graph_index = 0;
  std::size_t steps = 50;
  std::optional<std::size_t> layer;
  std::string baseline = "zero";
  std::string rule = "trapezoid";
  bool squared_norm = false;
  std::string out;
};

struct ExtractArgs {
  std::string image;
  std::string mask;
  std::string plane;
  std::string rules;
  std::string priors;
  std::string out;
  std::size_t k = 100;
  double compactness = 20.0;
  std::size_t iterations = 10;
};

struct RenderArgs {
  std::string graph;
  std::size_t graph_index = 0;
  std::string explanation;
  std::string out;
};

namespace detail {

inline void emit(std::ostream& os, const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") os << text;
  else write_text_file(path, text);
}

inline ConceptGraph graph_at(const Dataset& d, std::size_t index, const std::string& path) {
  if (index >= d.graphs.size())
    throw ContractError("graph index " + std::to_string(index) + " out of range for '" + path + "' (" +
                        std::to_string(d.graphs.size()) + " graphs)");
  return d.graphs[index];
}

inline std::vector<ConceptGraph> select_part(const Dataset& d, const std::string& part, std::uint64_t seed) {
  if (part == "all") return d.graphs;
  auto s = split(d.graphs, {0.7, 0.2, 0.1}, seed);
  if (part == "train") return s.train;
  if (part == "validation") return s.validation;
  return s.test;
}

}  // namespace detail

inline int run_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  SynthConfig cfg;
  cfg.total = a.total;
  cfg.seed = a.seed;
  cfg.sigma = a.sigma;
  cfg.jitter = a.jitter;
  OrderedJson resolved{{"command", "synth"}, {"total", a.total}, {"seed", a.seed},
                       {"sigma", a.sigma},   {"jitter", a.jitter}, {"out", a.out}};
  err << "config: " << resolved.dump() << "\n";
  const Dataset d = generate_dataset(cfg);
  detail::emit(out, a.out, serialize(d));
  if (!a.out.empty()) out << "wrote " << d.graphs.size() << " graphs to " << a.out << "\n";
  return kOk;
}

inline int run_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  ModelConfig mc;
  mc.hidden = a.hidden;
  mc.message_dim = a.hidden;
  mc.readout_hidden = a.hidden;
  mc.layers = a.layers;
  const auto act = parse_activation(a.activation);
  if (!act) throw ConfigError("unknown activation '" + a.activation + "'");
  mc.activation = *act;
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.lr = a.lr;
  tc.seed = a.seed;
  tc.check();
  const std::string history = a.history.empty() ? a.out + ".history.csv" : a.history;
  OrderedJson resolved{{"command", "train"}, {"data", a.data},       {"epochs", a.epochs},
                       {"batch", a.batch},   {"lr", a.lr},           {"seed", a.seed},
                       {"out", a.out},       {"history", history},   {"model", config_to_json(mc)},
                       {"split", {0.7, 0.2, 0.1}}};
  err << "config: " << resolved.dump() << "\n";

  const Dataset d = read_dataset(a.data);
  mc.feature_dim = d.feature_dim;
  mc.check();
  const auto parts = split(d.graphs, {0.7, 0.2, 0.1}, a.seed);
  const auto train = prepare(parts.train);
  const auto validation = prepare(parts.validation);
  const auto test = prepare(parts.test);
  FitResult r = fit(init_model(mc, a.seed), train, validation, tc);
  save_checkpoint(a.out, r.model);
  write_text_file(history, history_csv(r.history));
  OrderedJson summary;
  summary["best_epoch"] = r.best_epoch;
  summary["best_val_loss"] = r.best_val_loss;
  summary["test"] = metrics_to_json(evaluate(r.model, test));
  out << summary.dump() << "\n";
  return kOk;
}

inline int run_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  if (a.part != "test" && a.part != "train" && a.part != "validation" && a.part != "all")
    throw ConfigError("--split must be train, validation, test or all");
  OrderedJson resolved{{"command", "eval"}, {"data", a.data}, {"model", a.model}, {"report", a.report},
                       {"split", a.part}};
  err << "config: " << resolved.dump() << "\n";
  const GcnModel model = load_checkpoint(a.model);
  const Dataset d = read_dataset(a.data);
  if (d.feature_dim != model.config.feature_dim)
    throw DimensionError("dataset feature_dim " + std::to_string(d.feature_dim) + " differs from model's " +
                         std::to_string(model.config.feature_dim));
  const auto graphs = detail::select_part(d, a.part, model.seed);
  OrderedJson report = metrics_to_json(evaluate(model, prepare(graphs)));
  report["graphs"] = graphs.size();
  report["split"] = a.part;
  const std::string text = report.dump(2) + "\n";
  if (!a.report.empty()) write_text_file(a.report, text);
  out << text;
  return kOk;
}

inline int run_explain(const ExplainArgs& a, std::ostream& out, std::ostream& err) {
  if (a.method != "sa" && a.method != "ig" && a.method != "gradcam")
    throw ConfigError("--method must be sa, ig or gradcam");
  const auto rule = parse_integration_rule(a.rule);
  if (!rule) throw ConfigError("--rule must be trapezoid, simpson or left-riemann");
  OrderedJson resolved{{"command", "explain"}, {"data", a.data},     {"model", a.model},
                       {"method", a.method},   {"graph_index", a.graph_index}};
  resolved["class"] = a.target ? OrderedJson(*a.target) : OrderedJson("predicted");
  if (a.method == "ig") {
    resolved["steps"] = a.steps;
    resolved["rule"] = a.rule;
    resolved["baseline"] = a.baseline;
  }
  if (a.method == "gradcam") resolved["layer"] = a.layer ? OrderedJson(*a.layer) : OrderedJson("last");
  if (a.method == "sa") resolved["squared_norm"] = a.squared_norm;
  resolved["out"] = a.out;
  err << "config: " << resolved.dump() << "\n";

  const GcnModel model = load_checkpoint(a.model);
  const Dataset d = read_dataset(a.data);
  const ConceptGraph g = detail::graph_at(d, a.graph_index, a.data);
  const std::size_t c = a.target ? *a.target : readout_predict(model, g).predicted;
  Explanation ex;
  if (a.method == "sa") {
    ex = explain_sa(model, g, c, SaOptions{a.squared_norm});
  } else if (a.method == "gradcam") {
    ex = explain_gradcam(model, g, c, a.layer);
  } else {
    IgConfig cfg;
    cfg.steps = a.steps;
    cfg.rule = *rule;
    if (a.baseline != "zero") {
      const Dataset b = read_dataset(a.baseline);
      cfg.baseline = detail::graph_at(b, 0, a.baseline);
    }
    ex = explain_ig(model, g, c, cfg);
  }
  detail::emit(out, a.out, explanation_to_json(ex).dump() + "\n");
  if (ex.method == Method::IG)
    out << "completeness_residual " << ex.meta["completeness_residual"].get<double>() << "\n";
  return kOk;
}

inline int run_extract(const ExtractArgs& a, std::ostream& out, std::ostream& err) {
  const auto plane = parse_plane(a.plane);
  if (!plane) throw ConfigError("unknown plane '" + a.plane + "' (FASP, FFSP, FTSP, OTHER)");
  OrderedJson resolved{{"command", "extract"}, {"image", a.image},   {"mask", a.mask},
                       {"plane", a.plane},     {"rules", a.rules.empty() ? "default" : a.rules},
                       {"priors", a.priors.empty() ? "default" : a.priors},
                       {"k", a.k},             {"compactness", a.compactness},
                       {"iterations", a.iterations}, {"out", a.out}};
  err << "config: " << resolved.dump() << "\n";
  const GrayImage image = read_image(a.image);
  std::optional<GrayImage> mask;
  if (!a.mask.empty()) mask = read_image(a.mask);
  const RuleSet rules = a.rules.empty() ? default_rules() : load_rules(a.rules);
  const PriorTable priors = a.priors.empty() ? PriorTable{} : load_prior_table(a.priors);
  ExtractConfig cfg;
  cfg.slic = {a.k, a.compactness, a.iterations};
  const Extraction ex = extract_concept_graph(image, mask, *plane, rules, priors, cfg);
  for (const auto& w : ex.warnings) err << "warning: " << w << "\n";
  if (ex.graph.nodes.empty()) throw ValidationError("no concept found in '" + a.image + "'");
  Dataset d;
  d.feature_dim = kDescriptorDim;
  d.graphs.push_back(ex.graph);
  detail::emit(out, a.out, serialize(d));
  return kOk;
}

inline int run_render(const RenderArgs& a, std::ostream& out, std::ostream& err) {
  OrderedJson resolved{{"command", "render"}, {"graph", a.graph}, {"graph_index", a.graph_index},
                       {"explanation", a.explanation}, {"out", a.out}};
  err << "config: " << resolved.dump() << "\n";
  const Dataset d = read_dataset(a.graph);
  const ConceptGraph g = detail::graph_at(d, a.graph_index, a.graph);
  Explanation ex;
  try {
    ex = explanation_from_json(OrderedJson::parse(read_text_file(a.explanation)));
  } catch (const Json::parse_error& e) {
    throw ParseError("explanation '" + a.explanation + "': " + e.what());
  }
  detail::emit(out, a.out, render_dot(g, ex));
  return kOk;
}

/// Parses and runs one command. Never throws.
inline int dispatch(const std::vector<std::string>& argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Concept-graph GCN: synthesize, train, evaluate, explain, extract, render", "cgn"};
  app.require_subcommand(1, 1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic concept-graph dataset");
  synth->add_option("--total", sa.total, "Number of graphs")->capture_default_str();
  synth->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
  synth->add_option("--sigma", sa.sigma, "Feature noise standard deviation")->capture_default_str();
  synth->add_option("--jitter", sa.jitter, "Centroid jitter")->capture_default_str();
  synth->add_option("--out", sa.out, "Output JSONL (stdout when absent)");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a GCN on the 7:2:1 split of a dataset");
  train->add_option("--data", ta.data, "Dataset JSONL")->required();
  train->add_option("--epochs", ta.epochs)->capture_default_str();
  train->add_option("--batch", ta.batch)->capture_default_str();
  train->add_option("--lr", ta.lr)->capture_default_str();
  train->add_option("--seed", ta.seed, "Seed for init, shuffling and the split")->capture_default_str();
  train->add_option("--out", ta.out, "Checkpoint path")->required();
  train->add_option("--history", ta.history, "Per-epoch CSV (default <out>.history.csv)");
  train->add_option("--hidden", ta.hidden, "Hidden width of every layer")->capture_default_str();
  train->add_option("--layers", ta.layers, "GraphConv layers")->capture_default_str();
  train->add_option("--activation", ta.activation, "softplus or relu")->capture_default_str();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--data", ea.data)->required();
  eval->add_option("--model", ea.model)->required();
  eval->add_option("--report", ea.report, "Write the metrics JSON here too");
  eval->add_option("--split", ea.part, "train, validation, test or all")->capture_default_str();

  ExplainArgs xa;
  auto* explain = app.add_subcommand("explain", "Explain one graph's prediction");
  explain->add_option("--data", xa.data)->required();
  explain->add_option("--model", xa.model)->required();
  explain->add_option("--method", xa.method, "sa, ig or gradcam")->capture_default_str();
  explain->add_option("--class", xa.target, "Target class (default: predicted)");
  explain->add_option("--graph-index", xa.graph_index)->capture_default_str();
  explain->add_option("--steps", xa.steps, "IG steps")->capture_default_str();
  explain->add_option("--layer", xa.layer, "Grad-CAM layer (default: last)");
  explain->add_option("--baseline", xa.baseline, "zero, or a JSONL file whose first graph is the baseline")
      ->capture_default_str();
  explain->add_option("--rule", xa.rule, "IG rule: trapezoid, simpson or left-riemann")->capture_default_str();
  explain->add_flag("--squared-norm", xa.squared_norm, "SA: score by squared gradient norm");
  explain->add_option("--out", xa.out, "Explanation JSON path (stdout when absent)");

  ExtractArgs ca;
  auto* extract = app.add_subcommand("extract", "Extract a concept graph from an image");
  extract->add_option("--image", ca.image)->required();
  extract->add_option("--mask", ca.mask, "Anatomy mask, nonzero = foreground");
  extract->add_option("--plane", ca.plane, "FASP, FFSP, FTSP")->required();
  extract->add_option("--rules", ca.rules, "Rules JSON (built-in defaults when absent)");
  extract->add_option("--priors", ca.priors, "Prior table JSON (all 1.0 when absent)");
  extract->add_option("--out", ca.out, "Output JSONL (stdout when absent)");
  extract->add_option("--k", ca.k, "SLIC segment count")->capture_default_str();
  extract->add_option("--compactness", ca.compactness)->capture_default_str();
  extract->add_option("--iterations", ca.iterations)->capture_default_str();

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "Render an explanation as Graphviz DOT");
  render->add_option("--graph", ra.graph, "Dataset JSONL holding the graph")->required();
  render->add_option("--graph-index", ra.graph_index)->capture_default_str();
  render->add_option("--explanation", ra.explanation)->required();
  render->add_option("--out", ra.out, "DOT path (stdout when absent)");

  try {
    std::vector<std::string> args = expand_config(argv);
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(std::move(reversed));
    if (*synth) return run_synth(sa, out, err);
    if (*train) return run_train(ta, out, err);
    if (*eval) return run_eval(ea, out, err);
    if (*explain) return run_explain(xa, out, err);
    if (*extract) return run_extract(ca, out, err);
    if (*render) return run_render(ra, out, err);
    return kUsage;
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
}

inline int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return dispatch(args);
}

}  // namespace cgn::cli
