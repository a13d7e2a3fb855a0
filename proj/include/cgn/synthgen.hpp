// Synthetic concept-graph datasets with anatomy-like class templates.
//
// Each anatomical class owns a block of four "signature" feature dimensions on
// which its concepts are high; every concept also has its own low-valued
// profile elsewhere. OTHER graphs carry 2-3 UNKNOWN nodes with uniform
// features. Class separability is governed by the noise level sigma alone.
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cgn/concept_graph.hpp"
#include "cgn/dataset_io.hpp"
#include "cgn/errors.hpp"

namespace cgn {

/// Hospital A image counts per class (FASP, FFSP, FTSP, OTHER).
inline constexpr std::array<double, kNumPlaneClasses> kReferenceProportions = {1273, 887, 1138, 1988};

struct SynthConfig {
  std::size_t total = 2000;
  /// Explicit per-class counts; when empty, `total` is split by kReferenceProportions.
  std::vector<std::size_t> class_counts;
  double sigma = 0.15;
  double jitter = 0.03;
  std::uint64_t seed = 0;
  std::size_t feature_dim = 16;

  void check() const {
    if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
    if (!(jitter >= 0.0 && jitter <= 0.1)) throw ConfigError("jitter must lie in [0, 0.1]");
    if (feature_dim < 4 * (kNumPlaneClasses - 1))
      throw ConfigError("feature_dim must be >= 12 to hold the class signature blocks");
    if (!class_counts.empty() && class_counts.size() != kNumPlaneClasses)
      throw ConfigError("class_counts must list 4 classes");
    const std::size_t n =
        class_counts.empty() ? total : std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0});
    if (n < 8) throw ConfigError("total count must be >= 8");
  }
};

/// Splits `total` proportionally to `weights` by largest-remainder rounding
/// (ties in the remainder go to the lower index). Counts sum to `total`.
inline std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const double> weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(sum > 0.0)) throw ConfigError("proportions must have a positive sum");
  std::vector<std::size_t> counts(weights.size());
  std::vector<double> rem(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    rem[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[order[k % order.size()]];
  return counts;
}

struct ConceptTemplate {
  ConceptLabel label;
  Point2 centroid;
  std::vector<double> features;
};

struct ClassTemplate {
  PlaneClass plane;
  std::vector<ConceptTemplate> concepts;  // empty for OTHER
};

struct SynthTemplates {
  std::vector<ClassTemplate> classes;  // indexed by PlaneClass
};

namespace detail {

// Canonical unit-ellipse geometry: center (0.5, 0.5), major axis horizontal.
inline constexpr double kEllipseA = 0.35;
inline constexpr double kEllipseB = 0.25;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

inline SynthTemplates make_templates(std::uint64_t seed, std::size_t feature_dim) {
  using detail::kEllipseA;
  using detail::kEllipseB;
  const std::map<PlaneClass, std::vector<std::pair<ConceptLabel, Point2>>> layout = {
      {PlaneClass::FASP,
       {{ConceptLabel::SB, {0.5, 0.5 - 0.55 * kEllipseB}},
        {ConceptLabel::UV, {0.5 + 0.45 * kEllipseA, 0.5}},
        {ConceptLabel::SP, {0.5 - 0.75 * kEllipseA, 0.5}}}},
      {PlaneClass::FFSP,
       {{ConceptLabel::FM, {0.5, 0.5}}, {ConceptLabel::MP, {0.5 + 0.3, 0.5}}}},
      {PlaneClass::FTSP,
       {{ConceptLabel::CSP, {0.5 + 0.5 * kEllipseA, 0.5}},
        {ConceptLabel::LT, {0.5 - 0.1 * kEllipseA, 0.5 - 0.35 * kEllipseB}},
        {ConceptLabel::RT, {0.5 - 0.1 * kEllipseA, 0.5 + 0.35 * kEllipseB}}}},
  };
  std::mt19937_64 rng(detail::splitmix64(seed ^ 0x7465'6d70'6c61'7465ULL));
  std::uniform_real_distribution<double> high(0.75, 0.95), low(0.05, 0.35);
  SynthTemplates t;
  for (std::size_t c = 0; c < kNumPlaneClasses; ++c) {
    ClassTemplate ct;
    ct.plane = static_cast<PlaneClass>(c);
    auto it = layout.find(ct.plane);
    if (it != layout.end()) {
      for (const auto& [label, pos] : it->second) {
        ConceptTemplate concept_t{label, pos, std::vector<double>(feature_dim)};
        for (std::size_t k = 0; k < feature_dim; ++k) {
          const bool signature = k / 4 == c;
          concept_t.features[k] = signature ? high(rng) : low(rng);
        }
        ct.concepts.push_back(std::move(concept_t));
      }
    }
    t.classes.push_back(std::move(ct));
  }
  return t;
}

inline OrderedJson templates_to_json(const SynthTemplates& t) {
  OrderedJson out = OrderedJson::array();
  for (const auto& ct : t.classes) {
    OrderedJson jc;
    jc["class"] = std::string(to_string(ct.plane));
    OrderedJson concepts = OrderedJson::array();
    for (const auto& c : ct.concepts) {
      OrderedJson j;
      j["concept"] = std::string(to_string(c.label));
      j["centroid"] = {c.centroid.x, c.centroid.y};
      j["features"] = c.features;
      concepts.push_back(std::move(j));
    }
    jc["concepts"] = std::move(concepts);
    out.push_back(std::move(jc));
  }
  return out;
}

inline std::string templates_digest(const SynthTemplates& t) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(detail::fnv1a(templates_to_json(t).dump())));
  return buf;
}

inline std::vector<std::size_t> resolve_class_counts(const SynthConfig& cfg) {
  if (!cfg.class_counts.empty()) return cfg.class_counts;
  return largest_remainder(cfg.total, kReferenceProportions);
}

/// Graph `index` of class `plane`, drawn from its own (seed, index) stream.
inline ConceptGraph synth_graph(const SynthTemplates& t, PlaneClass plane, const SynthConfig& cfg,
                                std::size_t index) {
  std::mt19937_64 rng(detail::splitmix64(detail::splitmix64(cfg.seed) ^ index));
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto jitter = [&](double v) {
    return std::clamp(v + cfg.jitter * (2.0 * unit(rng) - 1.0), 0.0, 1.0);
  };
  std::vector<ConceptNode> nodes;
  const auto& ct = t.classes.at(static_cast<std::size_t>(plane));
  if (ct.concepts.empty()) {
    const std::size_t n = 2 + static_cast<std::size_t>(unit(rng) < 0.5);
    for (std::size_t i = 0; i < n; ++i) {
      ConceptNode node;
      node.id = static_cast<int>(i);
      node.label = ConceptLabel::UNKNOWN;
      node.centroid = {0.1 + 0.8 * unit(rng), 0.1 + 0.8 * unit(rng)};
      node.features.resize(cfg.feature_dim);
      // uniform over the gap between template low and high feature bands
      for (double& f : node.features) f = 0.35 + 0.4 * unit(rng);
      nodes.push_back(std::move(node));
    }
  } else {
    for (std::size_t i = 0; i < ct.concepts.size(); ++i) {
      const auto& c = ct.concepts[i];
      ConceptNode node;
      node.id = static_cast<int>(i);
      node.label = c.label;
      node.centroid = {jitter(c.centroid.x), jitter(c.centroid.y)};
      node.features.resize(cfg.feature_dim);
      for (std::size_t k = 0; k < cfg.feature_dim; ++k)
        node.features[k] = std::clamp(c.features[k] + cfg.sigma * noise(rng), 0.0, 1.0);
      nodes.push_back(std::move(node));
    }
  }
  return build_graph(std::move(nodes), PriorTable{}, plane);
}

inline Dataset generate_dataset(const SynthConfig& cfg) {
  cfg.check();
  const auto counts = resolve_class_counts(cfg);
  const SynthTemplates templates = make_templates(cfg.seed, cfg.feature_dim);

  std::vector<PlaneClass> labels;
  for (std::size_t c = 0; c < counts.size(); ++c) labels.insert(labels.end(), counts[c], static_cast<PlaneClass>(c));
  std::mt19937_64 order_rng(detail::splitmix64(cfg.seed ^ 0x6f72'6465'72ULL));
  std::shuffle(labels.begin(), labels.end(), order_rng);

  Dataset d;
  d.feature_dim = cfg.feature_dim;
  d.graphs.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) d.graphs.push_back(synth_graph(templates, labels[i], cfg, i));

  d.synth["seed"] = cfg.seed;
  d.synth["sigma"] = cfg.sigma;
  d.synth["jitter"] = cfg.jitter;
  d.synth["class_counts"] = counts;
  d.synth["templates_digest"] = templates_digest(templates);
  d.synth["templates"] = templates_to_json(templates);
  return d;
}

struct DatasetSplit {
  std::vector<ConceptGraph> train, validation, test;
};

/// Stratified split. Per class, part sizes follow `ratios` by largest
/// remainder; each part receives at least one graph of every class.
inline DatasetSplit split(const std::vector<ConceptGraph>& graphs,
                          std::array<double, 3> ratios = {0.7, 0.2, 0.1}, std::uint64_t seed = 0) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

  std::vector<std::vector<std::size_t>> by_class(kNumPlaneClasses);
  for (std::size_t i = 0; i < graphs.size(); ++i)
    by_class[static_cast<std::size_t>(graphs[i].label)].push_back(i);

  std::vector<std::vector<std::size_t>> parts(3);
  std::mt19937_64 rng(detail::splitmix64(seed ^ 0x73706c6974ULL));
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    if (members.size() < ratios.size())
      throw ConfigError("class " + std::string(kPlaneNames[c]) + " has fewer samples than split parts");
    std::shuffle(members.begin(), members.end(), rng);
    auto sizes = largest_remainder(members.size(), ratios);
    for (auto& s : sizes)
      if (s == 0) {
        ++s;
        --*std::max_element(sizes.begin(), sizes.end());
      }
    std::size_t at = 0;
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t k = 0; k < sizes[p]; ++k) parts[p].push_back(members[at++]);
  }
  DatasetSplit out;
  std::vector<ConceptGraph>* dest[3] = {&out.train, &out.validation, &out.test};
  for (std::size_t p = 0; p < 3; ++p) {
    std::sort(parts[p].begin(), parts[p].end());
    for (std::size_t i : parts[p]) dest[p]->push_back(graphs[i]);
  }
  return out;
}

}  // namespace cgn
