// Image-side concept extraction: prior-rule scoring of superpixels, patch
// descriptors and assembly of the concept graph.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cgn/concept_graph.hpp"
#include "cgn/dataset_io.hpp"
#include "cgn/ellipse.hpp"
#include "cgn/errors.hpp"
#include "cgn/image.hpp"
#include "cgn/slic.hpp"

namespace cgn {

inline constexpr std::size_t kDescriptorDim = 16;

/// Per-segment features a rule weighs, each in [0,1].
struct SegmentFeatures {
  double dist_major = 0.0;  // |offset across the major axis| / b, clipped
  double dist_minor = 0.0;  // |offset along the major axis| / a, clipped
  double intensity = 0.5;   // mean intensity, median-centred over candidates
  double texture = 0.5;     // intensity std-dev, median-centred over candidates
  double eccentricity = 0.0;
  double side = 0.5;  // 0.5 + (signed offset across the major axis) / 2b, clipped
};

/// Where a rule's axis features come from.
enum class RuleReference { Mask, None, Label };

struct ConceptPriorRule {
  PlaneClass plane = PlaneClass::FASP;
  ConceptLabel target = ConceptLabel::UNKNOWN;
  double w_dist_major = 0.0;
  double w_dist_minor = 0.0;
  double w_intensity = 0.0;
  double w_texture = 0.0;
  double w_eccentricity = 0.0;
  double w_side = 0.0;
  double bias = 0.0;
  double threshold = 0.5;
  RuleReference reference = RuleReference::Mask;
  ConceptLabel reference_label = ConceptLabel::UNKNOWN;  // when reference == Label

  void check() const {
    for (double w : {w_dist_major, w_dist_minor, w_intensity, w_texture, w_eccentricity, w_side, bias})
      if (!std::isfinite(w)) throw ConfigError("rule " + std::string(to_string(target)) + ": non-finite weight");
    if (!(threshold >= 0.0 && threshold <= 1.0))
      throw ConfigError("rule " + std::string(to_string(target)) + ": threshold outside [0,1]");
    if (reference == RuleReference::Label && reference_label == target)
      throw ConfigError("rule " + std::string(to_string(target)) + ": references itself");
  }

  double logit(const SegmentFeatures& f) const {
    return bias + w_dist_major * f.dist_major + w_dist_minor * f.dist_minor + w_intensity * f.intensity +
           w_texture * f.texture + w_eccentricity * f.eccentricity + w_side * f.side;
  }

  /// Distance to the axis the rule is drawn towards; used to break ties.
  double axis_distance(const SegmentFeatures& f) const {
    return w_dist_major <= w_dist_minor ? f.dist_major : f.dist_minor;
  }
};

using RuleSet = std::vector<ConceptPriorRule>;

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

inline RuleSet default_rules() {
  using L = ConceptLabel;
  using P = PlaneClass;
  RuleSet r;
  auto add = [&](P plane, L target, double dmaj, double dmin, double inten, double tex, double ecc, double side,
                 double bias, double thr = 0.5) {
    ConceptPriorRule rule;
    rule.plane = plane;
    rule.target = target;
    rule.w_dist_major = dmaj;
    rule.w_dist_minor = dmin;
    rule.w_intensity = inten;
    rule.w_texture = tex;
    rule.w_eccentricity = ecc;
    rule.w_side = side;
    rule.bias = bias;
    rule.threshold = thr;
    r.push_back(rule);
  };
  // stomach bubble: dark, oval, on the minor axis
  add(P::FASP, L::SB, 2.0, -6.0, -12.0, 0.0, -2.0, 0.0, 4.0);
  // umbilical vein: dark, on the major axis away from the centre
  add(P::FASP, L::UV, -6.0, 3.0, -12.0, 0.0, 0.0, 0.0, 3.0);
  // spine: bright, coarse texture, on the major axis
  add(P::FASP, L::SP, -4.0, 0.0, 6.0, 4.0, 0.0, 0.0, -6.0);
  // cavum septum pellucidum: dark, on the major axis
  add(P::FTSP, L::CSP, -8.0, 0.0, -12.0, 0.0, 0.0, 0.0, 3.0);
  // thalami: darker than the surrounding tissue, one either side of the axis
  add(P::FTSP, L::LT, 0.0, -2.0, -16.0, 0.0, 0.0, -6.0, 7.0);
  add(P::FTSP, L::RT, 0.0, -2.0, -16.0, 0.0, 0.0, 6.0, 1.0);
  // femur: bright and elongated
  add(P::FFSP, L::FM, 0.0, 0.0, 8.0, 0.0, 6.0, 0.0, -10.0);
  r.back().reference = RuleReference::None;
  // metaphysis: bright compact terminus along the femur axis, beyond its ends
  add(P::FFSP, L::MP, -6.0, 6.0, 6.0, 0.0, -3.0, 0.0, -6.0);
  r.back().reference = RuleReference::Label;
  r.back().reference_label = L::FM;
  return r;
}

inline std::string_view to_string(RuleReference r) {
  return r == RuleReference::Mask ? "mask" : r == RuleReference::None ? "none" : "label";
}

inline OrderedJson rule_to_json(const ConceptPriorRule& r) {
  OrderedJson j;
  j["plane"] = std::string(to_string(r.plane));
  j["target"] = std::string(to_string(r.target));
  j["weights"] = {{"dist_major", r.w_dist_major}, {"dist_minor", r.w_dist_minor},
                  {"intensity", r.w_intensity},   {"texture", r.w_texture},
                  {"eccentricity", r.w_eccentricity}, {"side", r.w_side},
                  {"bias", r.bias}};
  j["threshold"] = r.threshold;
  j["reference"] = r.reference == RuleReference::Label ? std::string(to_string(r.reference_label))
                                                       : std::string(to_string(r.reference));
  return j;
}

inline OrderedJson rules_to_json(const RuleSet& rules) {
  OrderedJson j = OrderedJson::array();
  for (const auto& r : rules) j.push_back(rule_to_json(r));
  return j;
}

inline ConceptPriorRule rule_from_json(const Json& j) {
  ConceptPriorRule r;
  try {
    const auto plane = parse_plane(j.at("plane").get<std::string>());
    const auto target = parse_concept(j.at("target").get<std::string>());
    if (!plane) throw SchemaError("rule: unknown plane '" + j.at("plane").get<std::string>() + "'");
    if (!target) throw SchemaError("rule: unknown target '" + j.at("target").get<std::string>() + "'");
    r.plane = *plane;
    r.target = *target;
    const Json& w = j.at("weights");
    for (auto it = w.begin(); it != w.end(); ++it) {
      const std::string& k = it.key();
      const double v = it.value().get<double>();
      if (k == "dist_major") r.w_dist_major = v;
      else if (k == "dist_minor") r.w_dist_minor = v;
      else if (k == "intensity") r.w_intensity = v;
      else if (k == "texture") r.w_texture = v;
      else if (k == "eccentricity") r.w_eccentricity = v;
      else if (k == "side") r.w_side = v;
      else if (k == "bias") r.bias = v;
      else throw SchemaError("rule " + std::string(to_string(r.target)) + ": unknown weight '" + k + "'");
    }
    r.threshold = j.value("threshold", 0.5);
    const std::string ref = j.value("reference", std::string("mask"));
    if (ref == "mask") r.reference = RuleReference::Mask;
    else if (ref == "none") r.reference = RuleReference::None;
    else if (const auto l = parse_concept(ref)) {
      r.reference = RuleReference::Label;
      r.reference_label = *l;
    } else
      throw SchemaError("rule " + std::string(to_string(r.target)) + ": unknown reference '" + ref + "'");
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("rule: ") + e.what());
  }
  r.check();
  return r;
}

inline RuleSet rules_from_json(const Json& j) {
  if (!j.is_array()) throw SchemaError("rules file must be a JSON list");
  RuleSet out;
  for (const auto& r : j) out.push_back(rule_from_json(r));
  return out;
}

inline RuleSet load_rules(const std::string& path) {
  try {
    return rules_from_json(Json::parse(read_text_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
}

/// Second-moment ellipse of a pixel set (pixel-centre coordinates).
inline EllipseParams moment_ellipse(std::span<const std::size_t> pixels, std::size_t width) {
  if (pixels.empty()) throw ContractError("moment_ellipse: empty segment");
  double mx = 0.0, my = 0.0;
  for (std::size_t p : pixels) {
    mx += double(p % width);
    my += double(p / width);
  }
  const double n = double(pixels.size());
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t p : pixels) {
    const double dx = double(p % width) - mx, dy = double(p / width) - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  sxx /= n;
  syy /= n;
  sxy /= n;
  const double tr = sxx + syy, diff = sxx - syy;
  const double root = std::sqrt(diff * diff / 4.0 + sxy * sxy);
  const double l1 = tr / 2.0 + root, l2 = std::max(tr / 2.0 - root, 0.0);
  EllipseParams e;
  e.cx = mx;
  e.cy = my;
  // a uniformly filled ellipse with semi-axis r has variance r^2 / 4
  e.a = std::max(2.0 * std::sqrt(l1), 0.5);
  e.b = std::max(2.0 * std::sqrt(l2), 0.5);
  e.theta = canonical_angle(0.5 * std::atan2(2.0 * sxy, diff));
  return e;
}

inline double eccentricity(std::span<const std::size_t> pixels, std::size_t width) {
  if (pixels.empty()) throw ContractError("eccentricity: empty segment");
  double mx = 0.0, my = 0.0;
  for (std::size_t p : pixels) {
    mx += double(p % width);
    my += double(p / width);
  }
  const double n = double(pixels.size());
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t p : pixels) {
    const double dx = double(p % width) - mx, dy = double(p / width) - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  const double tr = sxx + syy, diff = sxx - syy;
  const double root = std::sqrt(diff * diff / 4.0 + sxy * sxy);
  const double l1 = tr / 2.0 + root, l2 = std::max(tr / 2.0 - root, 0.0);
  return l1 > 0.0 ? std::sqrt(std::clamp(1.0 - l2 / l1, 0.0, 1.0)) : 0.0;
}

/// Per-pixel gradient magnitude of the standardized image (zero mean, unit
/// variance; a constant image standardizes to zero). Central differences,
/// one-sided at the border.
inline std::vector<double> standardized_gradient(const GrayImage& img) {
  const std::size_t w = img.width, h = img.height, n = w * h;
  double mean = 0.0;
  for (auto p : img.pixels) mean += p;
  mean /= double(n);
  double var = 0.0;
  for (auto p : img.pixels) var += (p - mean) * (p - mean);
  const double sd = std::sqrt(var / double(n));
  std::vector<double> z(n, 0.0);
  if (sd > 0.0)
    for (std::size_t i = 0; i < n; ++i) z[i] = (img.pixels[i] - mean) / sd;
  std::vector<double> g(n, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t x0 = x > 0 ? x - 1 : x, x1 = x + 1 < w ? x + 1 : x;
      const std::size_t y0 = y > 0 ? y - 1 : y, y1 = y + 1 < h ? y + 1 : y;
      const double gx = x1 > x0 ? (z[y * w + x1] - z[y * w + x0]) / double(x1 - x0) : 0.0;
      const double gy = y1 > y0 ? (z[y1 * w + x] - z[y0 * w + x]) / double(y1 - y0) : 0.0;
      g[y * w + x] = std::hypot(gx, gy);
    }
  return g;
}

/// Fixed 16-value descriptor of a pixel set:
///   [0,8)  intensity histogram, bins of width 32, L1-normalized
///   8      mean / 255
///   9      variance / 127.5^2
///   10     area / image area
///   11     eccentricity of the second-moment ellipse
///   12,13  centroid (x + 0.5) / width, (y + 0.5) / height
///   14     perimeter / (4 area), perimeter counted in unit pixel edges
///   15     g / (1 + g), g = mean standardized gradient magnitude
inline std::vector<double> patch_descriptor(const GrayImage& img, std::span<const std::size_t> segment,
                                            const std::vector<double>& gradient) {
  if (segment.empty()) throw ContractError("patch_descriptor: empty segment");
  const std::size_t w = img.width, h = img.height;
  std::vector<std::size_t> px(segment.begin(), segment.end());
  std::sort(px.begin(), px.end());
  if (std::adjacent_find(px.begin(), px.end()) != px.end())
    throw ContractError("patch_descriptor: repeated pixel");
  if (px.back() >= w * h) throw ContractError("patch_descriptor: pixel outside the image");
  std::vector<double> d(kDescriptorDim, 0.0);
  const double n = double(px.size());
  double mean = 0.0, mx = 0.0, my = 0.0, gsum = 0.0;
  for (std::size_t p : px) {
    d[img.pixels[p] / 32] += 1.0;
    mean += img.pixels[p];
    mx += double(p % w);
    my += double(p / w);
    gsum += gradient[p];
  }
  for (std::size_t b = 0; b < 8; ++b) d[b] /= n;
  mean /= n;
  double var = 0.0;
  for (std::size_t p : px) var += (img.pixels[p] - mean) * (img.pixels[p] - mean);
  var /= n;
  std::size_t perimeter = 0;
  auto inside = [&](std::size_t q) { return std::binary_search(px.begin(), px.end(), q); };
  for (std::size_t p : px) {
    const std::size_t x = p % w, y = p / w;
    perimeter += (x == 0 || !inside(p - 1)) + (x + 1 == w || !inside(p + 1)) + (y == 0 || !inside(p - w)) +
                 (y + 1 == h || !inside(p + w));
  }
  const double g = gsum / n;
  d[8] = mean / 255.0;
  d[9] = var / (127.5 * 127.5);
  d[10] = n / double(w * h);
  d[11] = eccentricity(px, w);
  d[12] = (mx / n + 0.5) / double(w);
  d[13] = (my / n + 0.5) / double(h);
  d[14] = double(perimeter) / (4.0 * n);
  d[15] = g / (1.0 + g);
  return d;
}

inline std::vector<double> patch_descriptor(const GrayImage& img, std::span<const std::size_t> segment) {
  return patch_descriptor(img, segment, standardized_gradient(img));
}

struct ConceptScore {
  int segment = 0;
  ConceptLabel label = ConceptLabel::UNKNOWN;
  double score = 0.0;
  double axis_distance = 0.0;
  SegmentFeatures features;
};

struct ConceptScoring {
  std::vector<ConceptScore> ranked;    // every scored (segment, label), best first
  std::vector<ConceptScore> selected;  // one per found label, rule order
  std::vector<ConceptLabel> missing;   // labels with no segment above threshold
};

namespace detail {

inline bool better(const ConceptScore& a, const ConceptScore& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.axis_distance != b.axis_distance) return a.axis_distance < b.axis_distance;
  if (a.segment != b.segment) return a.segment < b.segment;
  return static_cast<int>(a.label) < static_cast<int>(b.label);
}

// Maps values to [0,1] with the candidates' median at 0.5 and the candidate
// farthest from the median at 0 or 1.
inline std::vector<double> centred(const std::vector<double>& v, const std::vector<bool>& use) {
  std::vector<double> pool;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (use[i]) pool.push_back(v[i]);
  std::vector<double> out(v.size(), 0.5);
  if (pool.empty()) return out;
  std::sort(pool.begin(), pool.end());
  const std::size_t h = pool.size() / 2;
  const double med = pool.size() % 2 ? pool[h] : 0.5 * (pool[h - 1] + pool[h]);
  const double dev = std::max(med - pool.front(), pool.back() - med);
  if (dev > 0.0)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::clamp(0.5 + 0.5 * (v[i] - med) / dev, 0.0, 1.0);
  return out;
}

inline SegmentFeatures axis_features(const EllipseParams& frame, double x, double y) {
  SegmentFeatures f;
  const Point2 l = frame.local(x, y);
  f.dist_major = std::min(std::abs(l.y) / frame.b, 1.0);
  f.dist_minor = std::min(std::abs(l.x) / frame.a, 1.0);
  f.side = std::clamp(0.5 + l.y / (2.0 * frame.b), 0.0, 1.0);
  return f;
}

}  // namespace detail

/// Scores every candidate segment against the plane's rules and selects at
/// most one segment per label. With an ellipse, segments whose centroid lies
/// outside it are not candidates; with a foreground mask, neither are segments
/// with fewer than half their pixels on it. Labels are placed in rule order,
/// each taking its best-scoring segment not already labelled.
/// Rules that reference another label run after that label is placed and use
/// its segment's second-moment ellipse as their axis frame.
inline ConceptScoring score_concepts(const SuperpixelMap& map, const std::optional<EllipseParams>& ellipse,
                                     PlaneClass plane, const RuleSet& rules,
                                     const GrayImage* foreground = nullptr) {
  std::vector<const ConceptPriorRule*> plane_rules;
  for (const auto& r : rules)
    if (r.plane == plane) {
      r.check();
      plane_rules.push_back(&r);
    }
  if (plane_rules.empty()) throw ConfigError("no concept rules for plane " + std::string(to_string(plane)));
  for (const auto* r : plane_rules)
    if (r->reference == RuleReference::Mask && !ellipse)
      throw ContractError("rule " + std::string(to_string(r->target)) + " needs the anatomy ellipse");

  const std::size_t k = map.num_segments();
  std::vector<std::vector<std::size_t>> pixels(k);
  for (std::size_t p = 0; p < map.labels.size(); ++p) pixels[static_cast<std::size_t>(map.labels[p])].push_back(p);

  std::vector<bool> candidate(k, true);
  if (ellipse)
    for (std::size_t s = 0; s < k; ++s) candidate[s] = ellipse->contains(map.stats[s].cx, map.stats[s].cy);
  if (foreground)
    for (std::size_t s = 0; s < k; ++s) {
      std::size_t in = 0;
      for (std::size_t p : pixels[s]) in += foreground->pixels[p] != 0;
      if (2 * in < pixels[s].size()) candidate[s] = false;
    }

  std::vector<double> means, sds;
  for (std::size_t s = 0; s < k; ++s) {
    means.push_back(map.stats[s].mean);
    sds.push_back(std::sqrt(map.stats[s].variance));
  }
  const auto inten = detail::centred(means, candidate);
  const auto tex = detail::centred(sds, candidate);
  std::vector<SegmentFeatures> base(k);
  for (std::size_t s = 0; s < k; ++s) {
    base[s].intensity = inten[s];
    base[s].texture = tex[s];
    base[s].eccentricity = eccentricity(pixels[s], map.width);
  }

  ConceptScoring out;
  std::vector<bool> used(k, false);
  std::map<ConceptLabel, int> placed;

  auto run_stage = [&](const std::vector<const ConceptPriorRule*>& stage) {
    std::vector<ConceptScore> pairs;
    for (const auto* r : stage) {
      std::optional<EllipseParams> frame;
      if (r->reference == RuleReference::Mask) frame = ellipse;
      if (r->reference == RuleReference::Label) {
        const auto it = placed.find(r->reference_label);
        if (it == placed.end()) continue;
        frame = moment_ellipse(pixels[static_cast<std::size_t>(it->second)], map.width);
      }
      for (std::size_t s = 0; s < k; ++s) {
        if (!candidate[s]) continue;
        SegmentFeatures f = base[s];
        if (frame) {
          const auto a = detail::axis_features(*frame, map.stats[s].cx, map.stats[s].cy);
          f.dist_major = a.dist_major;
          f.dist_minor = a.dist_minor;
          f.side = a.side;
        }
        pairs.push_back({static_cast<int>(s), r->target, sigmoid(r->logit(f)), r->axis_distance(f), f});
      }
    }
    std::sort(pairs.begin(), pairs.end(), detail::better);
    out.ranked.insert(out.ranked.end(), pairs.begin(), pairs.end());
    for (const auto* r : stage)
      for (const auto& p : pairs) {
        if (p.label != r->target || p.score < r->threshold || used[static_cast<std::size_t>(p.segment)]) continue;
        used[static_cast<std::size_t>(p.segment)] = true;
        placed[p.label] = p.segment;
        break;
      }
  };

  std::vector<const ConceptPriorRule*> first, second;
  for (const auto* r : plane_rules) (r->reference == RuleReference::Label ? second : first).push_back(r);
  run_stage(first);
  run_stage(second);
  std::stable_sort(out.ranked.begin(), out.ranked.end(), detail::better);

  for (const auto* r : plane_rules) {
    const auto it = placed.find(r->target);
    if (it == placed.end()) {
      out.missing.push_back(r->target);
      continue;
    }
    const auto hit = std::find_if(out.ranked.begin(), out.ranked.end(), [&](const ConceptScore& c) {
      return c.label == r->target && c.segment == it->second;
    });
    out.selected.push_back(*hit);
  }
  return out;
}

struct ExtractConfig {
  SlicConfig slic;
};

struct Extraction {
  ConceptGraph graph;  // empty when no structure was found
  std::vector<std::string> warnings;
  SuperpixelMap superpixels;
  std::optional<EllipseFit> ellipse;
  ConceptScoring scoring;
};

/// SLIC, mask ellipse, rule scoring, descriptors and the complete concept graph.
/// Nodes follow rule order with ids 0..n-1; centroids are normalized pixel
/// centres. Missing structures produce a warning "<LABEL> not found".
inline Extraction extract_concept_graph(const GrayImage& image, const std::optional<GrayImage>& mask,
                                        PlaneClass plane, const RuleSet& rules, const PriorTable& priors,
                                        const ExtractConfig& cfg = {}) {
  check_image(image);
  if (mask) {
    if (mask->width != image.width || mask->height != image.height)
      throw InputError("mask is " + std::to_string(mask->width) + "x" + std::to_string(mask->height) +
                       ", image is " + std::to_string(image.width) + "x" + std::to_string(image.height));
    if (mask->pixels.size() != mask->width * mask->height) throw InputError("mask: malformed pixel buffer");
  }
  const bool needs_mask = plane == PlaneClass::FASP || plane == PlaneClass::FTSP;
  if (needs_mask && !mask)
    throw ContractError("plane " + std::string(to_string(plane)) + " requires an anatomy mask");

  Extraction ex;
  ex.superpixels = slic_segment(image, cfg.slic);
  std::optional<EllipseParams> frame;
  if (mask && needs_mask) {
    const auto boundary = mask_boundary(*mask);
    ex.ellipse = fit_ellipse(boundary);
    frame = ex.ellipse->ellipse;
  }
  ex.scoring = score_concepts(ex.superpixels, frame, plane, rules, mask ? &*mask : nullptr);
  for (ConceptLabel l : ex.scoring.missing) ex.warnings.push_back(std::string(to_string(l)) + " not found");

  const auto gradient = standardized_gradient(image);
  std::vector<ConceptNode> nodes;
  for (const auto& sel : ex.scoring.selected) {
    const auto px = ex.superpixels.pixels_of(sel.segment);
    const auto& st = ex.superpixels.stats[static_cast<std::size_t>(sel.segment)];
    ConceptNode node;
    node.id = static_cast<int>(nodes.size());
    node.label = sel.label;
    node.centroid = {(st.cx + 0.5) / double(image.width), (st.cy + 0.5) / double(image.height)};
    node.features = patch_descriptor(image, px, gradient);
    nodes.push_back(std::move(node));
  }
  if (nodes.empty()) {
    ex.graph.label = plane;
    ex.warnings.push_back("no structure found; graph is empty");
  } else {
    ex.graph = build_graph(std::move(nodes), priors, plane);
  }
  return ex;
}

}  // namespace cgn
