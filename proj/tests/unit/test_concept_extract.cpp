#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "cgn/concept_extract.hpp"
#include "support/phantoms.hpp"

using namespace cgn;
using cgn::testing::PhantomOptions;

namespace {

std::set<ConceptLabel> labels_of(const ConceptGraph& g) {
  std::set<ConceptLabel> out;
  for (const auto& n : g.nodes) out.insert(n.label);
  return out;
}

// Each selected segment must sit mostly on the structure planted for its label.
void expect_on_planted(const Extraction& ex, const cgn::testing::Phantom& ph) {
  for (const auto& sel : ex.scoring.selected) {
    const auto it = ph.planted.find(sel.label);
    ASSERT_NE(it, ph.planted.end()) << to_string(sel.label) << " was not planted";
    EXPECT_GT(cgn::testing::overlap(ex.superpixels.labels, sel.segment, it->second), 0.5) << to_string(sel.label);
  }
}

// Constant-intensity image cut into horizontal bands ending at the given rows.
SuperpixelMap banded_map(const GrayImage& img, const std::vector<std::size_t>& ends) {
  SuperpixelMap map;
  map.width = img.width;
  map.height = img.height;
  map.labels.resize(img.width * img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    const auto band = std::upper_bound(ends.begin(), ends.end(), y) - ends.begin();
    for (std::size_t x = 0; x < img.width; ++x) map.labels[y * img.width + x] = static_cast<int>(band);
  }
  map.stats = segment_stats(img, map.labels, ends.size());
  return map;
}

ConceptPriorRule flat_rule(PlaneClass plane, ConceptLabel target) {
  ConceptPriorRule r;
  r.plane = plane;
  r.target = target;
  r.w_intensity = 1.0;
  r.threshold = 0.0;
  return r;
}

// Descriptor recomputed pixel by pixel from an inside-mask over the whole image.
std::vector<double> oracle_descriptor(const GrayImage& img, const std::vector<bool>& in) {
  const std::size_t w = img.width, h = img.height;
  std::vector<double> z(w * h);
  double mu = 0.0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) mu += img.at(x, y);
  mu /= double(w * h);
  double ss = 0.0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) ss += (img.at(x, y) - mu) * (img.at(x, y) - mu);
  const double sd = std::sqrt(ss / double(w * h));
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) z[y * w + x] = sd > 0 ? (img.at(x, y) - mu) / sd : 0.0;
  auto zat = [&](long x, long y) { return z[std::size_t(y) * w + std::size_t(x)]; };

  std::vector<double> d(16, 0.0);
  double n = 0, sum = 0, sx = 0, sy = 0, gsum = 0;
  std::size_t perim = 0;
  auto inside = [&](long x, long y) {
    return x >= 0 && y >= 0 && x < long(w) && y < long(h) && in[std::size_t(y) * w + std::size_t(x)];
  };
  for (long y = 0; y < long(h); ++y)
    for (long x = 0; x < long(w); ++x) {
      if (!inside(x, y)) continue;
      const int v = img.at(std::size_t(x), std::size_t(y));
      n += 1;
      sum += v;
      sx += double(x);
      sy += double(y);
      d[std::size_t(v) / 32] += 1;
      perim += !inside(x - 1, y) + !inside(x + 1, y) + !inside(x, y - 1) + !inside(x, y + 1);
      const long xl = std::max(0L, x - 1), xr = std::min(long(w) - 1, x + 1);
      const long yu = std::max(0L, y - 1), yd = std::min(long(h) - 1, y + 1);
      const double gx = (zat(xr, y) - zat(xl, y)) / double(xr - xl);
      const double gy = (zat(x, yd) - zat(x, yu)) / double(yd - yu);
      gsum += std::sqrt(gx * gx + gy * gy);
    }
  for (int b = 0; b < 8; ++b) d[std::size_t(b)] /= n;
  const double mean = sum / n, cx = sx / n, cy = sy / n;
  double var = 0;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (long y = 0; y < long(h); ++y)
    for (long x = 0; x < long(w); ++x) {
      if (!inside(x, y)) continue;
      const int v = img.at(std::size_t(x), std::size_t(y));
      var += (v - mean) * (v - mean);
      const Eigen::Vector2d r(double(x) - cx, double(y) - cy);
      cov += r * r.transpose();
    }
  const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(cov).eigenvalues();
  const double g = gsum / n;
  d[8] = mean / 255.0;
  d[9] = var / n / (127.5 * 127.5);
  d[10] = n / double(w * h);
  d[11] = ev(1) > 0 ? std::sqrt(std::max(0.0, 1.0 - std::max(ev(0), 0.0) / ev(1))) : 0.0;
  d[12] = (cx + 0.5) / double(w);
  d[13] = (cy + 0.5) / double(h);
  d[14] = double(perim) / (4.0 * n);
  d[15] = g / (1.0 + g);
  return d;
}

}  // namespace

TEST(ExtractConceptGraph, FaspPhantomFindsAllThree) {
  const auto ph = cgn::testing::fasp_phantom();
  const auto ex = extract_concept_graph(ph.image, ph.mask, PlaneClass::FASP, default_rules(), PriorTable(1.0));
  EXPECT_TRUE(ex.warnings.empty()) << ex.warnings.front();
  ASSERT_EQ(ex.graph.nodes.size(), 3u);
  EXPECT_EQ(labels_of(ex.graph), (std::set<ConceptLabel>{ConceptLabel::SB, ConceptLabel::UV, ConceptLabel::SP}));
  EXPECT_EQ(ex.graph.label, PlaneClass::FASP);
  EXPECT_EQ(ex.graph.edges.size(), 6u);
  for (const auto& n : ex.graph.nodes) EXPECT_EQ(n.features.size(), kDescriptorDim);
  expect_on_planted(ex, ph);
}

TEST(ExtractConceptGraph, FtspPhantomFindsAllThree) {
  const auto ph = cgn::testing::ftsp_phantom();
  const auto ex = extract_concept_graph(ph.image, ph.mask, PlaneClass::FTSP, default_rules(), PriorTable(1.0));
  EXPECT_TRUE(ex.warnings.empty()) << ex.warnings.front();
  ASSERT_EQ(ex.graph.nodes.size(), 3u);
  EXPECT_EQ(labels_of(ex.graph), (std::set<ConceptLabel>{ConceptLabel::CSP, ConceptLabel::LT, ConceptLabel::RT}));
  expect_on_planted(ex, ph);
}

TEST(ExtractConceptGraph, PhantomsAcrossSeedsAndTilts) {
  for (std::uint64_t seed : {1u, 2u, 3u})
    for (double deg : {0.0, 35.0, 120.0}) {
      PhantomOptions o;
      o.seed = seed;
      o.tilt = deg * std::numbers::pi / 180.0;
      const auto fa = cgn::testing::fasp_phantom(o);
      const auto ea = extract_concept_graph(fa.image, fa.mask, PlaneClass::FASP, default_rules(), PriorTable(1.0));
      EXPECT_EQ(ea.graph.nodes.size(), 3u) << "FASP seed " << seed << " tilt " << deg;
      expect_on_planted(ea, fa);
      const auto ft = cgn::testing::ftsp_phantom(o);
      const auto et = extract_concept_graph(ft.image, ft.mask, PlaneClass::FTSP, default_rules(), PriorTable(1.0));
      EXPECT_EQ(et.graph.nodes.size(), 3u) << "FTSP seed " << seed << " tilt " << deg;
      expect_on_planted(et, ft);
    }
}

TEST(ExtractConceptGraph, MissingStomachBubbleWarns) {
  PhantomOptions o;
  o.sb = false;
  const auto ph = cgn::testing::fasp_phantom(o);
  const auto ex = extract_concept_graph(ph.image, ph.mask, PlaneClass::FASP, default_rules(), PriorTable(1.0));
  ASSERT_EQ(ex.graph.nodes.size(), 2u);
  EXPECT_EQ(labels_of(ex.graph), (std::set<ConceptLabel>{ConceptLabel::UV, ConceptLabel::SP}));
  ASSERT_EQ(ex.warnings.size(), 1u);
  EXPECT_EQ(ex.warnings[0], "SB not found");
  expect_on_planted(ex, ph);
}

TEST(ExtractConceptGraph, MissingThalamusWarns) {
  PhantomOptions o;
  o.lt = false;
  const auto ph = cgn::testing::ftsp_phantom(o);
  const auto ex = extract_concept_graph(ph.image, ph.mask, PlaneClass::FTSP, default_rules(), PriorTable(1.0));
  EXPECT_EQ(labels_of(ex.graph), (std::set<ConceptLabel>{ConceptLabel::CSP, ConceptLabel::RT}));
  ASSERT_EQ(ex.warnings.size(), 1u);
  EXPECT_EQ(ex.warnings[0], "LT not found");
}

TEST(ExtractConceptGraph, Deterministic) {
  const auto ph = cgn::testing::fasp_phantom();
  const auto a = extract_concept_graph(ph.image, ph.mask, PlaneClass::FASP, default_rules(), PriorTable(1.0));
  const auto b = extract_concept_graph(ph.image, ph.mask, PlaneClass::FASP, default_rules(), PriorTable(1.0));
  ASSERT_EQ(a.graph.nodes.size(), b.graph.nodes.size());
  for (std::size_t i = 0; i < a.graph.nodes.size(); ++i) {
    EXPECT_EQ(a.graph.nodes[i].label, b.graph.nodes[i].label);
    EXPECT_EQ(a.graph.nodes[i].features, b.graph.nodes[i].features);
  }
  EXPECT_EQ(a.superpixels.labels, b.superpixels.labels);
  EXPECT_EQ(a.warnings, b.warnings);
}

TEST(ExtractConceptGraph, InputContracts) {
  const auto ph = cgn::testing::fasp_phantom();
  const GrayImage small_mask(64, 64, 255);
  EXPECT_THROW(extract_concept_graph(ph.image, small_mask, PlaneClass::FASP, default_rules(), PriorTable(1.0)),
               InputError);
  EXPECT_THROW(extract_concept_graph(ph.image, std::nullopt, PlaneClass::FASP, default_rules(), PriorTable(1.0)),
               ContractError);
  EXPECT_THROW(extract_concept_graph(GrayImage(8, 8, 0), std::nullopt, PlaneClass::FFSP, default_rules(),
                                     PriorTable(1.0)),
               InputError);
  RuleSet ftsp_only;
  for (const auto& r : default_rules())
    if (r.plane == PlaneClass::FTSP) ftsp_only.push_back(r);
  EXPECT_THROW(extract_concept_graph(ph.image, ph.mask, PlaneClass::FASP, ftsp_only, PriorTable(1.0)), ConfigError);
}

TEST(ScoreConcepts, CentroidOutsideEllipseExcluded) {
  const GrayImage img(40, 40, 100);
  const auto map = banded_map(img, {10, 18, 30, 40});
  const EllipseParams e{19.5, 23.5, 19.0, 6.0, 0.0};
  const auto s = score_concepts(map, e, PlaneClass::FASP, {flat_rule(PlaneClass::FASP, ConceptLabel::SB)});
  ASSERT_FALSE(s.ranked.empty());
  for (const auto& c : s.ranked) EXPECT_EQ(c.segment, 2);
  ASSERT_EQ(s.selected.size(), 1u);
  EXPECT_EQ(s.selected[0].segment, 2);
}

TEST(ScoreConcepts, TieBrokenByAxisDistanceThenId) {
  const GrayImage img(40, 40, 100);
  const EllipseParams e{19.5, 19.5, 19.0, 19.0, 0.0};
  // centroid rows 4.5, 13.5, 23.5, 34.5: segment 2 is nearest the major axis
  const auto uneven = score_concepts(banded_map(img, {10, 18, 30, 40}), e, PlaneClass::FASP,
                                     {flat_rule(PlaneClass::FASP, ConceptLabel::SB)});
  ASSERT_EQ(uneven.selected.size(), 1u);
  for (const auto& c : uneven.ranked) EXPECT_EQ(c.score, uneven.ranked.front().score);
  EXPECT_EQ(uneven.selected[0].segment, 2);
  // rows 4.5, 14.5, 24.5, 34.5: segments 1 and 2 tie on distance too
  const auto even = score_concepts(banded_map(img, {10, 20, 30, 40}), e, PlaneClass::FASP,
                                   {flat_rule(PlaneClass::FASP, ConceptLabel::SB)});
  ASSERT_EQ(even.selected.size(), 1u);
  EXPECT_EQ(even.selected[0].segment, 1);
}

TEST(ScoreConcepts, ThresholdAndConfig) {
  const GrayImage img(40, 40, 100);
  const auto map = banded_map(img, {10, 20, 30, 40});
  const EllipseParams e{19.5, 19.5, 19.0, 19.0, 0.0};
  auto rule = flat_rule(PlaneClass::FASP, ConceptLabel::UV);
  rule.bias = -10.0;
  rule.threshold = 0.5;
  const auto s = score_concepts(map, e, PlaneClass::FASP, {rule});
  EXPECT_TRUE(s.selected.empty());
  ASSERT_EQ(s.missing.size(), 1u);
  EXPECT_EQ(s.missing[0], ConceptLabel::UV);
  EXPECT_THROW(score_concepts(map, e, PlaneClass::FTSP, {rule}), ConfigError);
  EXPECT_THROW(score_concepts(map, std::nullopt, PlaneClass::FASP, {rule}), ContractError);
  rule.threshold = 1.5;
  EXPECT_THROW(score_concepts(map, e, PlaneClass::FASP, {rule}), ConfigError);
  rule.threshold = 0.5;
  rule.w_texture = std::nan("");
  EXPECT_THROW(score_concepts(map, e, PlaneClass::FASP, {rule}), ConfigError);
}

TEST(PatchDescriptor, ConstantPatch) {
  const GrayImage img(32, 32, 77);
  std::vector<std::size_t> seg;
  for (std::size_t y = 4; y < 12; ++y)
    for (std::size_t x = 6; x < 10; ++x) seg.push_back(y * 32 + x);
  const auto d = patch_descriptor(img, seg);
  ASSERT_EQ(d.size(), kDescriptorDim);
  EXPECT_EQ(d[9], 0.0);
  EXPECT_EQ(d[77 / 32], 1.0);
  for (std::size_t b = 0; b < 8; ++b) {
    if (b != 77 / 32) {
      EXPECT_EQ(d[b], 0.0);
    }
  }
  EXPECT_EQ(d[15], 0.0);
  for (double v : d) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(PatchDescriptor, MatchesPerPixelOracle) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 30; ++t) {
    const std::size_t w = 16 + rng() % 40, h = 16 + rng() % 40;
    GrayImage img(w, h);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() % 256);
    std::vector<bool> in(w * h, false);
    std::vector<std::size_t> seg;
    const double keep = 0.05 + 0.9 * double(rng() % 1000) / 1000.0;
    for (std::size_t p = 0; p < w * h; ++p)
      if (double(rng() % 1000) / 1000.0 < keep) {
        in[p] = true;
        seg.push_back(p);
      }
    if (seg.empty()) continue;
    const auto want = oracle_descriptor(img, in);
    const auto got = patch_descriptor(img, seg);
    ASSERT_EQ(got.size(), kDescriptorDim);
    for (std::size_t i = 0; i < kDescriptorDim; ++i) {
      EXPECT_NEAR(got[i], want[i], 1e-12) << "entry " << i << " trial " << t;
      EXPECT_GE(got[i], 0.0);
      EXPECT_LE(got[i], 1.0);
    }
  }
}

TEST(PatchDescriptor, EnumerationOrderInvariant) {
  std::mt19937_64 rng(6);
  GrayImage img(30, 20);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() % 256);
  std::vector<std::size_t> seg;
  for (std::size_t p = 0; p < 600; p += 3) seg.push_back(p);
  const auto base = patch_descriptor(img, seg);
  for (int t = 0; t < 10; ++t) {
    std::shuffle(seg.begin(), seg.end(), rng);
    EXPECT_EQ(patch_descriptor(img, seg), base);
  }
}

TEST(PatchDescriptor, Contracts) {
  const GrayImage img(16, 16, 3);
  EXPECT_THROW(patch_descriptor(img, std::vector<std::size_t>{}), ContractError);
  EXPECT_THROW(patch_descriptor(img, std::vector<std::size_t>{1, 1}), ContractError);
  EXPECT_THROW(patch_descriptor(img, std::vector<std::size_t>{256}), ContractError);
}

TEST(Rules, JsonRoundTrip) {
  const auto rules = default_rules();
  const auto back = rules_from_json(Json::parse(rules_to_json(rules).dump()));
  ASSERT_EQ(back.size(), rules.size());
  for (std::size_t i = 0; i < rules.size(); ++i) {
    EXPECT_EQ(back[i].plane, rules[i].plane);
    EXPECT_EQ(back[i].target, rules[i].target);
    EXPECT_EQ(back[i].w_dist_major, rules[i].w_dist_major);
    EXPECT_EQ(back[i].w_dist_minor, rules[i].w_dist_minor);
    EXPECT_EQ(back[i].w_intensity, rules[i].w_intensity);
    EXPECT_EQ(back[i].w_texture, rules[i].w_texture);
    EXPECT_EQ(back[i].w_eccentricity, rules[i].w_eccentricity);
    EXPECT_EQ(back[i].w_side, rules[i].w_side);
    EXPECT_EQ(back[i].bias, rules[i].bias);
    EXPECT_EQ(back[i].threshold, rules[i].threshold);
    EXPECT_EQ(back[i].reference, rules[i].reference);
    EXPECT_EQ(back[i].reference_label, rules[i].reference_label);
  }
}

TEST(Rules, SchemaErrors) {
  EXPECT_THROW(rules_from_json(Json::object()), SchemaError);
  EXPECT_THROW(rules_from_json(Json::parse(R"([{"plane":"XX","target":"SB","weights":{}}])")), SchemaError);
  EXPECT_THROW(rules_from_json(Json::parse(R"([{"plane":"FASP","target":"ZZ","weights":{}}])")), SchemaError);
  EXPECT_THROW(rules_from_json(Json::parse(R"([{"plane":"FASP","target":"SB","weights":{"size":1}}])")),
               SchemaError);
  EXPECT_THROW(rules_from_json(Json::parse(R"([{"plane":"FASP","target":"SB"}])")), SchemaError);
  EXPECT_THROW(rules_from_json(Json::parse(R"([{"plane":"FASP","target":"SB","weights":{},"threshold":2}])")),
               ConfigError);
  const auto ok = rules_from_json(Json::parse(R"([{"plane":"FASP","target":"SB","weights":{"intensity":-3}}])"));
  ASSERT_EQ(ok.size(), 1u);
  EXPECT_EQ(ok[0].w_intensity, -3.0);
  EXPECT_EQ(ok[0].threshold, 0.5);
  EXPECT_EQ(ok[0].reference, RuleReference::Mask);

  const auto path = (std::filesystem::temp_directory_path() / "cgn_rules_bad.json").string();
  std::ofstream(path) << "[{";
  EXPECT_THROW(load_rules(path), ParseError);
  std::filesystem::remove(path);
}
