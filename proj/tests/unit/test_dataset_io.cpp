#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "cgn/dataset_io.hpp"

using namespace cgn;

namespace {

// Random valid graph; features and centroids use the full double range of
// [0,1] so the text round trip is exercised on awkward values.
ConceptGraph random_graph(std::mt19937_64& rng, std::size_t dim) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> count(1, 4), label(0, 8), plane(0, 3);
  std::vector<ConceptNode> nodes;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    ConceptNode node;
    node.id = i;
    node.label = static_cast<ConceptLabel>(label(rng));
    node.centroid = {u(rng), u(rng)};
    node.features.resize(dim);
    for (double& f : node.features) f = std::ldexp(u(rng), -std::uniform_int_distribution<int>(0, 40)(rng));
    nodes.push_back(node);
  }
  PriorTable priors(u(rng) * 2.0);
  return build_graph(nodes, priors, static_cast<PlaneClass>(plane(rng)));
}

bool bitwise(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

void expect_same_graph(const ConceptGraph& a, const ConceptGraph& b) {
  ASSERT_EQ(a.label, b.label);
  ASSERT_EQ(a.nodes.size(), b.nodes.size());
  ASSERT_EQ(a.edges.size(), b.edges.size());
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    EXPECT_EQ(a.nodes[i].id, b.nodes[i].id);
    EXPECT_EQ(a.nodes[i].label, b.nodes[i].label);
    EXPECT_TRUE(bitwise(a.nodes[i].centroid.x, b.nodes[i].centroid.x));
    EXPECT_TRUE(bitwise(a.nodes[i].centroid.y, b.nodes[i].centroid.y));
    ASSERT_EQ(a.nodes[i].features.size(), b.nodes[i].features.size());
    for (std::size_t k = 0; k < a.nodes[i].features.size(); ++k)
      EXPECT_TRUE(bitwise(a.nodes[i].features[k], b.nodes[i].features[k]));
  }
  for (std::size_t e = 0; e < a.edges.size(); ++e) {
    EXPECT_EQ(a.edges[e].src, b.edges[e].src);
    EXPECT_EQ(a.edges[e].dst, b.edges[e].dst);
    const auto sa = a.edges[e].spatial.as_array(), sb = b.edges[e].spatial.as_array();
    for (std::size_t k = 0; k < 4; ++k) EXPECT_TRUE(bitwise(sa[k], sb[k]));
    EXPECT_TRUE(bitwise(a.edges[e].alpha, b.edges[e].alpha));
  }
}

const char* kHeader8 = R"({"version":1,"feature_dim":8,"classes":["FASP","FFSP","FTSP","OTHER"]})";

}  // namespace

TEST(DatasetIo, RoundTripIsIdentityOnRandomGraphs) {
  std::mt19937_64 rng(2024);
  Dataset d;
  d.feature_dim = 8;
  for (int i = 0; i < 1000; ++i) d.graphs.push_back(random_graph(rng, d.feature_dim));
  const Dataset back = parse(serialize(d));
  EXPECT_EQ(back.feature_dim, 8u);
  ASSERT_EQ(back.graphs.size(), d.graphs.size());
  for (std::size_t i = 0; i < d.graphs.size(); ++i) {
    expect_same_graph(d.graphs[i], back.graphs[i]);
    if (HasFailure()) FAIL() << "graph " << i;
  }
  EXPECT_EQ(serialize(back), serialize(d));
}

TEST(DatasetIo, HeaderLayout) {
  Dataset d;
  d.feature_dim = 3;
  EXPECT_EQ(serialize(d), std::string(R"({"version":1,"feature_dim":3,"classes":["FASP","FFSP","FTSP","OTHER"]})") + "\n");
}

TEST(DatasetIo, SynthBlockSurvives) {
  Dataset d;
  d.feature_dim = 2;
  d.synth["seed"] = 7;
  d.synth["sigma"] = 0.15;
  const Dataset back = parse(serialize(d));
  EXPECT_EQ(back.synth.dump(), d.synth.dump());
}

TEST(DatasetIo, MissingFeaturesIsSchemaErrorNamingTheField) {
  const std::string text = std::string(kHeader8) + "\n" +
                           R"({"label":0,"nodes":[{"id":0,"concept":"SB","centroid":[0.5,0.5]}],"edges":[]})" + "\n";
  try {
    parse(text);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("features"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, FeatureLengthMismatchIsSchemaError) {
  const std::string text = std::string(kHeader8) + "\n" +
                           R"({"label":0,"nodes":[{"id":0,"concept":"SB","centroid":[0.5,0.5],"features":[1,2,3,4,5,6,7]}],"edges":[]})" +
                           "\n";
  try {
    parse(text);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("feature length"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, MalformedLineReportsLineNumber) {
  const std::string text = std::string(kHeader8) + "\n\n{\"label\":0,\n";
  try {
    parse(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(DatasetIo, RejectsBadHeaders) {
  EXPECT_THROW(parse(""), ParseError);
  EXPECT_THROW(parse(R"({"version":2,"feature_dim":8,"classes":["FASP","FFSP","FTSP","OTHER"]})"), SchemaError);
  EXPECT_THROW(parse(R"({"version":1,"feature_dim":8,"classes":["A","B","C","D"]})"), SchemaError);
  EXPECT_THROW(parse(R"({"version":1,"classes":["FASP","FFSP","FTSP","OTHER"]})"), SchemaError);
}

TEST(DatasetIo, UnknownConceptIsSchemaError) {
  const std::string text = std::string(kHeader8) + "\n" +
                           R"({"label":0,"nodes":[{"id":0,"concept":"XX","centroid":[0.5,0.5],"features":[1,2,3,4,5,6,7,8]}],"edges":[]})";
  EXPECT_THROW(parse(text), SchemaError);
}

TEST(DatasetIo, SerializeRejectsInvalidGraphs) {
  std::mt19937_64 rng(1);
  Dataset d;
  d.feature_dim = 4;
  d.graphs.push_back(random_graph(rng, 4));
  d.graphs[0].nodes[0].features[0] = std::nan("");
  EXPECT_THROW(serialize(d), ValidationError);
}

TEST(DatasetIo, FileRoundTrip) {
  std::mt19937_64 rng(5);
  Dataset d;
  d.feature_dim = 5;
  for (int i = 0; i < 10; ++i) d.graphs.push_back(random_graph(rng, 5));
  const auto path = (std::filesystem::temp_directory_path() / "cgn_dataset_io_test.jsonl").string();
  write_dataset(path, d);
  const Dataset back = read_dataset(path);
  std::filesystem::remove(path);
  ASSERT_EQ(back.graphs.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) expect_same_graph(d.graphs[i], back.graphs[i]);
  EXPECT_THROW(read_dataset(path), InputError);
}

TEST(PriorTableIo, ParsesArrowKeysAndDefault) {
  const auto t = prior_table_from_json(Json::parse(R"({"SB->UV":0.5,"default":2.0})"));
  EXPECT_EQ(t.lookup(ConceptLabel::SB, ConceptLabel::UV), 0.5);
  EXPECT_EQ(t.lookup(ConceptLabel::UV, ConceptLabel::SB), 2.0);
  const auto again = prior_table_from_json(Json::parse(prior_table_to_json(t).dump()));
  EXPECT_EQ(again.entries(), t.entries());
  EXPECT_EQ(again.default_value(), 2.0);
}

TEST(PriorTableIo, RejectsMalformedEntries) {
  EXPECT_THROW(prior_table_from_json(Json::parse(R"({"SB-UV":0.5})")), SchemaError);
  EXPECT_THROW(prior_table_from_json(Json::parse(R"({"SB->QQ":0.5})")), SchemaError);
  EXPECT_THROW(prior_table_from_json(Json::parse(R"({"SB->UV":"x"})")), SchemaError);
  EXPECT_THROW(prior_table_from_json(Json::parse(R"({"SB->UV":-1})")), ValidationError);
  EXPECT_THROW(prior_table_from_json(Json::parse("[1]")), SchemaError);
}
