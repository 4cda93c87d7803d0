#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "xmodal/errors.hpp"
#include "xmodal/graph.hpp"

namespace xmodal {
namespace {

namespace fs = std::filesystem;

// Brute force: each node sorts all others by (distance, index) and keeps
// the first min(k, N-1).
std::set<Edge> knn_oracle(const std::vector<Point>& pts, std::size_t k) {
  std::set<Edge> out;
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      cand.push_back({std::hypot(pts[i].row - pts[j].row, pts[i].col - pts[j].col), j});
    }
    std::sort(cand.begin(), cand.end());
    for (std::size_t t = 0; t < std::min(k, cand.size()); ++t) {
      const auto a = static_cast<std::uint32_t>(std::min(i, cand[t].second));
      const auto b = static_cast<std::uint32_t>(std::max(i, cand[t].second));
      out.insert({a, b});
    }
  }
  return out;
}

TEST(NodeFeatures, SingleSegmentConstantImage) {
  const ImageRecord img(10, 10, 0.7);
  const SegmentationResult seg = slic_segment(img, {1, 10.0, 10});
  const Matrix f = build_node_features(seg, img);
  ASSERT_EQ(f.rows(), 1u);
  EXPECT_DOUBLE_EQ(f(0, 0), 0.45);
  EXPECT_DOUBLE_EQ(f(0, 1), 0.45);
  EXPECT_NEAR(f(0, 2), 0.7, 1e-15);
  EXPECT_NEAR(f(0, 3), 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(f(0, 4), 1.0);
}

TEST(NodeFeatures, IdealHalfTonePartition) {
  ImageRecord img(20, 20);
  std::vector<std::uint32_t> labels(400);
  for (std::size_t r = 0; r < 20; ++r) {
    for (std::size_t c = 0; c < 20; ++c) {
      img.at(r, c) = c >= 10 ? 1.0 : 0.0;
      labels[r * 20 + c] = c >= 10 ? 1 : 0;
    }
  }
  const Matrix f = build_node_features(relabel_and_measure(img, labels), img);
  ASSERT_EQ(f.rows(), 2u);
  EXPECT_EQ(f(0, 2), 0.0);
  EXPECT_EQ(f(1, 2), 1.0);
  EXPECT_EQ(f(0, 4), 0.5);
  EXPECT_EQ(f(1, 4), 0.5);
}

TEST(NodeFeatures, BoundedOnRandomImages) {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    ImageRecord img(25 + rng.below(20), 25 + rng.below(20));
    for (double& v : img.pixels) v = rng.uniform();
    const Matrix f = build_node_features(slic_segment(img, {30, 5.0, 5}), img);
    for (double v : f.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(NodeFeatures, DimensionMismatch) {
  const ImageRecord img(10, 10, 0.5);
  const SegmentationResult seg = slic_segment(img, {4, 10.0, 5});
  try {
    build_node_features(seg, ImageRecord(10, 11, 0.5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kArgument);
  }
}

TEST(Knn, CollinearTieBreak) {
  const std::vector<Point> pts{{0, 0}, {0, 1}, {0, 2}};
  const KnnEdges e = knn_graph(pts, 1, 1.0);
  EXPECT_EQ(e.edges, (std::vector<Edge>{{0, 1}, {1, 2}}));
  EXPECT_EQ(e.dist, (std::vector<double>{1.0, 1.0}));
}

TEST(Knn, CompleteWhenKLarge) {
  Rng rng(4);
  for (std::size_t n : {1, 2, 5, 9}) {
    std::vector<Point> pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back({rng.uniform(0, 10), rng.uniform(0, 10)});
    EXPECT_EQ(knn_graph(pts, n + 3, 1.0).edges.size(), n * (n - 1) / 2);
  }
}

TEST(Knn, UnitSquareIsFourCycle) {
  const std::vector<Point> pts{{0, 0}, {0, 1}, {1, 1}, {1, 0}};
  const KnnEdges e = knn_graph(pts, 2, std::sqrt(2.0));
  EXPECT_EQ(e.edges, (std::vector<Edge>{{0, 1}, {0, 3}, {1, 2}, {2, 3}}));
  for (double d : e.dist) EXPECT_DOUBLE_EQ(d, 1.0 / std::sqrt(2.0));
}

TEST(Knn, MatchesBruteForceOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    const std::size_t k = 1 + rng.below(10);
    std::vector<Point> pts;
    for (std::size_t i = 0; i < n; ++i) {
      // Integer grid coordinates force plenty of distance ties.
      pts.push_back({static_cast<double>(rng.below(6)), static_cast<double>(rng.below(6))});
    }
    const KnnEdges e = knn_graph(pts, k, 10.0);
    const std::set<Edge> want = knn_oracle(pts, k);
    EXPECT_EQ(std::set<Edge>(e.edges.begin(), e.edges.end()), want);
    EXPECT_TRUE(std::is_sorted(e.edges.begin(), e.edges.end()));
    ASSERT_EQ(e.edges.size(), e.dist.size());
    std::vector<std::size_t> degree(n, 0);
    for (std::size_t i = 0; i < e.edges.size(); ++i) {
      const auto [a, b] = e.edges[i];
      EXPECT_LT(a, b);
      EXPECT_DOUBLE_EQ(e.dist[i], std::hypot(pts[a].row - pts[b].row, pts[a].col - pts[b].col) / 10.0);
      ++degree[a];
      ++degree[b];
    }
    for (std::size_t d : degree) {
      EXPECT_GE(d, std::min(k, n - 1));
      EXPECT_LE(d, n - 1);
    }
  }
}

TEST(GraphFromImage, SingleNode) {
  ImageRecord img(10, 10, 0.3);
  img.subject_id = "a";
  GraphBuildConfig cfg;
  cfg.slic.n_segments = 1;
  const ModalGraph g = graph_from_image(img, cfg, "id");
  EXPECT_EQ(g.n_nodes(), 1u);
  EXPECT_TRUE(g.edges.empty());
  EXPECT_EQ(g.graph_id, "id");
  EXPECT_EQ(g.subject_id, "a");
}

TEST(GraphFromImage, DefaultSizeDegreeBound) {
  Rng rng(6);
  ImageRecord img(200, 200);
  for (std::size_t r = 0; r < 200; ++r)
    for (std::size_t c = 0; c < 200; ++c)
      img.at(r, c) = 0.5 + 0.4 * std::sin(r / 13.0) * std::cos(c / 7.0) + 0.05 * rng.uniform();
  const GraphBuildConfig cfg;
  const ModalGraph g = graph_from_image(img, cfg);
  EXPECT_LE(g.n_nodes(), 300u);
  EXPECT_GT(g.n_nodes(), cfg.knn_k);
  g.validate();
  std::vector<std::size_t> degree(g.n_nodes(), 0);
  for (const auto& e : g.edges) {
    ++degree[e.a];
    ++degree[e.b];
  }
  for (std::size_t d : degree) EXPECT_GE(d, cfg.knn_k);
  for (double d : g.edge_dist) {
    EXPECT_GT(d, 0.0);
    EXPECT_LE(d, 1.0);
  }
}

TEST(GraphFromImage, GoldenFixture) {
  const ImageRecord img = load_image(testing::data_path("checker.png"), {40, 30});
  ImageRecord fixture(40, 30);
  for (std::size_t r = 0; r < 30; ++r)
    for (std::size_t c = 0; c < 40; ++c) fixture.at(r, c) = 0.5 * img.at(r, c) + 0.5 * ((r / 7 + c / 9) % 2);
  fixture.subject_id = "golden";
  GraphBuildConfig cfg;
  cfg.slic.n_segments = 12;
  cfg.knn_k = 3;
  const std::string a = graph_to_json_line(graph_from_image(fixture, cfg, "golden_face"));
  const std::string b = graph_to_json_line(graph_from_image(fixture, cfg, "golden_face"));
  EXPECT_EQ(a, b);
  EXPECT_TRUE(testing::matches_golden("graph_fixture.jsonl", a + "\n"));
}

class GraphStore : public ::testing::Test {
 protected:
  fs::path path_ = fs::temp_directory_path() / "xmodal_store_test.jsonl";
  void TearDown() override { fs::remove(path_); }
};

TEST_F(GraphStore, EmptyRoundTrip) {
  write_graph_store({}, path_.string());
  EXPECT_EQ(fs::file_size(path_), 0u);
  EXPECT_TRUE(read_graph_store(path_.string()).empty());
}

TEST_F(GraphStore, RandomRoundTrip) {
  Rng rng(7);
  std::vector<ModalGraph> graphs;
  for (int i = 0; i < 100; ++i) {
    ModalGraph g = testing::random_graph(1 + rng.below(12), rng);
    g.graph_id = "g" + std::to_string(i);
    g.subject_id = "subject \"" + std::to_string(i % 7) + "\"";
    g.modality = static_cast<Modality>(i % 3);
    if (i % 4 == 0) g.view = i % 8 == 0 ? "frontal" : "lateral";
    graphs.push_back(g);
  }
  write_graph_store(graphs, path_.string());
  EXPECT_EQ(read_graph_store(path_.string()), graphs);
}

TEST_F(GraphStore, MalformedLineNamesLineNumber) {
  Rng rng(8);
  ModalGraph g = testing::random_graph(3, rng);
  {
    std::ofstream out(path_);
    out << graph_to_json_line(g) << "\n" << graph_to_json_line(g) << "\n{\"graph_id\": 3\n";
  }
  try {
    read_graph_store(path_.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
}

TEST_F(GraphStore, RejectsInvalidGraph) {
  {
    std::ofstream out(path_);
    out << R"({"graph_id":"x","subject_id":"s","modality":"face","n_nodes":2,"d0":5,)"
        << R"("node_features":[[0,0,0,0,0],[1,1,1,1,1]],"edges":[[0,5]],"edge_dist":[0.5]})" << "\n";
  }
  EXPECT_THROW(read_graph_store(path_.string()), Error);
}

}  // namespace
}  // namespace xmodal
