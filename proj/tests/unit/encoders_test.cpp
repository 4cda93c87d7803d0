#include <cmath>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "xmodal/encoders.hpp"
#include "xmodal/errors.hpp"

namespace xmodal {
namespace {

using testing::probe;
using testing::random_graph;
using testing::random_matrix;

double leaky(double x) { return x > 0 ? x : kGatLeakySlope * x; }

Adjacency edges(std::size_t n, std::vector<Edge> e, std::vector<double> d = {}) {
  return Adjacency::from_edges(n, e, d);
}

// ---- GCN ----

TEST(Gcn, TwoNodeExample) {
  const Matrix out = gcn_layer(Matrix{{1}, {0}}, edges(2, {{0, 1}}), Matrix{{1}});
  EXPECT_DOUBLE_EQ(out(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(out(1, 0), 0.5);
}

TEST(Gcn, IsolatedNodeIdentity) {
  const Matrix h{{0.3, -0.2, 0.9}};
  EXPECT_EQ(gcn_layer(h, edges(1, {}), Matrix::identity(3)), h);
}

TEST(Gcn, ZeroWeights) {
  Rng rng(1);
  const ModalGraph g = random_graph(6, rng);
  const Matrix out = gcn_layer(g.node_features, Adjacency::from_graph(g), Matrix(5, 3));
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Gcn, RowBoundWithIdentityWeights) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const ModalGraph g = random_graph(3 + rng.below(10), rng);
    const Adjacency adj = Adjacency::from_graph(g);
    const Matrix out = gcn_layer(g.node_features, adj, Matrix::identity(5));
    double bound = 0.0;
    for (std::size_t i = 0; i < adj.size(); ++i) {
      const double di = adj.neighbors[i].size() + 1.0;
      double s = 1.0 / di;
      for (auto j : adj.neighbors[i]) s += 1.0 / std::sqrt(di * (adj.neighbors[j].size() + 1.0));
      bound = std::max(bound, s);
    }
    for (double v : out.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, bound + 1e-12);
    }
  }
}

TEST(Gcn, ShapeMismatch) {
  EXPECT_THROW(gcn_layer(Matrix(2, 3), edges(2, {{0, 1}}), Matrix(2, 2)), Error);
  EXPECT_THROW(gcn_layer(Matrix(3, 2), edges(2, {{0, 1}}), Matrix(2, 2)), Error);
}

// ---- GAT ----

TEST(Gat, IsolatedNodeSingletonSoftmax) {
  Rng rng(3);
  const Matrix h = random_matrix(1, 4, rng), w = random_matrix(4, 6, rng), attn = random_matrix(3, 4, rng);
  GatCache cache;
  const Matrix out = gat_layer(h, edges(1, {}), w, attn, 3, &cache);
  EXPECT_LT(max_abs_diff(out, matmul(h, w)), 1e-15);
  for (double a : cache.alpha) EXPECT_EQ(a, 1.0);
}

TEST(Gat, IdenticalNeighboursUniformAlpha) {
  Rng rng(4);
  Matrix h(4, 3);
  const Matrix row = random_matrix(1, 3, rng);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) h(i, c) = row(0, c);
  GatCache cache;
  gat_layer(h, edges(4, {{0, 1}, {0, 2}, {0, 3}}), random_matrix(3, 4, rng), random_matrix(2, 4, rng), 2,
            &cache);
  for (double a : std::span(cache.alpha).subspan(0, 4)) EXPECT_NEAR(a, 0.25, 1e-15);
}

TEST(Gat, ThreeNodePathHandEvaluation) {
  // Path 0-1-2, scalar features, one head of width 1.
  const Matrix h{{1.0}, {-0.5}, {2.0}};
  const double w = 0.7, as = 0.3, ad = -0.4;
  const Matrix out = gat_layer(h, edges(3, {{0, 1}, {1, 2}}), Matrix{{w}}, Matrix{{as, ad}}, 1);
  const double x[3] = {1.0, -0.5, 2.0};
  const std::vector<std::vector<int>> hood{{0, 1}, {1, 0, 2}, {2, 1}};
  for (int i = 0; i < 3; ++i) {
    double z = 0.0, num = 0.0;
    for (int j : hood[i]) {
      const double e = std::exp(leaky(as * w * x[i] + ad * w * x[j]));
      z += e;
      num += e * w * x[j];
    }
    EXPECT_NEAR(out(i, 0), num / z, 1e-10);
  }
}

// ---- SAGE ----

TEST(Sage, IsolatedNode) {
  Rng rng(5);
  const Matrix h = random_matrix(1, 3, rng), ws = random_matrix(3, 2, rng);
  EXPECT_LT(max_abs_diff(sage_layer(h, edges(1, {}), ws, random_matrix(3, 2, rng)), matmul(h, ws)), 1e-15);
}

TEST(Sage, IdenticalNeighboursHalfIdentity) {
  Matrix h(3, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    h(i, 0) = 0.25;
    h(i, 1) = -1.5;
  }
  const Matrix half = Matrix::identity(2) * 0.5;
  EXPECT_LT(max_abs_diff(sage_layer(h, edges(3, {{0, 1}, {1, 2}}), half, half), h), 1e-15);
}

TEST(Sage, TwoNodeExample) {
  const Matrix out = sage_layer(Matrix{{1}, {3}}, edges(2, {{0, 1}}), Matrix{{1}}, Matrix{{1}});
  EXPECT_EQ(out, (Matrix{{4}, {4}}));
}

// ---- GraphTransformer ----

TEST(GraphTransformer, IsolatedNodeResidual) {
  Rng rng(6);
  const Matrix h = random_matrix(1, 4, rng);
  const Matrix wq = random_matrix(4, 4, rng), wk = random_matrix(4, 4, rng), wv = random_matrix(4, 4, rng),
               wo = random_matrix(4, 4, rng);
  const Matrix out = graph_transformer_layer(h, edges(1, {}), {wq, wk, wv, wo}, 2);
  EXPECT_LT(max_abs_diff(out, h + matmul(matmul(h, wv), wo)), 1e-14);
}

TEST(GraphTransformer, ZeroValuesKeepInput) {
  Rng rng(7);
  const ModalGraph g = random_graph(7, rng);
  const Matrix h = random_matrix(7, 4, rng);
  const Matrix wq = random_matrix(4, 4, rng), wk = random_matrix(4, 4, rng), wo = random_matrix(4, 4, rng);
  const Matrix wv(4, 4);
  EXPECT_EQ(graph_transformer_layer(h, Adjacency::from_graph(g), {wq, wk, wv, wo}, 4), h);
}

TEST(GraphTransformer, TwoNodeHandEvaluation) {
  const double q = 0.8, k = -0.6, v = 1.3, o = 0.9, x0 = 0.5, x1 = -1.2, dist = 0.4, lam = 0.7;
  const Matrix h{{x0}, {x1}};
  for (double bias : {0.0, lam}) {
    const Matrix out = graph_transformer_layer(h, edges(2, {{0, 1}}, {dist}),
                                               {Matrix{{q}}, Matrix{{k}}, Matrix{{v}}, Matrix{{o}}}, 1, bias);
    const double x[2] = {x0, x1};
    for (int i = 0; i < 2; ++i) {
      const double s_self = q * x[i] * k * x[i];
      const double s_other = q * x[i] * k * x[1 - i] - bias * dist;
      const double a = 1.0 / (1.0 + std::exp(s_other - s_self));
      EXPECT_NEAR(out(i, 0), x[i] + o * (a * v * x[i] + (1 - a) * v * x[1 - i]), 1e-10);
    }
  }
}

TEST(GraphTransformer, NoResidualWhenWidthsDiffer) {
  Rng rng(8);
  const Matrix h = random_matrix(1, 3, rng);
  const Matrix wq = random_matrix(3, 2, rng), wk = random_matrix(3, 2, rng), wv = random_matrix(3, 2, rng),
               wo = random_matrix(2, 5, rng);
  const Matrix out = graph_transformer_layer(h, edges(1, {}), {wq, wk, wv, wo}, 1);
  EXPECT_LT(max_abs_diff(out, matmul(matmul(h, wv), wo)), 1e-14);
}

// ---- properties over all backbones ----

constexpr Backbone kBackbones[] = {Backbone::kGcn, Backbone::kGat, Backbone::kSage, Backbone::kGraphTransformer};

EncoderConfig small_config(Backbone b, std::size_t layers = 2) {
  EncoderConfig cfg;
  cfg.backbone = b;
  cfg.layers = layers;
  cfg.hidden_dim = 8;
  cfg.out_dim = 6;
  cfg.heads = 2;
  return cfg;
}

class BackboneTest : public ::testing::TestWithParam<Backbone> {};

TEST_P(BackboneTest, SingleNodeGraph) {
  Rng rng(9);
  const EncoderConfig cfg = small_config(GetParam());
  const EncoderParams p = init_encoder(cfg, "enc", rng);
  const Matrix out = encode(random_graph(1, rng), p, cfg);
  EXPECT_EQ(out.rows(), 1u);
  EXPECT_EQ(out.cols(), 6u);
  EXPECT_TRUE(out.all_finite());
}

TEST_P(BackboneTest, PermutationEquivariance) {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    EncoderConfig cfg = small_config(GetParam(), 1 + rng.below(3));
    cfg.edge_bias = trial % 2 == 1;
    const EncoderParams p = init_encoder(cfg, "enc", rng);
    const ModalGraph g = random_graph(4 + rng.below(12), rng);
    const auto perm = testing::random_permutation(g.n_nodes(), rng);
    const Matrix a = encode(g, p, cfg).gather_rows(perm);
    const Matrix b = encode(testing::permute_graph(g, perm), p, cfg);
    EXPECT_LT(max_abs_diff(a, b), 1e-10);
  }
}

TEST_P(BackboneTest, EncoderGradients) {
  Rng rng(11);
  for (int trial = 0; trial < 8; ++trial) {
    EncoderConfig cfg = small_config(GetParam(), 1 + trial % 3);
    cfg.edge_bias = trial % 2 == 0;
    EncoderParams p = init_encoder(cfg, "enc", rng);
    const ModalGraph g = random_graph(5 + rng.below(6), rng, 0.4);
    const Adjacency adj = Adjacency::from_graph(g);
    Param features("features", g.node_features);
    const Matrix r = testing::probe_weights(g.n_nodes(), cfg.out_dim, rng);
    EncodeCache cache;
    const Matrix out = encode(features.value, adj, p, cfg, &cache);
    p.zero_grad();
    features.grad = encode_backward(adj, p, cfg, cache, r);
    (void)out;
    std::vector<Param*> all = p.all();
    all.push_back(&features);
    const auto res = finite_diff_check([&] { return probe(encode(features.value, adj, p, cfg), r); }, all);
    EXPECT_LE(res.max_rel_err, 1e-4) << backbone_name(GetParam()) << " worst " << res.worst_param << "["
                                     << res.worst_index << "] analytic " << res.analytic << " numeric "
                                     << res.numeric;
  }
}

TEST_P(BackboneTest, WidthMismatch) {
  Rng rng(12);
  const EncoderConfig cfg = small_config(GetParam());
  const EncoderParams p = init_encoder(cfg, "enc", rng);
  const ModalGraph g = random_graph(4, rng);
  EXPECT_THROW(encode(random_matrix(4, 3, rng), Adjacency::from_graph(g), p, cfg), Error);
}

INSTANTIATE_TEST_SUITE_P(All, BackboneTest, ::testing::ValuesIn(kBackbones),
                         [](const auto& info) { return std::string(backbone_name(info.param)); });

TEST(AttentionStochastic, AlphaSumsToOne) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const ModalGraph g = random_graph(3 + rng.below(15), rng);
    const Adjacency adj = Adjacency::from_graph(g);
    const Matrix h = random_matrix(g.n_nodes(), 4, rng, -3, 3);
    GatCache gc;
    gat_layer(h, adj, random_matrix(4, 4, rng), random_matrix(2, 4, rng), 2, &gc);
    TransformerCache tc;
    const Matrix wq = random_matrix(4, 4, rng), wk = random_matrix(4, 4, rng), wv = random_matrix(4, 4, rng),
                 wo = random_matrix(4, 4, rng);
    graph_transformer_layer(h, adj, {wq, wk, wv, wo}, 2, 0.5, &tc);
    for (const auto* alpha : {&gc.alpha, &tc.alpha}) {
      const auto& off = alpha == &gc.alpha ? gc.offsets : tc.offsets;
      const std::size_t total = off.back();
      for (std::size_t hd = 0; hd < 2; ++hd) {
        for (std::size_t i = 0; i + 1 < off.size(); ++i) {
          double s = 0.0;
          for (std::size_t t = off[i]; t < off[i + 1]; ++t) s += (*alpha)[hd * total + t];
          EXPECT_NEAR(s, 1.0, 1e-12);
        }
      }
    }
  }
}

TEST(Encoder, ConfigValidation) {
  EncoderConfig cfg = small_config(Backbone::kGat);
  cfg.hidden_dim = 7;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = small_config(Backbone::kGcn);
  cfg.hidden_dim = 7;
  EXPECT_NO_THROW(cfg.validate());
  cfg.layers = 0;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_THROW(parse_backbone("resnet"), Error);
  for (Backbone b : kBackbones) EXPECT_EQ(parse_backbone(backbone_name(b)), b);
}

TEST(Encoder, GoldenOutput) {
  Rng rng(2024);
  const ModalGraph g = random_graph(6, rng);
  std::string text;
  for (Backbone b : kBackbones) {
    const EncoderConfig cfg = small_config(b);
    Rng prng(77);
    text += std::string(backbone_name(b)) + "\n" + testing::matrix_text(encode(g, init_encoder(cfg, "enc", prng), cfg));
  }
  EXPECT_TRUE(testing::matches_golden("encode_golden.txt", text));
}

}  // namespace
}  // namespace xmodal
