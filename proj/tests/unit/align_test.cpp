#include <cmath>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "xmodal/align.hpp"
#include "xmodal/errors.hpp"

namespace xmodal {
namespace {

using testing::probe;
using testing::random_matrix;

double row_norm(const Matrix& m, std::size_t r) {
  double s = 0.0;
  for (double v : m.row(r)) s += v * v;
  return std::sqrt(s);
}

// ---- cross-attention ----

TEST(CrossAttend, SingleKeyTakesItsValue) {
  Rng rng(1);
  const Matrix hm = random_matrix(5, 4, rng), hn = random_matrix(1, 4, rng);
  const Matrix wq = random_matrix(4, 4, rng), wk = random_matrix(4, 4, rng), wv = random_matrix(4, 4, rng),
               wo = random_matrix(4, 4, rng);
  const Matrix out = cross_attend(hm, hn, {wq, wk, wv, wo}, 2);
  const Matrix want = matmul(matmul(hn, wv), wo);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(out(i, c), want(0, c), 1e-14);
}

TEST(CrossAttend, ZeroValues) {
  Rng rng(2);
  const Matrix wq = random_matrix(4, 4, rng), wk = random_matrix(4, 4, rng), wv(4, 4), wo = random_matrix(4, 4, rng);
  const Matrix out = cross_attend(random_matrix(3, 4, rng), random_matrix(6, 4, rng), {wq, wk, wv, wo}, 4);
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(CrossAttend, ScalarExample) {
  const Matrix one{{1}};
  EXPECT_EQ(cross_attend(Matrix{{1}}, Matrix{{2}}, {one, one, one, one}, 1), (Matrix{{2}}));
}

TEST(CrossAttend, MatchesKernelComposition) {
  Rng rng(3);
  const Matrix hm = random_matrix(4, 6, rng), hn = random_matrix(7, 6, rng);
  const Matrix wq = random_matrix(6, 6, rng), wk = random_matrix(6, 6, rng), wv = random_matrix(6, 6, rng),
               wo = random_matrix(6, 6, rng);
  const std::size_t heads = 3, dh = 2;
  Matrix concat(4, 6);
  for (std::size_t h = 0; h < heads; ++h) {
    const Matrix q = matmul(hm, wq.col_block(h * dh, dh)), k = matmul(hn, wk.col_block(h * dh, dh)),
                 v = matmul(hn, wv.col_block(h * dh, dh));
    const Matrix a = softmax_rows(matmul_nt(q, k) * (1.0 / std::sqrt(2.0)));
    concat.set_col_block(h * dh, matmul(a, v));
  }
  EXPECT_LT(max_abs_diff(cross_attend(hm, hn, {wq, wk, wv, wo}, heads), matmul(concat, wo)), 1e-13);
}

TEST(CrossAttend, WidthMismatch) {
  const Matrix w = Matrix::identity(4);
  EXPECT_THROW(cross_attend(Matrix(2, 4), Matrix(2, 3), {w, w, w, w}, 2), Error);
}

TEST(CrossAttend, Gradients) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    Param hm = testing::random_param("hm", 2 + rng.below(6), 4, rng);
    Param hn = testing::random_param("hn", 1 + rng.below(6), 4, rng);
    Param wq = testing::random_param("wq", 4, 4, rng), wk = testing::random_param("wk", 4, 4, rng),
          wv = testing::random_param("wv", 4, 4, rng), wo = testing::random_param("wo", 4, 4, rng);
    const Matrix r = random_matrix(hm.value.rows(), 4, rng);
    CrossAttentionCache cache;
    cross_attend(hm.value, hn.value, {wq.value, wk.value, wv.value, wo.value}, 2, &cache);
    auto g = cross_attend_backward(hm.value, hn.value, {wq.value, wk.value, wv.value, wo.value}, 2, cache, r);
    hm.grad = g.dhm;
    hn.grad = g.dhn;
    wq.grad = g.dwq;
    wk.grad = g.dwk;
    wv.grad = g.dwv;
    wo.grad = g.dwo;
    Param* all[] = {&hm, &hn, &wq, &wk, &wv, &wo};
    const auto res = finite_diff_check(
        [&] { return probe(cross_attend(hm.value, hn.value, {wq.value, wk.value, wv.value, wo.value}, 2), r); },
        all);
    EXPECT_LE(res.max_rel_err, 1e-4) << res.worst_param;
  }
}

// ---- residual norm ----

TEST(ResidualNorm, ZeroEnhancement) {
  Rng rng(5);
  const Matrix h = random_matrix(3, 4, rng);
  const Matrix out = residual_norm(h, Matrix(3, 4), Matrix(1, 4, 1.0), Matrix(1, 4));
  for (std::size_t r = 0; r < 3; ++r) {
    double mean = 0.0, var = 0.0;
    for (double v : out.row(r)) mean += v / 4;
    for (double v : out.row(r)) var += (v - mean) * (v - mean) / 4;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(ResidualNorm, ConstantRowsGiveBeta) {
  const Matrix beta{{0.1, -0.2, 0.3}};
  const Matrix out = residual_norm(Matrix(2, 3, 0.7), Matrix(2, 3, 0.1), Matrix{{2, 3, 4}}, beta);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out(r, c), beta(0, c), 1e-12);
}

TEST(ResidualNorm, MatchesKernelComposition) {
  Rng rng(6);
  const Matrix h = random_matrix(3, 4, rng), t = random_matrix(3, 4, rng), g = random_matrix(1, 4, rng),
               b = random_matrix(1, 4, rng);
  EXPECT_EQ(residual_norm(h, t, g, b), layer_norm_rows(h + t, g, b));
}

// ---- cosine cost ----

TEST(CosineCost, Examples) {
  const Matrix a{{1, 2, 3}, {1, 0, 0}, {0, 0, 0}};
  const Matrix b{{1, 2, 3}, {-2, 0, 0}, {0, 5, 0}};
  const Matrix c = cosine_cost(a, b);
  EXPECT_NEAR(c(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(c(1, 1), 2.0, 1e-15);
  EXPECT_NEAR(c(1, 2), 1.0, 1e-15);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(c(2, j), 1.0);
}

TEST(CosineCost, BoundsAndGradients) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    Param a = testing::random_param("a", 1 + rng.below(6), 5, rng);
    Param b = testing::random_param("b", 1 + rng.below(6), 5, rng);
    const Matrix c = cosine_cost(a.value, b.value);
    for (double v : c.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 2.0);
    }
    const Matrix r = random_matrix(c.rows(), c.cols(), rng);
    auto g = cosine_cost_backward(a.value, b.value, r);
    a.grad = g.da;
    b.grad = g.db;
    Param* all[] = {&a, &b};
    EXPECT_LE(finite_diff_check([&] { return probe(cosine_cost(a.value, b.value), r); }, all).max_rel_err,
              1e-4);
  }
}

// ---- Sinkhorn ----

// Plain scaling iterations u = mu / (K v), v = nu / (K^T u); same update order.
Matrix sinkhorn_oracle(const Matrix& cost, const std::vector<double>& mu, const std::vector<double>& nu,
                       double eps, int iterations) {
  const std::size_t n = cost.rows(), m = cost.cols();
  Matrix k(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) k(i, j) = std::exp(-cost(i, j) / eps);
  std::vector<double> u(n, 1.0), v(m, 1.0);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += k(i, j) * v[j];
      u[i] = mu[i] / s;
    }
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += k(i, j) * u[i];
      v[j] = nu[j] / s;
    }
  }
  Matrix t(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) t(i, j) = u[i] * k(i, j) * v[j];
  return t;
}

TEST(Sinkhorn, SingleCell) {
  const TransportPlan p = sinkhorn({Matrix{{0.7}}, {1.0}, {1.0}, 0.1, 80});
  EXPECT_NEAR(p.plan(0, 0), 1.0, 1e-12);
  EXPECT_LE(p.marginal_err, 1e-12);
}

TEST(Sinkhorn, TwoByTwoClosedForm) {
  const TransportPlan p = sinkhorn({Matrix{{0, 1}, {1, 0}}, {0.5, 0.5}, {0.5, 0.5}, 1.0, 80});
  const double u2 = 0.5 / (1.0 + std::exp(-1.0));
  EXPECT_NEAR(p.plan(0, 0), u2, 1e-5);
  EXPECT_NEAR(p.plan(0, 1), u2 * std::exp(-1.0), 1e-5);
  EXPECT_NEAR(p.plan(1, 0), u2 * std::exp(-1.0), 1e-5);
  EXPECT_NEAR(p.plan(1, 1), u2, 1e-5);
  EXPECT_NEAR(p.plan(0, 0), 0.36553, 1e-5);
  EXPECT_NEAR(p.plan(0, 1), 0.13447, 1e-5);
  EXPECT_NEAR(p.transport_cost, 2 * u2 * std::exp(-1.0), 1e-9);
  EXPECT_EQ(p.iterations, 80);
}

TEST(Sinkhorn, LargeRandomConvergesAndMatchesScalingOracle) {
  Rng rng(8);
  const Matrix c = random_matrix(50, 60, rng, 0.0, 2.0);
  const auto mu = uniform_marginal(50), nu = uniform_marginal(60);
  const TransportPlan p = sinkhorn({c, mu, nu, 0.1, 80});
  EXPECT_LT(p.marginal_err, 1e-6);
  EXPECT_NEAR(p.marginal_err, marginal_error(p.plan, mu, nu), 1e-15);
  EXPECT_LT(max_abs_diff(p.plan, sinkhorn_oracle(c, mu, nu, 0.1, 80)), 1e-12);
  EXPECT_NEAR(p.transport_cost, frobenius_dot(p.plan, c), 1e-12);
}

TEST(Sinkhorn, ConvergenceAcrossSizes) {
  Rng rng(9);
  for (double eps : {0.05, 0.1, 0.5}) {
    for (int trial = 0; trial < 6; ++trial) {
      const std::size_t n = 1 + rng.below(300), m = 1 + rng.below(300);
      const TransportPlan p =
          sinkhorn({random_matrix(n, m, rng, 0.0, 2.0), uniform_marginal(n), uniform_marginal(m), eps, 80});
      EXPECT_LT(p.marginal_err, 1e-6) << n << "x" << m << " eps " << eps;
      for (double v : p.plan.values()) EXPECT_GE(v, 0.0);
    }
  }
}

TEST(Sinkhorn, ScaleRobustness) {
  Rng rng(10);
  const Matrix c = random_matrix(20, 15, rng, 0.0, 2.0);
  const auto mu = uniform_marginal(20), nu = uniform_marginal(15);
  const Matrix base = sinkhorn({c, mu, nu, 0.1, 80}).plan;
  for (double shift : {0.5, 3.0, 50.0}) {
    Matrix shifted = c;
    for (double& v : shifted.values()) v += shift;
    EXPECT_LE(max_abs_diff(base, sinkhorn({shifted, mu, nu, 0.1, 80}).plan), 1e-9);
  }
}

// Random feasible plan: a random matrix projected onto the marginals by
// scaling iterations, so its entropy term is finite.
Matrix random_feasible(std::size_t n, std::size_t m, const std::vector<double>& mu, const std::vector<double>& nu,
                       Rng& rng) {
  Matrix c(n, m);
  for (double& v : c.values()) v = -std::log(rng.uniform(1e-3, 1.0));
  return sinkhorn_oracle(c, mu, nu, 1.0, 500);
}

TEST(Sinkhorn, OptimalAgainstRandomPlans) {
  Rng rng(11);
  for (std::size_t n : {2, 3}) {
    const Matrix c = random_matrix(n, n, rng, 0.0, 2.0);
    std::vector<double> mu(n), nu(n);
    double smu = 0.0, snu = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mu[i] = rng.uniform(0.2, 1.0);
      nu[i] = rng.uniform(0.2, 1.0);
      smu += mu[i];
      snu += nu[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      mu[i] /= smu;
      nu[i] /= snu;
    }
    const double eps = 0.1;
    const TransportPlan p = sinkhorn({c, mu, nu, eps, 1000});
    const double best = entropic_objective(p.plan, c, eps);
    for (int s = 0; s < 10000; ++s) {
      const Matrix t = random_feasible(n, n, mu, nu, rng);
      ASSERT_LT(marginal_error(t, mu, nu), 1e-9);
      ASSERT_LE(best, entropic_objective(t, c, eps) + 1e-9);
    }
  }
}

TEST(Sinkhorn, InvalidProblems) {
  EXPECT_THROW(sinkhorn({Matrix{{1}}, {1.0}, {1.0}, 0.0, 80}), Error);
  EXPECT_THROW(sinkhorn({Matrix{{1}}, {1.0}, {1.0}, -1.0, 80}), Error);
  EXPECT_THROW(sinkhorn({Matrix{{1, 1}}, {1.0}, {0.5, 0.4}, 0.1, 80}), Error);
  EXPECT_THROW(sinkhorn({Matrix{{1, 1}}, {1.0}, {1.0}, 0.1, 80}), Error);
}

TEST(EntropicObjective, ZeroLogZero) {
  EXPECT_NEAR(entropic_objective(Matrix{{1, 0}}, Matrix{{0.5, 2}}, 0.1), 0.5, 1e-15);
  EXPECT_NEAR(entropic_objective(Matrix{{0.5, 0.5}}, Matrix{{0, 0}}, 1.0), -std::log(2.0), 1e-15);
}

// ---- fusion and pooling ----

TEST(OtFuse, ZeroBlendBypass) {
  Rng rng(12);
  const Matrix hm = random_matrix(4, 3, rng), hn = random_matrix(5, 3, rng);
  const Matrix t = sinkhorn({cosine_cost(hm, hn), uniform_marginal(4), uniform_marginal(5), 0.1, 80}).plan;
  const Matrix g = random_matrix(1, 3, rng), b = random_matrix(1, 3, rng);
  EXPECT_EQ(ot_fuse(hm, hn, t, uniform_marginal(4), 0.0, g, b), layer_norm_rows(hm, g, b));
}

TEST(OtFuse, SingleNodesProjectOntoOtherRow) {
  const Matrix hn{{0.3, -0.7, 1.1}};
  EXPECT_LT(max_abs_diff(barycentric_projection(Matrix{{1}}, hn, {1.0}), hn), 1e-15);
}

TEST(OtFuse, TwoByTwoClosedFormProjection) {
  const double u2 = 0.5 / (1.0 + std::exp(-1.0)), off = u2 * std::exp(-1.0);
  const Matrix t = sinkhorn({Matrix{{0, 1}, {1, 0}}, {0.5, 0.5}, {0.5, 0.5}, 1.0, 80}).plan;
  const Matrix hm{{1, 0}, {0, 1}}, hn{{2, -1}, {0.5, 3}};
  const Matrix bary = barycentric_projection(t, hn, {0.5, 0.5});
  const Matrix want{{2 * (u2 * 2 + off * 0.5), 2 * (u2 * -1 + off * 3)}, {2 * (off * 2 + u2 * 0.5), 2 * (off * -1 + u2 * 3)}};
  EXPECT_LT(max_abs_diff(bary, want), 1e-6);
  const Matrix one(1, 2, 1.0), zero(1, 2);
  EXPECT_LT(max_abs_diff(ot_fuse(hm, hn, t, {0.5, 0.5}, 0.5, one, zero), layer_norm_rows(hm + want * 0.5, one, zero)),
            1e-6);
}

TEST(OtFuse, Gradients) {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.below(6), m = 1 + rng.below(6);
    Param hm = testing::random_param("hm", n, 4, rng), hn = testing::random_param("hn", m, 4, rng);
    Param gamma = testing::random_param("gamma", 1, 4, rng), beta = testing::random_param("beta", 1, 4, rng);
    const auto mu = uniform_marginal(n);
    const Matrix t = sinkhorn({cosine_cost(hm.value, hn.value), mu, uniform_marginal(m), 0.1, 80}).plan;
    const Matrix r = random_matrix(n, 4, rng);
    LayerNormCache cache;
    ot_fuse(hm.value, hn.value, t, mu, 0.5, gamma.value, beta.value, &cache);
    auto g = ot_fuse_backward(t, mu, 0.5, gamma.value, cache, r, gamma.grad, beta.grad);
    hm.grad = g.dhm;
    hn.grad = g.dhn;
    Param* all[] = {&hm, &hn, &gamma, &beta};
    const auto res = finite_diff_check(
        [&] { return probe(ot_fuse(hm.value, hn.value, t, mu, 0.5, gamma.value, beta.value), r); }, all);
    EXPECT_LE(res.max_rel_err, 1e-4) << res.worst_param;
  }
}

TEST(PoolEmbed, Examples) {
  const Matrix z = pool_embed(Matrix{{1, 0}, {0, 1}});
  EXPECT_NEAR(z(0, 0), 0.70711, 1e-5);
  EXPECT_NEAR(z(0, 1), 0.70711, 1e-5);
  const Matrix single = pool_embed(Matrix{{3, 4}});
  EXPECT_NEAR(single(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(single(0, 1), 0.8, 1e-15);
  const Matrix zero = pool_embed(Matrix{{1, -2}, {-1, 2}});
  EXPECT_EQ(zero(0, 0), 0.0);
  EXPECT_EQ(zero(0, 1), 0.0);
}

TEST(PoolEmbed, PermutationInvariantUnitNorm) {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix h = random_matrix(1 + rng.below(20), 6, rng);
    const Matrix z = pool_embed(h);
    EXPECT_NEAR(row_norm(z, 0), 1.0, 1e-9);
    EXPECT_LT(max_abs_diff(z, pool_embed(h.gather_rows(testing::random_permutation(h.rows(), rng)))), 1e-12);
  }
}

// ---- composed pair alignment ----

CrossAttentionParams test_params(Rng& rng, std::size_t d = 8, std::size_t heads = 2) {
  CrossAttentionParams p = init_cross_attention(d, heads, "align", rng);
  // Move the norms off their identity init so their gradients are exercised.
  for (Param* q : {&p.ln_gamma, &p.ln_beta, &p.fuse_gamma, &p.fuse_beta})
    for (double& v : q->value.values()) v += rng.uniform(-0.3, 0.3);
  return p;
}

TEST(AlignPair, AllSwitchesOffIsIndependent) {
  Rng rng(15);
  const CrossAttentionParams p = test_params(rng);
  AlignConfig cfg;
  cfg.ca_on = false;
  cfg.ot_on = false;
  const Matrix hm = random_matrix(6, 8, rng);
  const Matrix want = pool_embed(layer_norm_rows(hm, p.ln_gamma.value, p.ln_beta.value));
  for (int trial = 0; trial < 3; ++trial) {
    const AlignResult r = align_pair(hm, random_matrix(2 + trial * 3, 8, rng), p, cfg);
    EXPECT_EQ(r.z_m, want);
    EXPECT_LT(r.plan.marginal_err, 1e-6);
  }
}

TEST(AlignPair, IdenticalInputsGiveIdenticalEmbeddings) {
  Rng rng(16);
  const CrossAttentionParams p = test_params(rng);
  const Matrix h = random_matrix(7, 8, rng);
  const AlignResult r = align_pair(h, h, p, AlignConfig{});
  EXPECT_EQ(r.z_m, r.z_n);
}

TEST(AlignPair, SwappingInputsSwapsOutputs) {
  Rng rng(17);
  const CrossAttentionParams p = test_params(rng);
  const Matrix a = random_matrix(5, 8, rng), b = random_matrix(9, 8, rng);
  const AlignResult ab = align_pair(a, b, p, AlignConfig{}), ba = align_pair(b, a, p, AlignConfig{});
  EXPECT_EQ(ab.z_m, ba.z_n);
  EXPECT_EQ(ab.z_n, ba.z_m);
}

TEST(AlignPair, NodePermutationInvariance) {
  Rng rng(18);
  const CrossAttentionParams p = test_params(rng);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix a = random_matrix(3 + rng.below(8), 8, rng), b = random_matrix(3 + rng.below(8), 8, rng);
    const auto pa = testing::random_permutation(a.rows(), rng), pb = testing::random_permutation(b.rows(), rng);
    const AlignResult base = align_pair(a, b, p, AlignConfig{});
    const AlignResult perm = align_pair(a.gather_rows(pa), b.gather_rows(pb), p, AlignConfig{});
    EXPECT_LT(max_abs_diff(base.z_m, perm.z_m), 1e-10);
    EXPECT_LT(max_abs_diff(base.z_n, perm.z_n), 1e-10);
    for (std::size_t i = 0; i < pa.size(); ++i)
      for (std::size_t j = 0; j < pb.size(); ++j)
        EXPECT_NEAR(perm.plan.plan(i, j), base.plan.plan(pa[i], pb[j]), 1e-10);
  }
}

TEST(AlignPair, UnitNormEmbeddings) {
  Rng rng(19);
  const CrossAttentionParams p = test_params(rng);
  for (int trial = 0; trial < 10; ++trial) {
    AlignConfig cfg;
    cfg.ca_on = trial % 2 == 0;
    cfg.ot_on = trial % 3 != 0;
    const AlignResult r = align_pair(random_matrix(1 + rng.below(10), 8, rng), random_matrix(1 + rng.below(10), 8, rng),
                                     p, cfg);
    for (const Matrix* z : {&r.z_m, &r.z_n}) {
      const double n = row_norm(*z, 0);
      EXPECT_TRUE(n == 0.0 || std::abs(n - 1.0) <= 1e-9) << n;
    }
  }
}

struct SwitchCase {
  bool ca, ot, bidirectional;
};

class AlignGradient : public ::testing::TestWithParam<SwitchCase> {};

TEST_P(AlignGradient, FrozenPlanFiniteDifference) {
  const SwitchCase sc = GetParam();
  Rng rng(20);
  for (int trial = 0; trial < 6; ++trial) {
    CrossAttentionParams p = test_params(rng);
    AlignConfig cfg;
    cfg.ca_on = sc.ca;
    cfg.ot_on = sc.ot;
    cfg.bidirectional = sc.bidirectional;
    Param hm = testing::random_param("hm", 2 + rng.below(6), 8, rng), hn = testing::random_param("hn", 2 + rng.below(6), 8, rng);
    const Matrix rm = random_matrix(1, 8, rng), rn = random_matrix(1, 8, rng);
    const double wc = 0.7;
    AlignCache cache;
    align_pair(hm.value, hn.value, p, cfg, &cache);
    const FrozenPlans frozen{cache.plan_mn, cache.plan_nm};
    p.zero_grad();
    const AlignGrads g = align_pair_backward(p, cfg, cache, rm, rn, wc);
    hm.grad = g.dhm;
    hn.grad = g.dhn;
    auto all = p.all();
    all.push_back(&hm);
    all.push_back(&hn);
    const auto f = [&] {
      const AlignResult r = align_pair(hm.value, hn.value, p, cfg, nullptr, &frozen);
      return probe(r.z_m, rm) + probe(r.z_n, rn) + wc * r.plan.transport_cost;
    };
    const auto res = finite_diff_check(f, all);
    EXPECT_LE(res.max_rel_err, 1e-4) << res.worst_param << "[" << res.worst_index << "] " << res.analytic << " vs "
                                     << res.numeric;
  }
}

INSTANTIATE_TEST_SUITE_P(Switches, AlignGradient,
                         ::testing::Values(SwitchCase{true, true, true}, SwitchCase{true, false, true},
                                           SwitchCase{false, true, true}, SwitchCase{false, false, true},
                                           SwitchCase{true, true, false}),
                         [](const auto& info) {
                           return std::string(info.param.ca ? "ca" : "noca") + (info.param.ot ? "_ot" : "_noot") +
                                  (info.param.bidirectional ? "_bi" : "_uni");
                         });

TEST(AlignPair, Golden) {
  Rng rng(21);
  const CrossAttentionParams p = init_cross_attention(8, 2, "align", rng);
  const AlignResult r = align_pair(random_matrix(4, 8, rng), random_matrix(3, 8, rng), p, AlignConfig{});
  const std::string text = testing::matrix_text(r.z_m) + testing::matrix_text(r.z_n) + testing::matrix_text(r.plan.plan);
  EXPECT_TRUE(testing::matches_golden("align_golden.txt", text));
}

}  // namespace
}  // namespace xmodal
