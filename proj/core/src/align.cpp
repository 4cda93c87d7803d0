#include "xmodal/align.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xmodal/errors.hpp"

namespace xmodal {

std::vector<Param*> CrossAttentionParams::all() {
  return {&w_q, &w_k, &w_v, &w_o, &ln_gamma, &ln_beta, &fuse_gamma, &fuse_beta};
}

std::vector<const Param*> CrossAttentionParams::all() const {
  return {&w_q, &w_k, &w_v, &w_o, &ln_gamma, &ln_beta, &fuse_gamma, &fuse_beta};
}

void CrossAttentionParams::zero_grad() {
  for (auto* p : all()) p->zero_grad();
}

CrossAttentionParams init_cross_attention(std::size_t d, std::size_t heads, const std::string& prefix,
                                          Rng& rng) {
  if (heads == 0 || d % heads != 0) fail(ErrorCode::kConfig, "cross-attention heads must divide d");
  CrossAttentionParams p;
  p.heads = heads;
  // Each head's projection is d x (d / heads); the blocks share one draw
  // scale so that column blocks are initialized as independent heads.
  const std::size_t dh = d / heads;
  auto head_stack = [&](const std::string& name) {
    Matrix w(d, d);
    for (std::size_t h = 0; h < heads; ++h) w.set_col_block(h * dh, glorot_uniform(d, dh, rng));
    return Param(prefix + "." + name, std::move(w));
  };
  p.w_q = head_stack("w_q");
  p.w_k = head_stack("w_k");
  p.w_v = head_stack("w_v");
  p.w_o = Param(prefix + ".w_o", glorot_uniform(d, d, rng));
  p.ln_gamma = Param(prefix + ".ln_gamma", Matrix(1, d, 1.0));
  p.ln_beta = Param(prefix + ".ln_beta", Matrix(1, d, 0.0));
  p.fuse_gamma = Param(prefix + ".fuse_gamma", Matrix(1, d, 1.0));
  p.fuse_beta = Param(prefix + ".fuse_beta", Matrix(1, d, 0.0));
  return p;
}

Matrix cross_attend(const Matrix& hm, const Matrix& hn, const AttentionWeights& w, std::size_t heads,
                    CrossAttentionCache* cache) {
  if (hm.cols() != hn.cols()) fail(ErrorCode::kShape, "cross_attend width mismatch");
  if (w.wq.rows() != hm.cols() || w.wk.rows() != hn.cols() || w.wv.rows() != hn.cols()) {
    fail(ErrorCode::kShape, "cross_attend projection does not match input width");
  }
  const std::size_t d = w.wq.cols();
  if (heads == 0 || d % heads != 0 || w.wk.cols() != d || w.wv.cols() != d || w.wo.rows() != d) {
    fail(ErrorCode::kShape, "cross_attend projection shapes disagree");
  }
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix q = matmul(hm, w.wq), k = matmul(hn, w.wk), v = matmul(hn, w.wv);
  Matrix o(hm.rows(), d);
  std::vector<Matrix> attn;
  attn.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Matrix scores = matmul_nt(q.col_block(h * dh, dh), k.col_block(h * dh, dh));
    scores *= scale;
    Matrix a = softmax_rows(scores);
    o.set_col_block(h * dh, matmul(a, v.col_block(h * dh, dh)));
    attn.push_back(std::move(a));
  }
  Matrix out = matmul(o, w.wo);
  if (cache) {
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->o = std::move(o);
    cache->attn = std::move(attn);
  }
  return out;
}

CrossAttentionGrads cross_attend_backward(const Matrix& hm, const Matrix& hn, const AttentionWeights& w,
                                          std::size_t heads, const CrossAttentionCache& cache,
                                          const Matrix& dout) {
  const std::size_t d = w.wq.cols(), dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto go = matmul_backward(cache.o, w.wo, dout);
  Matrix dq(hm.rows(), d), dk(hn.rows(), d), dv(hn.rows(), d);
  for (std::size_t h = 0; h < heads; ++h) {
    const Matrix& a = cache.attn[h];
    const Matrix d_oh = go.da.col_block(h * dh, dh);
    const Matrix qh = cache.q.col_block(h * dh, dh);
    const Matrix kh = cache.k.col_block(h * dh, dh);
    const Matrix vh = cache.v.col_block(h * dh, dh);
    const Matrix da = matmul_nt(d_oh, vh);
    dv.set_col_block(h * dh, matmul_tn(a, d_oh));
    Matrix ds = softmax_rows_backward(a, da);
    ds *= scale;
    dq.set_col_block(h * dh, matmul(ds, kh));
    dk.set_col_block(h * dh, matmul_tn(ds, qh));
  }
  auto gq = matmul_backward(hm, w.wq, dq);
  auto gk = matmul_backward(hn, w.wk, dk);
  auto gv = matmul_backward(hn, w.wv, dv);
  Matrix dhn = std::move(gk.da);
  dhn += gv.da;
  return {std::move(gq.da), std::move(dhn), std::move(gq.db), std::move(gk.db), std::move(gv.db),
          std::move(go.db)};
}

Matrix residual_norm(const Matrix& hm, const Matrix& htilde, const Matrix& gamma, const Matrix& beta,
                     LayerNormCache* cache) {
  return layer_norm_rows(hm + htilde, gamma, beta, kLayerNormEps, cache);
}

namespace {

std::vector<double> row_norms(const Matrix& m) {
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (double v : m.row(i)) s += v * v;
    out[i] = std::sqrt(s);
  }
  return out;
}

}  // namespace

Matrix cosine_cost(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) fail(ErrorCode::kShape, "cosine_cost width mismatch");
  const auto na = row_norms(a), nb = row_norms(b);
  Matrix dots = matmul_nt(a, b);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double& c = dots(i, j);
      if (na[i] < kZeroNormGuard || nb[j] < kZeroNormGuard) {
        c = 1.0;
      } else {
        c = std::clamp(1.0 - c / (na[i] * nb[j]), 0.0, 2.0);
      }
    }
  }
  return dots;
}

CosineCostGrads cosine_cost_backward(const Matrix& a, const Matrix& b, const Matrix& dcost) {
  const auto na = row_norms(a), nb = row_norms(b);
  const Matrix dots = matmul_nt(a, b);
  Matrix da(a.rows(), a.cols()), db(b.rows(), b.cols());
  const std::size_t d = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    if (na[i] < kZeroNormGuard) continue;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      if (nb[j] < kZeroNormGuard) continue;
      const double g = -dcost(i, j);  // d cost / d cos = -1
      if (g == 0.0) continue;
      const double inv = 1.0 / (na[i] * nb[j]);
      const double cos = dots(i, j) * inv;
      const double* ai = a.data() + i * d;
      const double* bj = b.data() + j * d;
      double* dai = da.data() + i * d;
      double* dbj = db.data() + j * d;
      const double ca = cos / (na[i] * na[i]), cb = cos / (nb[j] * nb[j]);
      for (std::size_t c = 0; c < d; ++c) {
        dai[c] += g * (bj[c] * inv - ai[c] * ca);
        dbj[c] += g * (ai[c] * inv - bj[c] * cb);
      }
    }
  }
  return {std::move(da), std::move(db)};
}

void TransportProblem::validate() const {
  if (!(epsilon > 0.0)) fail(ErrorCode::kArgument, "sinkhorn epsilon must be positive");
  if (iterations < 0) fail(ErrorCode::kArgument, "sinkhorn iterations must be nonnegative");
  if (cost.rows() != mu.size() || cost.cols() != nu.size() || mu.empty() || nu.empty()) {
    fail(ErrorCode::kArgument, "cost matrix shape does not match marginals");
  }
  if (!cost.all_finite()) fail(ErrorCode::kArgument, "cost matrix has non-finite entries");
  for (const auto* m : {&mu, &nu}) {
    double s = 0.0;
    for (double v : *m) {
      if (!(v >= 0.0)) fail(ErrorCode::kArgument, "marginals must be nonnegative");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) fail(ErrorCode::kArgument, "marginals must sum to 1");
  }
}

std::vector<double> uniform_marginal(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Exact log-sum-exp over (pot_j - c_j) / eps for one row or column.
double lse_exact(const double* pot, const double* cost, std::size_t stride, std::size_t n, double eps) {
  double mx = kNegInf;
  for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, (pot[j] - cost[j * stride]) / eps);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += std::exp((pot[j] - cost[j * stride]) / eps - mx);
  return mx + std::log(s);
}

// One half-sweep: out_i = eps*log(marg_i) - eps*LSE_j((pot_j - C_ij)/eps),
// with the cost read as rows (transpose = false) or columns.
//
// When the shifted kernel K = exp(-(C - cmin)/eps) is representable the
// LSE is evaluated as max(pot)/eps + log sum_j exp((pot_j - max)/eps) K_ij,
// which is the same quantity computed with one exp per potential instead of
// one per entry. Rows whose factored sum underflows use the exact form.
void potential_update(const Matrix& cost, const Matrix* kernel, double cmin, bool transpose,
                      const std::vector<double>& log_marg, const std::vector<double>& pot,
                      double eps, std::vector<double>& out) {
  const std::size_t n_out = transpose ? cost.cols() : cost.rows();
  const std::size_t n_in = pot.size();
  std::vector<double> scaled;
  double pmax = kNegInf;
  if (kernel) {
    for (double p : pot) pmax = std::max(pmax, p);
    scaled.resize(n_in);
    for (std::size_t j = 0; j < n_in; ++j) scaled[j] = std::exp((pot[j] - pmax) / eps);
  }
  std::vector<double> col_sums;
  if (kernel && transpose) {
    col_sums.assign(n_out, 0.0);
    for (std::size_t i = 0; i < n_in; ++i) {
      const double s = scaled[i];
      if (s == 0.0) continue;
      const double* krow = kernel->data() + i * n_out;
      for (std::size_t j = 0; j < n_out; ++j) col_sums[j] += s * krow[j];
    }
  }
  for (std::size_t i = 0; i < n_out; ++i) {
    if (log_marg[i] == kNegInf) {
      out[i] = kNegInf;
      continue;
    }
    double lse = std::numeric_limits<double>::quiet_NaN();
    if (kernel && pmax != kNegInf) {
      double s = 0.0;
      if (transpose) {
        s = col_sums[i];
      } else {
        const double* krow = kernel->data() + i * n_in;
        for (std::size_t j = 0; j < n_in; ++j) s += scaled[j] * krow[j];
      }
      if (s > 1e-250 && std::isfinite(s)) lse = pmax / eps + std::log(s) - cmin / eps;
    }
    if (std::isnan(lse)) {
      lse = transpose ? lse_exact(pot.data(), cost.data() + i, cost.cols(), n_in, eps)
                      : lse_exact(pot.data(), cost.data() + i * cost.cols(), 1, n_in, eps);
    }
    out[i] = eps * log_marg[i] - eps * lse;
  }
}

}  // namespace

TransportPlan sinkhorn(const TransportProblem& problem) {
  problem.validate();
  const Matrix& c = problem.cost;
  const std::size_t nm = c.rows(), nn = c.cols();
  const double eps = problem.epsilon;
  std::vector<double> log_mu(nm), log_nu(nn);
  for (std::size_t i = 0; i < nm; ++i) log_mu[i] = problem.mu[i] > 0.0 ? std::log(problem.mu[i]) : kNegInf;
  for (std::size_t j = 0; j < nn; ++j) log_nu[j] = problem.nu[j] > 0.0 ? std::log(problem.nu[j]) : kNegInf;

  const auto [cmin_it, cmax_it] = std::minmax_element(c.values().begin(), c.values().end());
  const double cmin = *cmin_it, cmax = *cmax_it;
  std::optional<Matrix> kernel;
  if ((cmax - cmin) / eps <= 600.0) {
    kernel.emplace(nm, nn);
    for (std::size_t i = 0; i < c.size(); ++i) kernel->data()[i] = std::exp(-(c.data()[i] - cmin) / eps);
  }
  const Matrix* kp = kernel ? &*kernel : nullptr;

  std::vector<double> f(nm, 0.0), g(nn, 0.0);
  for (int it = 0; it < problem.iterations; ++it) {
    potential_update(c, kp, cmin, false, log_mu, g, eps, f);
    potential_update(c, kp, cmin, true, log_nu, f, eps, g);
  }

  TransportPlan out;
  out.iterations = problem.iterations;
  out.plan = Matrix(nm, nn);
  for (std::size_t i = 0; i < nm; ++i) {
    for (std::size_t j = 0; j < nn; ++j) {
      out.plan(i, j) = std::exp((f[i] + g[j] - c(i, j)) / eps);
    }
  }
  out.marginal_err = marginal_error(out.plan, problem.mu, problem.nu);
  out.transport_cost = frobenius_dot(out.plan, c);
  return out;
}

double marginal_error(const Matrix& plan, const std::vector<double>& mu, const std::vector<double>& nu) {
  double err = 0.0;
  std::vector<double> cols(plan.cols(), 0.0);
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < plan.cols(); ++j) {
      r += plan(i, j);
      cols[j] += plan(i, j);
    }
    err = std::max(err, std::abs(r - mu[i]));
  }
  for (std::size_t j = 0; j < plan.cols(); ++j) err = std::max(err, std::abs(cols[j] - nu[j]));
  return err;
}

double entropic_objective(const Matrix& plan, const Matrix& cost, double epsilon) {
  double value = 0.0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const double t = plan.data()[i];
    value += t * cost.data()[i];
    if (t > 0.0) value += epsilon * t * std::log(t);
  }
  return value;
}

Matrix barycentric_projection(const Matrix& plan, const Matrix& hn, const std::vector<double>& mu) {
  if (plan.cols() != hn.rows() || plan.rows() != mu.size()) {
    fail(ErrorCode::kShape, "barycentric projection shape mismatch");
  }
  Matrix b = matmul(plan, hn);
  for (std::size_t i = 0; i < b.rows(); ++i) {
    const double inv = mu[i] > 0.0 ? 1.0 / mu[i] : 0.0;
    for (double& v : b.row(i)) v *= inv;
  }
  return b;
}

Matrix ot_fuse(const Matrix& hm, const Matrix& hn, const Matrix& plan, const std::vector<double>& mu,
               double lambda_blend, const Matrix& gamma, const Matrix& beta, LayerNormCache* cache) {
  Matrix x = hm;
  if (lambda_blend != 0.0) {
    Matrix b = barycentric_projection(plan, hn, mu);
    b *= lambda_blend;
    x += b;
  }
  return layer_norm_rows(x, gamma, beta, kLayerNormEps, cache);
}

OtFuseGrads ot_fuse_backward(const Matrix& plan, const std::vector<double>& mu, double lambda_blend,
                             const Matrix& gamma, const LayerNormCache& cache, const Matrix& dout,
                             Matrix& dgamma, Matrix& dbeta) {
  Matrix dx = layer_norm_rows_backward(cache, gamma, dout, dgamma, dbeta);
  Matrix dhn(plan.cols(), dout.cols());
  if (lambda_blend != 0.0) {
    Matrix scaled = dx;
    for (std::size_t i = 0; i < scaled.rows(); ++i) {
      const double w = mu[i] > 0.0 ? lambda_blend / mu[i] : 0.0;
      for (double& v : scaled.row(i)) v *= w;
    }
    dhn = matmul_tn(plan, scaled);
  }
  return {std::move(dx), std::move(dhn)};
}

Matrix pool_embed(const Matrix& h) {
  Matrix mean(1, h.cols());
  for (std::size_t i = 0; i < h.rows(); ++i) {
    auto r = h.row(i);
    for (std::size_t c = 0; c < h.cols(); ++c) mean(0, c) += r[c];
  }
  if (h.rows() > 0) mean *= 1.0 / static_cast<double>(h.rows());
  return l2_normalize_rows(mean);
}

Matrix pool_embed_backward(const Matrix& h, const Matrix& dz) {
  Matrix mean(1, h.cols());
  for (std::size_t i = 0; i < h.rows(); ++i) {
    auto r = h.row(i);
    for (std::size_t c = 0; c < h.cols(); ++c) mean(0, c) += r[c];
  }
  const double inv_n = h.rows() > 0 ? 1.0 / static_cast<double>(h.rows()) : 0.0;
  mean *= inv_n;
  const Matrix dmean = l2_normalize_rows_backward(mean, dz);
  Matrix dh(h.rows(), h.cols());
  for (std::size_t i = 0; i < h.rows(); ++i) {
    auto r = dh.row(i);
    for (std::size_t c = 0; c < h.cols(); ++c) r[c] = dmean(0, c) * inv_n;
  }
  return dh;
}

AlignResult align_pair(const Matrix& hm, const Matrix& hn, const CrossAttentionParams& params,
                       const AlignConfig& cfg, AlignCache* cache, const FrozenPlans* frozen) {
  if (hm.cols() != hn.cols()) fail(ErrorCode::kShape, "align_pair width mismatch");
  if (hm.rows() == 0 || hn.rows() == 0) fail(ErrorCode::kArgument, "align_pair needs nonempty graphs");
  const AttentionWeights w{params.w_q.value, params.w_k.value, params.w_v.value, params.w_o.value};
  AlignCache local;
  AlignCache& c = cache ? *cache : local;
  c.hm = hm;
  c.hn = hn;
  c.ca_m.reset();
  c.ca_n.reset();
  c.fuse_m.reset();
  c.fuse_n.reset();

  Matrix rm = hm, rn = hn;
  if (cfg.ca_on) {
    c.ca_m.emplace();
    rm += cross_attend(hm, hn, w, params.heads, &*c.ca_m);
    if (cfg.bidirectional) {
      c.ca_n.emplace();
      rn += cross_attend(hn, hm, w, params.heads, &*c.ca_n);
    }
  }
  c.hat_m = layer_norm_rows(rm, params.ln_gamma.value, params.ln_beta.value, kLayerNormEps, &c.ln_m);
  c.hat_n = layer_norm_rows(rn, params.ln_gamma.value, params.ln_beta.value, kLayerNormEps, &c.ln_n);

  c.cost = cosine_cost(c.hat_m, c.hat_n);
  // overflowing activations are a numeric failure of the model, not bad input
  for (double v : c.cost.values()) {
    if (!std::isfinite(v)) fail(ErrorCode::kDiverged, "non-finite activations in alignment");
  }
  c.mu = uniform_marginal(hm.rows());
  c.nu = uniform_marginal(hn.rows());
  const bool fuse_n = cfg.ot_on && cfg.bidirectional;

  AlignResult result;
  if (frozen) {
    result.plan.plan = frozen->plan_mn;
    result.plan.iterations = 0;
    result.plan.marginal_err = marginal_error(frozen->plan_mn, c.mu, c.nu);
    result.plan.transport_cost = frobenius_dot(frozen->plan_mn, c.cost);
    c.plan_mn = frozen->plan_mn;
    if (fuse_n) c.plan_nm = frozen->plan_nm;
  } else {
    result.plan = sinkhorn({c.cost, c.mu, c.nu, cfg.epsilon, cfg.iterations});
    c.plan_mn = result.plan.plan;
    if (fuse_n) {
      // The reverse direction solves its own problem so that swapping the
      // inputs swaps the outputs exactly.
      c.plan_nm = sinkhorn({c.cost.transposed(), c.nu, c.mu, cfg.epsilon, cfg.iterations}).plan;
    }
  }

  if (cfg.ot_on) {
    c.fuse_m.emplace();
    c.fused_m = ot_fuse(c.hat_m, c.hat_n, c.plan_mn, c.mu, cfg.lambda_blend, params.fuse_gamma.value,
                        params.fuse_beta.value, &*c.fuse_m);
  } else {
    c.fused_m = c.hat_m;
  }
  if (fuse_n) {
    c.fuse_n.emplace();
    c.fused_n = ot_fuse(c.hat_n, c.hat_m, c.plan_nm, c.nu, cfg.lambda_blend, params.fuse_gamma.value,
                        params.fuse_beta.value, &*c.fuse_n);
  } else {
    c.fused_n = c.hat_n;
  }
  result.z_m = pool_embed(c.fused_m);
  result.z_n = pool_embed(c.fused_n);
  return result;
}

AlignGrads align_pair_backward(CrossAttentionParams& params, const AlignConfig& cfg,
                               const AlignCache& c, const Matrix& dz_m, const Matrix& dz_n,
                               double d_transport_cost) {
  const AttentionWeights w{params.w_q.value, params.w_k.value, params.w_v.value, params.w_o.value};
  Matrix dhat_m(c.hat_m.rows(), c.hat_m.cols());
  Matrix dhat_n(c.hat_n.rows(), c.hat_n.cols());

  const Matrix dfused_m = pool_embed_backward(c.fused_m, dz_m);
  const Matrix dfused_n = pool_embed_backward(c.fused_n, dz_n);
  if (c.fuse_m) {
    auto g = ot_fuse_backward(c.plan_mn, c.mu, cfg.lambda_blend, params.fuse_gamma.value, *c.fuse_m,
                              dfused_m, params.fuse_gamma.grad, params.fuse_beta.grad);
    dhat_m += g.dhm;
    dhat_n += g.dhn;
  } else {
    dhat_m += dfused_m;
  }
  if (c.fuse_n) {
    auto g = ot_fuse_backward(c.plan_nm, c.nu, cfg.lambda_blend, params.fuse_gamma.value, *c.fuse_n,
                              dfused_n, params.fuse_gamma.grad, params.fuse_beta.grad);
    dhat_n += g.dhm;
    dhat_m += g.dhn;
  } else {
    dhat_n += dfused_n;
  }
  if (d_transport_cost != 0.0) {
    const Matrix dcost = c.plan_mn * d_transport_cost;
    auto g = cosine_cost_backward(c.hat_m, c.hat_n, dcost);
    dhat_m += g.da;
    dhat_n += g.db;
  }

  const Matrix drm = layer_norm_rows_backward(c.ln_m, params.ln_gamma.value, dhat_m, params.ln_gamma.grad,
                                              params.ln_beta.grad);
  const Matrix drn = layer_norm_rows_backward(c.ln_n, params.ln_gamma.value, dhat_n, params.ln_gamma.grad,
                                              params.ln_beta.grad);
  AlignGrads out{drm, drn};
  auto accumulate = [&](const CrossAttentionGrads& g) {
    params.w_q.grad += g.dwq;
    params.w_k.grad += g.dwk;
    params.w_v.grad += g.dwv;
    params.w_o.grad += g.dwo;
  };
  if (c.ca_m) {
    auto g = cross_attend_backward(c.hm, c.hn, w, params.heads, *c.ca_m, drm);
    out.dhm += g.dhm;
    out.dhn += g.dhn;
    accumulate(g);
  }
  if (c.ca_n) {
    auto g = cross_attend_backward(c.hn, c.hm, w, params.heads, *c.ca_n, drn);
    out.dhn += g.dhm;
    out.dhm += g.dhn;
    accumulate(g);
  }
  return out;
}

}  // namespace xmodal
