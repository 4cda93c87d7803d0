#pragma once

#include <optional>
#include <vector>

#include "xmodal/kernels.hpp"

namespace xmodal {

// ---- cross-attention ---------------------------------------------------------

// W_Q, W_K, W_V are d x d with head h owning columns [h*dh, (h+1)*dh);
// W_O is d x d. ln_* normalize the residual, fuse_* the OT fusion.
struct CrossAttentionParams {
  std::size_t heads = 4;
  Param w_q, w_k, w_v, w_o;
  Param ln_gamma, ln_beta;
  Param fuse_gamma, fuse_beta;

  std::vector<Param*> all();
  std::vector<const Param*> all() const;
  void zero_grad();
};

CrossAttentionParams init_cross_attention(std::size_t d, std::size_t heads, const std::string& prefix,
                                          Rng& rng);

struct AttentionWeights {
  const Matrix& wq;
  const Matrix& wk;
  const Matrix& wv;
  const Matrix& wo;
};

struct CrossAttentionCache {
  Matrix q, k, v, o;
  std::vector<Matrix> attn;  // per head, N_m x N_n, row-stochastic
};

// Queries from hm, keys and values from hn.
Matrix cross_attend(const Matrix& hm, const Matrix& hn, const AttentionWeights& w, std::size_t heads,
                    CrossAttentionCache* cache = nullptr);

struct CrossAttentionGrads {
  Matrix dhm, dhn, dwq, dwk, dwv, dwo;
};
CrossAttentionGrads cross_attend_backward(const Matrix& hm, const Matrix& hn, const AttentionWeights& w,
                                          std::size_t heads, const CrossAttentionCache& cache,
                                          const Matrix& dout);

// layer_norm_rows(hm + htilde, gamma, beta)
Matrix residual_norm(const Matrix& hm, const Matrix& htilde, const Matrix& gamma, const Matrix& beta,
                     LayerNormCache* cache = nullptr);

// ---- cosine cost ----------------------------------------------------------------

inline constexpr double kZeroNormGuard = 1e-12;

// C(i,j) = 1 - cos(a_i, b_j), clamped to [0, 2]; rows with norm below
// 1e-12 get cost 1.
Matrix cosine_cost(const Matrix& a, const Matrix& b);

struct CosineCostGrads {
  Matrix da, db;
};
CosineCostGrads cosine_cost_backward(const Matrix& a, const Matrix& b, const Matrix& dcost);

// ---- entropic optimal transport --------------------------------------------------

struct TransportProblem {
  Matrix cost;
  std::vector<double> mu;
  std::vector<double> nu;
  double epsilon = 0.1;
  int iterations = 80;

  void validate() const;
};

struct TransportPlan {
  Matrix plan;
  double marginal_err = 0.0;
  double transport_cost = 0.0;
  int iterations = 0;
};

std::vector<double> uniform_marginal(std::size_t n);

// Log-domain Sinkhorn on potentials f, g starting from zero. Each sweep
// updates f then g; T_ij = exp((f_i + g_j - C_ij) / eps).
TransportPlan sinkhorn(const TransportProblem& problem);

// <T, C> - eps * H(T) with H(T) = -sum T log T (0 log 0 = 0).
double entropic_objective(const Matrix& plan, const Matrix& cost, double epsilon);

// Max deviation of row sums from mu and column sums from nu.
double marginal_error(const Matrix& plan, const std::vector<double>& mu, const std::vector<double>& nu);

// ---- fusion and pooling -----------------------------------------------------------

// diag(1/mu) T hn
Matrix barycentric_projection(const Matrix& plan, const Matrix& hn, const std::vector<double>& mu);

// layer_norm_rows(hm + lambda * diag(1/mu) T hn, gamma, beta)
Matrix ot_fuse(const Matrix& hm, const Matrix& hn, const Matrix& plan, const std::vector<double>& mu,
               double lambda_blend, const Matrix& gamma, const Matrix& beta,
               LayerNormCache* cache = nullptr);

struct OtFuseGrads {
  Matrix dhm, dhn;
};
// T is treated as a constant.
OtFuseGrads ot_fuse_backward(const Matrix& plan, const std::vector<double>& mu, double lambda_blend,
                             const Matrix& gamma, const LayerNormCache& cache, const Matrix& dout,
                             Matrix& dgamma, Matrix& dbeta);

// L2-normalized row mean, as a 1 x d matrix.
Matrix pool_embed(const Matrix& h);
Matrix pool_embed_backward(const Matrix& h, const Matrix& dz);

// ---- composed pair alignment ----------------------------------------------------

struct AlignConfig {
  double epsilon = 0.1;
  int iterations = 80;
  double lambda_blend = 0.5;
  bool ca_on = true;
  bool ot_on = true;
  // false: only the m side is enhanced (query-only attention and fusion).
  bool bidirectional = true;
};

struct AlignCache {
  Matrix hm, hn;
  std::optional<CrossAttentionCache> ca_m, ca_n;
  LayerNormCache ln_m, ln_n;
  Matrix hat_m, hat_n;
  Matrix cost;
  Matrix plan_mn, plan_nm;
  std::vector<double> mu, nu;
  std::optional<LayerNormCache> fuse_m, fuse_n;
  Matrix fused_m, fused_n;
};

struct AlignResult {
  Matrix z_m;  // 1 x d
  Matrix z_n;  // 1 x d
  TransportPlan plan;  // m -> n
};

// Plans to use instead of solving; used for frozen-T gradient checks.
struct FrozenPlans {
  Matrix plan_mn;
  Matrix plan_nm;
};

AlignResult align_pair(const Matrix& hm, const Matrix& hn, const CrossAttentionParams& params,
                       const AlignConfig& cfg, AlignCache* cache = nullptr,
                       const FrozenPlans* frozen = nullptr);

struct AlignGrads {
  Matrix dhm, dhn;
};
// Accumulates into params' grads. d_transport_cost is the upstream
// gradient of <T_mn, C>, with T held fixed.
AlignGrads align_pair_backward(CrossAttentionParams& params, const AlignConfig& cfg,
                               const AlignCache& cache, const Matrix& dz_m, const Matrix& dz_n,
                               double d_transport_cost = 0.0);

}  // namespace xmodal
