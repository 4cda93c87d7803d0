#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xmodal/matrix.hpp"

namespace xmodal {

// Trainable tensor with a gradient accumulator of the same shape. Gradients
// add up across backward calls until zero_grad() is called.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }
};

// Uniform in [-s, s] with s = sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

// --- matmul ---------------------------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);

struct MatmulGrads {
  Matrix da;
  Matrix db;
};
MatmulGrads matmul_backward(const Matrix& a, const Matrix& b, const Matrix& dc);

// --- softmax ---------------------------------------------------------------

// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& m);
// Gradient w.r.t. the softmax input given its output y and upstream dy.
Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy);

// --- layer norm -------------------------------------------------------------

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
  Matrix xhat;
  std::vector<double> inv_std;
};

// gamma and beta are 1 x cols.
Matrix layer_norm_rows(const Matrix& m, const Matrix& gamma, const Matrix& beta,
                       double eps = kLayerNormEps, LayerNormCache* cache = nullptr);
// Returns dX; accumulates into dgamma/dbeta (1 x cols).
Matrix layer_norm_rows_backward(const LayerNormCache& cache, const Matrix& gamma,
                                const Matrix& dy, Matrix& dgamma, Matrix& dbeta);

// --- relu -------------------------------------------------------------------

Matrix relu(const Matrix& m);
// Indicator of the forward input being positive.
Matrix relu_backward(const Matrix& input, const Matrix& dy);

// --- row L2 normalization ----------------------------------------------------

inline constexpr double kL2Eps = 1e-12;

Matrix l2_normalize_rows(const Matrix& m, double eps = kL2Eps);
Matrix l2_normalize_rows_backward(const Matrix& input, const Matrix& dy,
                                  double eps = kL2Eps);

// --- gradient checking -------------------------------------------------------

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares each param's current grad (assumed to hold the analytic gradient
// of f at the current values) with the central difference
// (f(x+h) - f(x-h)) / 2h. Relative error uses max(|a|, |n|, 1e-8).
// Parameter values are restored before returning.
GradCheckResult finite_diff_check(const std::function<double()>& f,
                                  std::span<Param* const> params, double h = 1e-4);

}  // namespace xmodal
