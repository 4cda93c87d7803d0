#include "xmodal/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "xmodal/errors.hpp"

namespace xmodal {

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (double& v : w.values()) v = rng.uniform(-s, s);
  return w;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) fail(ErrorCode::kShape, "matmul inner dimension mismatch");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Matrix c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c.data() + i * m;
    const double* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) fail(ErrorCode::kShape, "matmul_tn row mismatch");
  const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
  Matrix c(n, m);
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a.data() + p * n;
    const double* brow = b.data() + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) fail(ErrorCode::kShape, "matmul_nt column mismatch");
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  Matrix c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a.data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = b.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c(i, j) = s;
    }
  }
  return c;
}

MatmulGrads matmul_backward(const Matrix& a, const Matrix& b, const Matrix& dc) {
  if (dc.rows() != a.rows() || dc.cols() != b.cols()) {
    fail(ErrorCode::kShape, "matmul_backward gradient shape mismatch");
  }
  return {matmul_nt(dc, b), matmul_tn(a, dc)};
}

Matrix softmax_rows(const Matrix& m) {
  Matrix y(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto in = m.row(i);
    auto out = y.row(i);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      out[j] = std::exp(in[j] - mx);
      sum += out[j];
    }
    for (double& v : out) v /= sum;
  }
  return y;
}

Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy) {
  if (!y.same_shape(dy)) fail(ErrorCode::kShape, "softmax backward shape mismatch");
  Matrix dx(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto yr = y.row(i);
    auto dyr = dy.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < yr.size(); ++j) dot += yr[j] * dyr[j];
    auto dxr = dx.row(i);
    for (std::size_t j = 0; j < yr.size(); ++j) dxr[j] = yr[j] * (dyr[j] - dot);
  }
  return dx;
}

Matrix layer_norm_rows(const Matrix& m, const Matrix& gamma, const Matrix& beta,
                       double eps, LayerNormCache* cache) {
  const std::size_t d = m.cols();
  if (d == 0) fail(ErrorCode::kShape, "layer_norm_rows needs at least one column");
  if (gamma.size() != d || beta.size() != d) {
    fail(ErrorCode::kShape, "layer_norm_rows gamma/beta width mismatch");
  }
  Matrix y(m.rows(), d);
  if (cache) {
    cache->xhat = Matrix(m.rows(), d);
    cache->inv_std.assign(m.rows(), 0.0);
  }
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto x = m.row(i);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    auto out = y.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (x[j] - mean) * inv_std;
      out[j] = gamma.data()[j] * xh + beta.data()[j];
      if (cache) cache->xhat(i, j) = xh;
    }
    if (cache) cache->inv_std[i] = inv_std;
  }
  return y;
}

Matrix layer_norm_rows_backward(const LayerNormCache& cache, const Matrix& gamma,
                                const Matrix& dy, Matrix& dgamma, Matrix& dbeta) {
  const std::size_t n = dy.rows(), d = dy.cols();
  if (!cache.xhat.same_shape(dy)) fail(ErrorCode::kShape, "layer norm backward shape");
  Matrix dx(n, d);
  std::vector<double> dxhat(d);
  for (std::size_t i = 0; i < n; ++i) {
    auto g = dy.row(i);
    auto xh = cache.xhat.row(i);
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dgamma.data()[j] += g[j] * xh[j];
      dbeta.data()[j] += g[j];
      dxhat[j] = g[j] * gamma.data()[j];
      sum_dxhat += dxhat[j];
      sum_dxhat_xhat += dxhat[j] * xh[j];
    }
    const double inv_d = 1.0 / static_cast<double>(d);
    auto out = dx.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      out[j] = cache.inv_std[i] * (dxhat[j] - inv_d * sum_dxhat - xh[j] * inv_d * sum_dxhat_xhat);
    }
  }
  return dx;
}

Matrix relu(const Matrix& m) {
  Matrix y = m;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Matrix relu_backward(const Matrix& input, const Matrix& dy) {
  if (!input.same_shape(dy)) fail(ErrorCode::kShape, "relu backward shape mismatch");
  Matrix dx(dy.rows(), dy.cols());
  for (std::size_t i = 0; i < dy.size(); ++i)
    dx.data()[i] = input.data()[i] > 0.0 ? dy.data()[i] : 0.0;
  return dx;
}

Matrix l2_normalize_rows(const Matrix& m, double eps) {
  Matrix y(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto x = m.row(i);
    double sq = 0.0;
    for (double v : x) sq += v * v;
    const double denom = std::max(std::sqrt(sq), eps);
    auto out = y.row(i);
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] / denom;
  }
  return y;
}

Matrix l2_normalize_rows_backward(const Matrix& input, const Matrix& dy, double eps) {
  if (!input.same_shape(dy)) fail(ErrorCode::kShape, "l2 backward shape mismatch");
  Matrix dx(input.rows(), input.cols());
  for (std::size_t i = 0; i < input.rows(); ++i) {
    auto x = input.row(i);
    auto g = dy.row(i);
    auto out = dx.row(i);
    double sq = 0.0;
    for (double v : x) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm <= eps) {
      // Below the guard the map is x / eps, a plain scaling.
      for (std::size_t j = 0; j < x.size(); ++j) out[j] = g[j] / eps;
      continue;
    }
    double dot = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) dot += x[j] * g[j];
    const double inv = 1.0 / norm;
    for (std::size_t j = 0; j < x.size(); ++j)
      out[j] = inv * (g[j] - x[j] * dot * inv * inv);
  }
  return dx;
}

GradCheckResult finite_diff_check(const std::function<double()>& f,
                                  std::span<Param* const> params, double h) {
  GradCheckResult result;
  for (Param* p : params) {
    for (std::size_t idx = 0; idx < p->value.size(); ++idx) {
      double& x = p->value.data()[idx];
      const double saved = x;
      x = saved + h;
      const double fp = f();
      x = saved - h;
      const double fm = f();
      x = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = p->grad.data()[idx];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > result.max_rel_err || (std::isnan(rel) && !std::isnan(result.max_rel_err))) {
        result.max_rel_err = rel;
        result.worst_param = p->name;
        result.worst_index = idx;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace xmodal
