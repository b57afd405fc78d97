#include "sidlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sidlab/errors.hpp"

namespace sidlab {

namespace {

Vector softmax_impl(const Vector& x, bool allow_neg_inf) {
  if (x.empty()) throw DimensionError("softmax: empty input");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity() ||
        (!allow_neg_inf && !std::isfinite(v)))
      throw NumericError("softmax: non-finite entry");
    mx = std::max(mx, v);
  }
  if (!std::isfinite(mx)) throw NumericError("softmax: every entry is masked");
  Vector out(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::isfinite(x[i]) ? std::exp(x[i] - mx) : 0.0;
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

}  // namespace

Vector softmax(const Vector& x) { return softmax_impl(x, false); }

Vector masked_softmax(const Vector& x) { return softmax_impl(x, true); }

AttentionResult causal_attention(const Matrix& q, const Matrix& k, const Matrix& v, int d_l) {
  const std::size_t n = q.rows();
  if (d_l <= 0) throw DimensionError("causal_attention: d_l must be positive");
  const auto d = static_cast<std::size_t>(d_l);
  if (k.rows() != n || v.rows() != n || q.cols() != d || k.cols() != d || v.cols() != d)
    throw DimensionError("causal_attention: Q, K, V must all be " + std::to_string(n) + "x" +
                         std::to_string(d));
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  AttentionResult out{Matrix(n, d), Matrix(n, n)};
  Vector scores;
  for (std::size_t i = 0; i < n; ++i) {
    scores.assign(i + 1, 0.0);
    const double* qi = q.row(i);
    for (std::size_t j = 0; j <= i; ++j) {
      const double* kj = k.row(j);
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += qi[c] * kj[c];
      scores[j] = s * scale;
    }
    Vector p = softmax(scores);
    double* ai = out.a.row(i);
    double* ri = out.r.row(i);
    for (std::size_t j = 0; j <= i; ++j) {
      ai[j] = p[j];
      const double* vj = v.row(j);
      for (std::size_t c = 0; c < d; ++c) ri[c] += p[j] * vj[c];
    }
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + ")");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* oi = out.row(i);
    const double* ai = a.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) oi[j] += aik * bk[j];
    }
  }
  return out;
}

}  // namespace sidlab
