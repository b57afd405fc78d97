#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "helpers.hpp"
#include "sidlab/errors.hpp"
#include "sidlab/numerics.hpp"

using namespace sidlab;
using testutil::random_matrix;

TEST_CASE("softmax small cases") {
  auto p = softmax({0.0, 0.0});
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-12));
  p = softmax({std::log(2.0), 0.0});
  CHECK(std::abs(p[0] - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(p[1] - 1.0 / 3.0) < 1e-12);
}

TEST_CASE("softmax errors") {
  CHECK_THROWS_AS(softmax({}), DimensionError);
  CHECK_THROWS_AS(softmax({1.0, std::numeric_limits<double>::quiet_NaN()}), NumericError);
  CHECK_THROWS_AS(softmax({1.0, std::numeric_limits<double>::infinity()}), NumericError);
}

TEST_CASE("softmax shift invariance, normalization and argmax") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0.0, 3.0);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  for (int t = 0; t < 100; ++t) {
    Vector x(1 + t % 9);
    for (auto& v : x) v = nd(rng);
    const double c = shift(rng);
    Vector y = x;
    for (auto& v : y) v += c;
    auto p = softmax(x), q = softmax(y);
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(std::abs(p[i] - q[i]) < 1e-12);
      CHECK(p[i] > 0.0);
      CHECK(p[i] <= 1.0);
      s += p[i];
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
    CHECK(std::max_element(p.begin(), p.end()) - p.begin() == std::max_element(x.begin(), x.end()) - x.begin());
  }
}

TEST_CASE("softmax survives huge logits") {
  auto p = softmax({1000.0, 999.0});
  CHECK(std::abs(p[0] - 1.0 / (1.0 + std::exp(-1.0))) < 1e-12);
}

TEST_CASE("masked softmax maps -inf to exact zero") {
  const double ninf = -std::numeric_limits<double>::infinity();
  auto p = masked_softmax({0.0, ninf, 0.0});
  CHECK(p[1] == 0.0);
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK_THROWS_AS(masked_softmax({ninf, ninf}), NumericError);
}

TEST_CASE("causal attention single token") {
  Matrix q(1, 3, 0.7), k(1, 3, -0.2), v(1, 3);
  v(0, 0) = 1.0;
  v(0, 1) = 2.0;
  v(0, 2) = 3.0;
  auto res = causal_attention(q, k, v, 3);
  CHECK(res.a(0, 0) == 1.0);
  CHECK(res.r == v);
}

TEST_CASE("causal attention zero queries") {
  Matrix z(2, 4), v(2, 4, 1.0);
  auto res = causal_attention(z, z, v, 4);
  CHECK(res.a(0, 0) == 1.0);
  CHECK(res.a(0, 1) == 0.0);
  CHECK(res.a(1, 0) == doctest::Approx(0.5));
  CHECK(res.a(1, 1) == doctest::Approx(0.5));
}

TEST_CASE("causal attention shape checks") {
  Matrix a(3, 4), b(2, 4), c(3, 5);
  CHECK_THROWS_AS(causal_attention(a, b, a, 4), DimensionError);
  CHECK_THROWS_AS(causal_attention(a, a, c, 4), DimensionError);
  CHECK_THROWS_AS(causal_attention(c, c, c, 4), DimensionError);
}

// Materializes the mask, then a plain row softmax.
static Matrix oracle_attention(const Matrix& q, const Matrix& k, int d) {
  const int n = static_cast<int>(q.rows());
  Matrix s(n, n), a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double dot = 0.0;
      for (int c = 0; c < d; ++c) dot += q(i, c) * k(j, c);
      s(i, j) = j > i ? -INFINITY : dot / std::sqrt(static_cast<double>(d));
    }
  for (int i = 0; i < n; ++i) {
    double m = -INFINITY, z = 0.0;
    for (int j = 0; j < n; ++j) m = std::max(m, s(i, j));
    for (int j = 0; j < n; ++j) z += std::exp(s(i, j) - m);
    for (int j = 0; j < n; ++j) a(i, j) = std::exp(s(i, j) - m) / z;
  }
  return a;
}

TEST_CASE("causal attention matches the brute-force oracle") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const int n = 5, d = 6;
    Matrix q = random_matrix(rng, n, d), k = random_matrix(rng, n, d), v = random_matrix(rng, n, d);
    auto res = causal_attention(q, k, v, d);
    Matrix a = oracle_attention(q, k, d);
    for (int i = 0; i < n; ++i) {
      double rs = 0.0;
      for (int j = 0; j < n; ++j) {
        CHECK(std::abs(res.a(i, j) - a(i, j)) < 1e-9);
        if (j > i) CHECK(std::abs(res.a(i, j)) < 1e-12);
        rs += res.a(i, j);
      }
      CHECK(std::abs(rs - 1.0) < 1e-9);
      for (int c = 0; c < d; ++c) {
        double r = 0.0;
        for (int j = 0; j < n; ++j) r += a(i, j) * v(j, c);
        CHECK(std::abs(res.r(i, c) - r) < 1e-9);
      }
    }
  }
}

TEST_CASE("final row is permutation equivariant over earlier keys") {
  std::mt19937_64 rng(9);
  const int n = 6, d = 4;
  Matrix q = random_matrix(rng, n, d), k = random_matrix(rng, n, d), v = random_matrix(rng, n, d);
  // Swap keys/values 1 and 3; the last row sees both.
  Matrix k2 = k, v2 = v;
  for (int c = 0; c < d; ++c) {
    std::swap(k2(1, c), k2(3, c));
    std::swap(v2(1, c), v2(3, c));
  }
  auto r1 = causal_attention(q, k, v, d), r2 = causal_attention(q, k2, v2, d);
  CHECK(std::abs(r1.a(n - 1, 1) - r2.a(n - 1, 3)) < 1e-12);
  CHECK(std::abs(r1.a(n - 1, 3) - r2.a(n - 1, 1)) < 1e-12);
  for (int c = 0; c < d; ++c) CHECK(std::abs(r1.r(n - 1, c) - r2.r(n - 1, c)) < 1e-12);
}

TEST_CASE("matmul") {
  Matrix a(2, 3), b(3, 1);
  for (int i = 0; i < 6; ++i) a.data()[i] = i + 1;
  b(0, 0) = 1;
  b(1, 0) = 0;
  b(2, 0) = -1;
  auto c = matmul(a, b);
  CHECK(c(0, 0) == -2);
  CHECK(c(1, 0) == -2);
  CHECK_THROWS_AS(matmul(b, b), DimensionError);
}
