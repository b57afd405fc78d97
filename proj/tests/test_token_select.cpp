#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "sidlab/errors.hpp"
#include "sidlab/token_select.hpp"

using namespace sidlab;

static AttentionTrace trace_from_rows(const std::vector<std::vector<Vector>>& rows_per_layer) {
  // rows_per_layer[layer][head] is the final row; earlier rows are a valid
  // lower-triangular filler.
  AttentionTrace t;
  for (const auto& heads : rows_per_layer) {
    LayerAttention la;
    const int n = static_cast<int>(heads.front().size());
    for (int i = 0; i < n; ++i) la.tokens.push_back(i);
    for (const auto& last : heads) {
      Matrix a(n, n);
      for (int i = 0; i + 1 < n; ++i)
        for (int j = 0; j <= i; ++j) a(i, j) = 1.0 / (i + 1);
      for (int j = 0; j < n; ++j) a(n - 1, j) = last[j];
      la.heads.push_back(a);
    }
    t.layers.push_back(la);
  }
  return t;
}

TEST_CASE("importance averages heads on the final row") {
  auto t = trace_from_rows({{{0.2, 0.3, 0.5, 0.0}, {0.4, 0.3, 0.3, 0.0}}});
  auto s = vision_importance(t, 1, {0, 1, 2});
  REQUIRE(s.scores.size() == 3);
  CHECK(std::abs(s.scores[0] - 0.3) < 1e-15);
  CHECK(std::abs(s.scores[1] - 0.3) < 1e-15);
  CHECK(std::abs(s.scores[2] - 0.4) < 1e-15);
  CHECK(s.layer == 1);
}

TEST_CASE("importance under uniform attention") {
  const int n = 7;
  auto t = trace_from_rows({{Vector(n, 1.0 / n)}});
  auto s = vision_importance(t, 1, {0, 1, 2, 3});
  for (double v : s.scores) CHECK(std::abs(v - 1.0 / n) < 1e-15);
}

TEST_CASE("importance single head equals that head's row") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  Vector row(6);
  for (auto& x : row) x = u(rng);
  auto t = trace_from_rows({{row}});
  auto s = vision_importance(t, 1, {0, 2, 4});
  CHECK(s.scores[0] == row[0]);
  CHECK(s.scores[1] == row[2]);
  CHECK(s.scores[2] == row[4]);
}

TEST_CASE("importance layer range") {
  auto t = trace_from_rows({{{0.5, 0.5}}, {{0.5, 0.5}}});
  CHECK_THROWS_AS(vision_importance(t, 0, {0}), InputError);
  CHECK_THROWS_AS(vision_importance(t, 3, {0}), InputError);
  CHECK_NOTHROW(vision_importance(t, 2, {0}));
}

TEST_CASE("keep count") {
  CHECK(keep_count(0.0, 32) == 0);
  CHECK(keep_count(0.1, 32) == 4);
  CHECK(keep_count(1.0 / 3.0, 3) == 1);
  CHECK(keep_count(0.25, 4) == 1);
  CHECK(keep_count(1.0, 32) == 32);
  CHECK_THROWS_AS(keep_count(-0.1, 4), InputError);
  CHECK_THROWS_AS(keep_count(1.1, 4), InputError);
}

TEST_CASE("select least tie rule and full keep") {
  ImportanceScores s{{0.3, 0.3, 0.4}, 1};
  CHECK(select_least(s, 1.0 / 3.0) == std::vector<int>{0});
  CHECK(select_least(s, 1.0) == std::vector<int>{0, 1, 2});
  CHECK(select_least(s, 0.0).empty());
  CHECK_THROWS_AS(select_least(s, 1.5), InputError);
  CHECK_THROWS_AS(select_least(ImportanceScores{}, 0.5), InputError);
}

TEST_CASE("select top basics") {
  ImportanceScores s{{0.1, 0.9}, 1};
  CHECK(select_top(s, 0.5) == std::vector<int>{1});
  CHECK(select_top(s, 1.0) == std::vector<int>{0, 1});
  ImportanceScores t{{0.5, 0.5, 0.1}, 1};
  CHECK(select_top(t, 0.34) == std::vector<int>{0, 1});
}

TEST_CASE("select least is invariant to positive rescaling") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 50; ++t) {
    ImportanceScores s{Vector(20), 1};
    for (auto& x : s.scores) x = std::round(u(rng) * 8) / 8;  // plenty of ties
    ImportanceScores r = s;
    for (auto& x : r.scores) x *= 3.5;
    CHECK(select_least(s, 0.3) == select_least(r, 0.3));
  }
}

TEST_CASE("top and least are complements for distinct scores") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 100; ++t) {
    const int n = 10 + t % 7;
    ImportanceScores s{Vector(n), 1};
    for (auto& x : s.scores) x = u(rng);
    const int k = t % (n + 1);
    auto least = select_least(s, static_cast<double>(k) / n);
    auto top = select_top(s, static_cast<double>(n - k) / n);
    REQUIRE(static_cast<int>(least.size()) == k);
    std::vector<int> all = least;
    all.insert(all.end(), top.begin(), top.end());
    std::sort(all.begin(), all.end());
    std::vector<int> want(n);
    std::iota(want.begin(), want.end(), 0);
    CHECK(all == want);
  }
}

TEST_CASE("select random") {
  CHECK(select_random(8, 1.0, 3).size() == 8);
  CHECK(select_random(8, 0.0, 3).empty());
  CHECK(select_random(32, 0.1, 42) == select_random(32, 0.1, 42));
  auto s = select_random(32, 0.25, 5);
  CHECK(s.size() == 8);
  CHECK(std::is_sorted(s.begin(), s.end()));
  CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
  CHECK_THROWS_AS(select_random(4, 2.0, 1), InputError);
}

TEST_CASE("select random inclusion frequency") {
  const int n = 10, draws = 10000;
  std::vector<int> hits(n, 0);
  for (int d = 0; d < draws; ++d)
    for (int i : select_random(n, 0.5, static_cast<std::uint64_t>(d))) ++hits[i];
  for (int h : hits) CHECK(std::abs(h / static_cast<double>(draws) - 0.5) < 0.02);
}
