#include "sidlab/token_select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sidlab/errors.hpp"
#include "sidlab/seed.hpp"

namespace sidlab {

ImportanceScores vision_importance(const AttentionTrace& trace, int layer_i,
                                   const std::vector<int>& vision_indices) {
  if (layer_i < 1 || layer_i > static_cast<int>(trace.layers.size()))
    throw InputError("vision_importance: layer " + std::to_string(layer_i) + " out of range");
  const LayerAttention& la = trace.layers[layer_i - 1];
  if (la.heads.empty() || la.tokens.empty()) throw InputError("vision_importance: empty layer");
  const int n = static_cast<int>(la.tokens.size());
  std::vector<int> where(la.tokens.back() + 1, -1);
  for (int i = 0; i < n; ++i) where[la.tokens[i]] = i;
  ImportanceScores out;
  out.layer = layer_i;
  out.scores.reserve(vision_indices.size());
  for (int v : vision_indices) {
    if (v < 0 || v >= static_cast<int>(where.size()) || where[v] < 0)
      throw InputError("vision_importance: index " + std::to_string(v) + " not in layer");
    double s = 0.0;
    for (const Matrix& a : la.heads) s += a(n - 1, where[v]);
    out.scores.push_back(s / static_cast<double>(la.heads.size()));
  }
  return out;
}

ImportanceScores vision_importance(const std::vector<Vector>& head_rows, int layer_i,
                                   const std::vector<int>& vision_indices) {
  if (head_rows.empty()) throw InputError("vision_importance: no heads");
  ImportanceScores out;
  out.layer = layer_i;
  for (int v : vision_indices) {
    double s = 0.0;
    for (const Vector& row : head_rows) {
      if (v < 0 || v >= static_cast<int>(row.size()))
        throw InputError("vision_importance: index " + std::to_string(v) + " out of range");
      s += row[v];
    }
    out.scores.push_back(s / static_cast<double>(head_rows.size()));
  }
  return out;
}

int keep_count(double ratio, std::size_t n) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw InputError("keep ratio must lie in [0,1]");
  // The epsilon absorbs representation error such as 0.1 * 30 = 3.0000000000000004.
  const double k = std::ceil(ratio * static_cast<double>(n) - 1e-9);
  return static_cast<int>(std::clamp(k, 0.0, static_cast<double>(n)));
}

namespace {

std::vector<int> select_sorted(const ImportanceScores& scores, double keep_ratio, bool least) {
  if (scores.scores.empty()) throw InputError("select: empty scores");
  const int k = keep_count(keep_ratio, scores.scores.size());
  std::vector<int> order(scores.scores.size());
  std::iota(order.begin(), order.end(), 0);
  const auto& s = scores.scores;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return least ? s[a] < s[b] : s[a] > s[b];
  });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

std::vector<int> select_least(const ImportanceScores& scores, double keep_ratio) {
  return select_sorted(scores, keep_ratio, true);
}

std::vector<int> select_top(const ImportanceScores& scores, double keep_ratio) {
  return select_sorted(scores, keep_ratio, false);
}

std::vector<int> select_random(std::size_t n_vision, double ratio, std::uint64_t seed) {
  const int k = keep_count(ratio, n_vision);
  std::vector<int> all(n_vision);
  std::iota(all.begin(), all.end(), 0);
  Rng rng(derive_seed(seed, "select_random"));
  // Partial Fisher-Yates with explicit bounded draws.
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_vision - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace sidlab
