#pragma once

#include <cstdint>
#include <vector>

#include "sidlab/numerics.hpp"
#include "sidlab/toy_lvlm.hpp"

namespace sidlab {

struct ImportanceScores {
  Vector scores;  // aligned with the vision indices that were scored
  int layer = 0;  // 1-based source layer
};

// Mean over heads of the final row of layer `layer_i`, read at each vision
// index. Raw attention mass, no renormalization.
ImportanceScores vision_importance(const AttentionTrace& trace, int layer_i,
                                   const std::vector<int>& vision_indices);

// Same from per-head final rows that are already indexed by stream position.
ImportanceScores vision_importance(const std::vector<Vector>& head_rows, int layer_i,
                                   const std::vector<int>& vision_indices);

// ⌈ρ·n⌉, 0 at ρ = 0.
int keep_count(double ratio, std::size_t n);

// Indices into `scores`, ascending. Ties go to the lower index.
std::vector<int> select_least(const ImportanceScores& scores, double keep_ratio);
std::vector<int> select_top(const ImportanceScores& scores, double keep_ratio);
std::vector<int> select_random(std::size_t n_vision, double ratio, std::uint64_t seed);

}  // namespace sidlab
