#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "sidlab/evalkit.hpp"
#include "sidlab/toy_lvlm.hpp"

namespace testutil {

using namespace sidlab;

// n objects in pairs; each object co-occurs only with its partner.
inline Vocabulary paired_vocab(int n) {
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back("obj" + std::to_string(i));
  Matrix p(n, n);
  for (int a = 0; a < n; ++a) p(a, a ^ 1) = 1.0;
  return Vocabulary(names, p);
}

inline ModelConfig small_config(const Vocabulary& v, double noise = 0.05, double prior = 2.0,
                                std::uint64_t seed = 7) {
  ModelConfig c;
  c.vocab = v;
  c.noise_scale = noise;
  c.prior_strength = prior;
  c.seed = seed;
  return c;
}

struct Fixture {
  World world;
  Model model;
  std::vector<Scene> scenes;
};

inline Fixture fixture(std::uint64_t seed = 3, int n_scenes = 20, double noise = 0.05, double prior = 2.0) {
  World w = gen_world(12, 0.7, seed);
  ModelConfig c = small_config(w.vocab, noise, prior, seed);
  Model m = build_model(c);
  auto scenes = gen_scenes(w, n_scenes, 3, seed);
  return {std::move(w), std::move(m), std::move(scenes)};
}

inline double max_abs_diff(const Vector& a, const Vector& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? d : INFINITY;
}

inline Matrix random_matrix(std::mt19937_64& rng, int r, int c, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(r, c);
  for (auto& x : m.data()) x = nd(rng);
  return m;
}

}  // namespace testutil
