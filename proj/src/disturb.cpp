#include "sidlab/disturb.hpp"

#include <cmath>
#include <random>
#include <string>

#include "sidlab/errors.hpp"
#include "sidlab/seed.hpp"

namespace sidlab {

void DisturbanceSpec::validate() const {
  if (kind == DisturbKind::kGaussianVision && !(sigma_d > 0.0))
    throw InputError("gaussian disturbance requires sigma_d > 0");
}

TokenStream gaussian_vision_disturb(const TokenStream& stream, double sigma_d, std::uint64_t seed) {
  if (stream.n_vision() == 0) throw InputError("gaussian_vision_disturb: stream has no vision tokens");
  if (!(sigma_d >= 0.0)) throw InputError("gaussian_vision_disturb: sigma_d must be >= 0");
  std::vector<StreamEntry> out = stream.entries();
  if (sigma_d == 0.0) return TokenStream(std::move(out));
  Rng rng(derive_seed(seed, "gaussian_vision"));
  std::normal_distribution<double> nd(0.0, sigma_d);
  for (auto& e : out)
    if (e.role == Role::kVision)
      for (double& v : e.embedding) v += nd(rng);
  return TokenStream(std::move(out));
}

double vision_rms(const TokenStream& stream) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& e : stream.entries()) {
    if (e.role != Role::kVision) continue;
    for (double v : e.embedding) s += v * v;
    n += e.embedding.size();
  }
  return n == 0 ? 0.0 : std::sqrt(s / static_cast<double>(n));
}

TokenStream ablate_vision(const TokenStream& stream) {
  std::vector<StreamEntry> out;
  int pos = 0;
  for (const auto& e : stream.entries()) {
    if (e.role == Role::kVision) continue;
    StreamEntry c = e;
    c.position = pos++;
    out.push_back(std::move(c));
  }
  return TokenStream(std::move(out));
}

TokenStream negative_instruction(const TokenStream& stream, const std::vector<int>& prefix,
                                 const Vocabulary& vocab) {
  for (int t : prefix)
    if (t < 0 || t >= vocab.size()) throw VocabularyError("negative prefix token unknown: " + std::to_string(t));
  std::vector<StreamEntry> out;
  out.reserve(stream.size() + prefix.size());
  bool inserted = false;
  for (const auto& e : stream.entries()) {
    if (!inserted && e.role != Role::kVision) {
      for (int t : prefix) out.push_back({t, Role::kInstruction, 0, {}});
      inserted = true;
    }
    out.push_back(e);
  }
  if (!inserted)
    for (int t : prefix) out.push_back({t, Role::kInstruction, 0, {}});
  for (std::size_t i = 0; i < out.size(); ++i) out[i].position = static_cast<int>(i);
  return TokenStream(std::move(out));
}

TokenStream apply_disturbance(const TokenStream& stream, const DisturbanceSpec& spec,
                              const Vocabulary& vocab) {
  spec.validate();
  switch (spec.kind) {
    case DisturbKind::kGaussianVision:
      return gaussian_vision_disturb(stream, spec.sigma_d, spec.seed);
    case DisturbKind::kAblateVision:
      return ablate_vision(stream);
    case DisturbKind::kNegativeInstruction:
      return negative_instruction(stream, spec.prefix, vocab);
  }
  throw InputError("unknown disturbance kind");
}

}  // namespace sidlab
