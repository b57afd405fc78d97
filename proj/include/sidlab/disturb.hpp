#pragma once

#include <cstdint>
#include <vector>

#include "sidlab/toy_lvlm.hpp"

namespace sidlab {

enum class DisturbKind { kGaussianVision, kAblateVision, kNegativeInstruction };

struct DisturbanceSpec {
  DisturbKind kind = DisturbKind::kGaussianVision;
  double sigma_d = 1.0;
  std::vector<int> prefix = {kConfuse, kConfuse};
  std::uint64_t seed = 0;

  void validate() const;  // InputError
};

// Absolute-scale i.i.d. Gaussian noise on every vision embedding entry.
TokenStream gaussian_vision_disturb(const TokenStream& stream, double sigma_d, std::uint64_t seed);

// Root mean square over all vision embedding entries (0 without vision).
double vision_rms(const TokenStream& stream);

TokenStream ablate_vision(const TokenStream& stream);

TokenStream negative_instruction(const TokenStream& stream, const std::vector<int>& prefix,
                                 const Vocabulary& vocab);

TokenStream apply_disturbance(const TokenStream& stream, const DisturbanceSpec& spec,
                              const Vocabulary& vocab);

}  // namespace sidlab
