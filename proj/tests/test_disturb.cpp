#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "sidlab/disturb.hpp"
#include "sidlab/errors.hpp"

using namespace sidlab;

static TokenStream sample_stream(const testutil::Fixture& f, int scene = 0) {
  auto s = caption_stream(embed_scene(f.scenes[scene], f.model));
  s.append_generated(f.model.vocab().object_token(f.scenes[scene].present[0]));
  return s;
}

TEST_CASE("gaussian disturbance touches vision only") {
  auto f = testutil::fixture();
  auto s = sample_stream(f);
  auto d = gaussian_vision_disturb(s, 0.5, 17);
  REQUIRE(d.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(d[i].token == s[i].token);
    CHECK(d[i].role == s[i].role);
    CHECK(d[i].position == s[i].position);
    if (s[i].role == Role::kVision) CHECK(d[i].embedding != s[i].embedding);
    else CHECK(d[i].embedding == s[i].embedding);
  }
  CHECK(gaussian_vision_disturb(s, 0.5, 17) == d);
  CHECK(gaussian_vision_disturb(s, 0.5, 18) != d);
  CHECK(gaussian_vision_disturb(s, 0.0, 17) == s);
}

TEST_CASE("gaussian disturbance magnitude") {
  auto f = testutil::fixture();
  auto s = sample_stream(f);
  const double sigma = 0.3;
  double sum = 0.0;
  long n = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto d = gaussian_vision_disturb(s, sigma, seed);
    for (int i : s.vision_indices())
      for (std::size_t c = 0; c < s[i].embedding.size(); ++c) {
        sum += std::abs(d[i].embedding[c] - s[i].embedding[c]);
        ++n;
      }
  }
  const double want = sigma * std::sqrt(2.0 / M_PI);
  CHECK(std::abs(sum / n - want) / want < 0.02);
}

TEST_CASE("gaussian disturbance errors") {
  auto f = testutil::fixture();
  auto s = sample_stream(f);
  CHECK_THROWS_AS(gaussian_vision_disturb(s, -1.0, 0), InputError);
  CHECK_THROWS_AS(gaussian_vision_disturb(ablate_vision(s), 0.5, 0), InputError);
}

TEST_CASE("vision rms") {
  std::vector<Vector> vis = {Vector{3.0, 4.0}, Vector{0.0, 0.0}};
  auto s = TokenStream::build(vis, {kBos});
  CHECK(vision_rms(s) == doctest::Approx(std::sqrt(25.0 / 4.0)));
  CHECK(vision_rms(ablate_vision(s)) == 0.0);
}

TEST_CASE("ablation removes every vision token") {
  auto f = testutil::fixture();
  auto s = sample_stream(f);
  auto a = ablate_vision(s);
  CHECK(a.size() == s.size() - s.n_vision());
  CHECK(a.n_vision() == 0);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].position == static_cast<int>(i));
  CHECK_NOTHROW(a.validate());
}

TEST_CASE("negative instruction prepends the prefix to the text") {
  auto f = testutil::fixture();
  auto s = sample_stream(f);
  const std::vector<int> prefix = {kConfuse, kConfuse, kConfuse};
  auto d = negative_instruction(s, prefix, f.model.vocab());
  CHECK(d.size() == s.size() + prefix.size());
  const int nv = s.n_vision();
  for (std::size_t i = 0; i < prefix.size(); ++i) CHECK(d[nv + i].token == kConfuse);
  CHECK(d[nv + prefix.size()].token == kBos);
  CHECK(d.generated_tokens() == s.generated_tokens());
  CHECK_NOTHROW(d.validate());
  CHECK_THROWS_AS(negative_instruction(s, {9999}, f.model.vocab()), VocabularyError);
}

TEST_CASE("disturbances with nothing to do leave the stream alone") {
  auto f = testutil::fixture();
  auto s = sample_stream(f);
  auto text_only = ablate_vision(s);
  CHECK(ablate_vision(text_only) == text_only);
  CHECK(negative_instruction(s, {}, f.model.vocab()) == s);
}

TEST_CASE("disturbance spec dispatch") {
  auto f = testutil::fixture();
  auto s = sample_stream(f);
  DisturbanceSpec spec;
  spec.sigma_d = 0.0;
  CHECK_THROWS_AS(apply_disturbance(s, spec, f.model.vocab()), InputError);
  spec.sigma_d = 0.4;
  spec.seed = 3;
  CHECK(apply_disturbance(s, spec, f.model.vocab()) == gaussian_vision_disturb(s, 0.4, 3));
  spec.kind = DisturbKind::kAblateVision;
  CHECK(apply_disturbance(s, spec, f.model.vocab()) == ablate_vision(s));
  spec.kind = DisturbKind::kNegativeInstruction;
  CHECK(apply_disturbance(s, spec, f.model.vocab()) == negative_instruction(s, spec.prefix, f.model.vocab()));
}
