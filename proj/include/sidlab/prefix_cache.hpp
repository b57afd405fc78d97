#pragma once

#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "sidlab/decode.hpp"
#include "sidlab/toy_lvlm.hpp"

namespace sidlab {

// Backend that keeps per-layer keys/values of the vision prefix and only
// recomputes text rows (plus kept vision rows after pruning). Logits and
// final-row attention match the reference path. Not thread-safe; use one per
// worker.
class CachedBackend : public Backend {
 public:
  explicit CachedBackend(const Model& model, bool memoize = true, std::size_t prefix_slots = 4);

  const Model& model() const override { return model_; }
  PassOutput full(const TokenStream& stream) override;
  PassOutput from_layer(const TokenStream& stream, int layer_i, const std::vector<int>& kept) override;

  std::size_t prefix_builds() const { return prefix_builds_; }
  std::size_t memo_hits() const { return memo_hits_; }

 private:
  struct Prefix {
    int nv = 0;
    std::vector<Matrix> x_in;                  // [layer] nv x d_model, input of that layer
    std::vector<std::vector<Matrix>> k, v;     // [layer][head] nv x dh
  };
  using Key = std::pair<std::uint64_t, std::uint64_t>;

  const Prefix& prefix_for(const TokenStream& stream);
  PassOutput run(const TokenStream& stream, int layer_i, const std::vector<int>* kept);

  const Model& model_;
  bool memoize_;
  std::size_t slots_;
  std::list<std::pair<Key, std::shared_ptr<Prefix>>> prefixes_;
  std::map<std::pair<Key, std::vector<int>>, PassOutput> memo_;
  std::size_t prefix_builds_ = 0;
  std::size_t memo_hits_ = 0;
};

}  // namespace sidlab
