#pragma once

// Small model/sample builders shared by the engine-level tests.

#include <cstdint>

#include "hopgate/engine.hpp"
#include "hopgate/trainer.hpp"
#include "support/oracles.hpp"

namespace fixtures {

inline hopgate::Sample random_sample(const hopgate::HyperParams& hp, std::uint64_t seed) {
  oracles::TestRng rng(seed);
  hopgate::Sample s{hopgate::IndexGrid(hp.n_s, hp.n_w), {}, 0, 1, {}};
  for (auto& cell : s.story_grid.cells) {
    cell = static_cast<std::uint32_t>(rng.index(hp.vocab_size));
  }
  s.query_ids.resize(hp.n_w);
  for (auto& q : s.query_ids) q = static_cast<std::uint32_t>(rng.index(hp.vocab_size));
  s.answer_id = 1 + static_cast<std::uint32_t>(rng.index(hp.vocab_size - 1));
  if (hp.variant == hopgate::Variant::KeyValue) {
    s.value_ids.resize(hp.n_s);
    for (auto& v : s.value_ids) v = 1 + static_cast<std::uint32_t>(rng.index(hp.vocab_size - 1));
  }
  return s;
}

inline hopgate::ModelWeights random_weights(const hopgate::HyperParams& hp, std::uint64_t seed) {
  return hopgate::init_weights(hp, seed);
}

inline hopgate::IcnWeights random_icn(std::size_t d, std::size_t hidden, std::uint64_t seed) {
  oracles::TestRng rng(seed);
  hopgate::IcnWeights icn{hopgate::Mat(hidden, d), hopgate::Vec(hidden), hopgate::Mat(2, hidden),
                          hopgate::Vec(2)};
  for (double& x : icn.w1.span()) x = rng.uniform(-0.5, 0.5);
  for (double& x : icn.b1.span()) x = rng.uniform(-0.1, 0.1);
  for (double& x : icn.w2.span()) x = rng.uniform(-0.5, 0.5);
  for (double& x : icn.b2.span()) x = rng.uniform(-0.1, 0.1);
  return icn;
}

}  // namespace fixtures
