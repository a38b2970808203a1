#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hopgate/cost_model.hpp"
#include "hopgate/gate.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace hopgate;

TEST_CASE("icn_forward: zero weights give a coin flip") {
  IcnWeights icn{Mat(32, 40), Vec(32), Mat(2, 32), Vec(2)};
  FlopLedger led;
  RouteProbs p = icn_forward(Vec(40, 0.7), icn, led);
  CHECK(p.easy == doctest::Approx(0.5));
  CHECK(p.hard == doctest::Approx(0.5));
}

TEST_CASE("icn_forward: measured cost sits within 64 FLOPs of the analytic overhead") {
  const std::size_t d = 40, l1 = 32;
  IcnWeights icn = fixtures::random_icn(d, l1, 17);
  FlopLedger led;
  (void)icn_forward(Vec::from(oracles::TestRng(3).vec(d)), icn, led);
  // Matvec + bias + ReLU + output layer + softmax-of-2.
  const std::uint64_t measured = 2 * l1 * d + 5 * l1 + 25;
  CHECK(led.count(FlopCategory::Icn) == measured);
  CHECK(led.total() == measured);

  CostParams p;
  p.d = d;
  p.icn_hidden = l1;
  const std::uint64_t analytic = icn_overhead(p);  // 2*L1*(d+2) + 25 = 2713
  CHECK(analytic == 2713);
  const std::uint64_t gap = measured > analytic ? measured - analytic : analytic - measured;
  CHECK(gap <= 64);
}

TEST_CASE("icn_forward matches an independent re-implementation") {
  oracles::TestRng rng(23);
  for (int it = 0; it < 100; ++it) {
    const std::size_t d = 1 + rng.index(24), l1 = 1 + rng.index(16);
    IcnWeights icn = fixtures::random_icn(d, l1, 1000 + it);
    auto u = rng.vec(d);

    FlopLedger led;
    RouteProbs got = icn_forward(Vec::from(u), icn, led);

    std::vector<double> hidden(l1, 0.0);
    for (std::size_t i = 0; i < l1; ++i) {
      for (std::size_t k = 0; k < d; ++k) hidden[i] += icn.w1.at(i, k) * u[k];
      hidden[i] = std::max(0.0, hidden[i] + icn.b1[i]);
    }
    std::vector<double> logits(2, 0.0);
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < l1; ++j) logits[i] += icn.w2.at(i, j) * hidden[j];
      logits[i] += icn.b2[i];
    }
    auto probs = oracles::naive_softmax(logits);
    CHECK(oracles::rel_err(got.easy, probs[0]) < 1e-12);
    CHECK(oracles::rel_err(got.hard, probs[1]) < 1e-12);
    CHECK(std::abs(got.easy + got.hard - 1.0) < 1e-9);
  }
}

TEST_CASE("decide_route: thresholded and NC behavior") {
  GateConfig global{GateMode::Global, 0.6, {}};
  CHECK(decide_route({0.7, 0.3}, 1, global) == Route::Easy);
  CHECK(decide_route({0.55, 0.45}, 1, global) == Route::Hard);  // argmax Easy, below z
  CHECK(decide_route({0.3, 0.7}, 1, global) == Route::Hard);
  CHECK(decide_route({0.6, 0.4}, 1, global) == Route::Hard);  // equality is Hard

  GateConfig nc{GateMode::NC, 0.6, {}};
  CHECK(decide_route({0.51, 0.49}, 1, nc) == Route::Easy);
  CHECK(decide_route({0.5, 0.5}, 1, nc) == Route::Hard);

  GateConfig pertask{GateMode::PerTask, 0.55, {{2, 0.9}}};
  CHECK(decide_route({0.8, 0.2}, 2, pertask) == Route::Hard);  // listed task, high bar
  CHECK(decide_route({0.8, 0.2}, 3, pertask) == Route::Easy);  // falls back to z_global
}

TEST_CASE("routing is threshold-monotone: raising z never converts Hard to Easy") {
  oracles::TestRng rng(31);
  for (int it = 0; it < 2000; ++it) {
    const double pe = rng.uniform(0.0, 1.0);
    const double z1 = rng.uniform(0.0, 1.0);
    const double z2 = std::min(1.0, z1 + rng.uniform(0.0, 1.0 - z1));
    GateConfig lo{GateMode::Global, std::max(z1, 1e-9), {}};
    GateConfig hi{GateMode::Global, std::max(z2, 1e-9), {}};
    const Route low = decide_route({pe, 1.0 - pe}, 1, lo);
    const Route high = decide_route({pe, 1.0 - pe}, 1, hi);
    if (low == Route::Hard) CHECK(high == Route::Hard);
  }
}

TEST_CASE("thresholding only reclassifies Easy->Hard, so FP rate cannot grow") {
  oracles::TestRng rng(37);
  GateConfig nc{GateMode::NC, 0.5, {}};
  GateConfig global{GateMode::Global, 0.6, {}};
  std::size_t fp_nc = 0, fp_global = 0, hard_labels = 0;
  for (int it = 0; it < 5000; ++it) {
    const double pe = rng.uniform(0.0, 1.0);
    const bool label_hard = rng.index(3) == 0;
    hard_labels += label_hard;
    if (label_hard && decide_route({pe, 1.0 - pe}, 1, nc) == Route::Easy) ++fp_nc;
    if (label_hard && decide_route({pe, 1.0 - pe}, 1, global) == Route::Easy) ++fp_global;
  }
  REQUIRE(hard_labels > 0);
  CHECK(fp_global <= fp_nc);
}

TEST_CASE("label rule covers the three outcome cases") {
  CHECK(label_from_outcomes(true, true) == Route::Easy);
  CHECK(label_from_outcomes(true, false) == Route::Easy);
  CHECK(label_from_outcomes(false, true) == Route::Hard);
  CHECK(label_from_outcomes(false, false) == Route::Easy);  // nothing to lose
}

TEST_CASE("generate_labels partitions the set; Hard = {early wrong, full right}") {
  HyperParams hp;
  hp.d = 8;
  hp.vocab_size = 12;
  hp.n_s = 6;
  hp.n_w = 3;
  hp.hops = 3;
  ModelWeights w = fixtures::random_weights(hp, 43);
  // An adversarial early head makes the two heads disagree often.
  w.w_e = w.w;
  for (double& x : w.w_e->span()) x = -x;

  std::vector<Sample> data;
  for (int i = 0; i < 40; ++i) data.push_back(fixtures::random_sample(hp, 500 + i));
  auto labels = generate_labels(w, hp, data);
  REQUIRE(labels.size() == data.size());

  ForwardOptions one{.policy = HopPolicy::OneHop};
  ForwardOptions all{.policy = HopPolicy::AllHops};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool fce_ok = forward(w, hp, data[i], one).answer_id == data[i].answer_id;
    const bool fch_ok = forward(w, hp, data[i], all).answer_id == data[i].answer_id;
    CHECK(labels[i].sample_index == i);
    CHECK((labels[i].label == Route::Hard) == (!fce_ok && fch_ok));
  }
}

TEST_CASE("gated forward: unreachable threshold reproduces the baseline exactly") {
  HyperParams hp;
  hp.d = 10;
  hp.vocab_size = 20;
  hp.n_s = 8;
  hp.n_w = 4;
  hp.hops = 3;
  hp.icn_hidden = 6;
  ModelWeights w = fixtures::random_weights(hp, 53);
  w.w_e = w.w;
  for (double& x : w.w_e->span()) x = -x;
  w.icn = fixtures::random_icn(hp.d, hp.icn_hidden, 54);

  GateConfig all_hard{GateMode::Global, 1.0, {}};
  for (int i = 0; i < 30; ++i) {
    Sample s = fixtures::random_sample(hp, 700 + i);
    Prediction base = forward(w, hp, s, {});
    Prediction gated = forward(w, hp, s, {.policy = HopPolicy::Gated, .gate_cfg = &all_hard});
    CHECK(gated.route == Route::Hard);
    CHECK(gated.hops_executed == hp.hops);
    CHECK(gated.answer_id == base.answer_id);
  }
}

TEST_CASE("gated forward: forced-Easy gate saves (m-1) hop costs against baseline") {
  HyperParams hp;
  hp.d = 40;
  hp.vocab_size = 50;
  hp.n_s = 50;
  hp.n_w = 8;
  hp.hops = 3;
  hp.icn_hidden = 32;
  ModelWeights w = fixtures::random_weights(hp, 63);
  w.w_e = w.w;
  w.icn = IcnWeights{Mat(hp.icn_hidden, hp.d), Vec(hp.icn_hidden), Mat(2, hp.icn_hidden), Vec(2)};
  w.icn->b2[0] = 50.0;  // p_easy pinned to ~1

  GateConfig open{GateMode::Global, 0.01, {}};
  Sample s = fixtures::random_sample(hp, 800);
  Prediction base = forward(w, hp, s, {});
  Prediction gated = forward(w, hp, s, {.policy = HopPolicy::Gated, .gate_cfg = &open});
  CHECK(gated.route == Route::Easy);
  CHECK(gated.hops_executed == 1);

  CostParams p;
  p.d = hp.d;
  p.vocab_size = hp.vocab_size;
  p.n_s = hp.n_s;
  p.n_w = hp.n_w;
  p.hops = hp.hops;
  const std::uint64_t hop_term = (hp.hops - 1) * cc_hop(p);
  const std::uint64_t icn_measured = 2 * hp.icn_hidden * hp.d + 5 * hp.icn_hidden + 25;
  CHECK(base.ledger.total() - gated.ledger.total() == hop_term - icn_measured);
}

TEST_CASE("gate config JSON round-trip and validation") {
  GateConfig cfg{GateMode::PerTask, 0.6, {{2, 0.52}, {6, 0.95}, {18, 0.99}}};
  GateConfig back = GateConfig::from_json(cfg.to_json());
  CHECK(back.mode == GateMode::PerTask);
  CHECK(back.z_global == cfg.z_global);
  CHECK(back.z_per_task == cfg.z_per_task);
  CHECK(back.threshold_for(6) == 0.95);
  CHECK(back.threshold_for(7) == 0.6);  // unlisted task falls back

  GateConfig bad{GateMode::Global, 1.5, {}};
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  GateConfig zero{GateMode::Global, 0.0, {}};
  CHECK_THROWS_AS(zero.validate(), ParameterError);
}
