#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hopgate/trainer.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace hopgate;

namespace {

HyperParams tiny_conventional() {
  HyperParams hp;
  hp.d = 4;
  hp.vocab_size = 6;
  hp.n_s = 3;
  hp.n_w = 2;
  hp.hops = 3;
  hp.icn_hidden = 3;
  return hp;
}

// Single-word copy task: the answer is the word sitting in sentence 1.
std::vector<Sample> copy_task(const HyperParams& hp, std::size_t n) {
  std::vector<Sample> out;
  oracles::TestRng rng(99);
  const std::uint32_t query_word = static_cast<std::uint32_t>(hp.vocab_size - 1);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s{IndexGrid(hp.n_s, hp.n_w), std::vector<std::uint32_t>(hp.n_w, 0), 0, 1, {}};
    s.query_ids[0] = query_word;
    s.answer_id = 1 + static_cast<std::uint32_t>(rng.index(hp.vocab_size - 2));
    s.story_grid.at(0, 0) = s.answer_id;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("analytic gradients match central finite differences (conventional)") {
  HyperParams hp = tiny_conventional();
  ModelWeights w = fixtures::random_weights(hp, 5);
  Sample s = fixtures::random_sample(hp, 6);

  ModelGrads grads = ModelGrads::zeros_like(w);
  (void)model_loss_and_grads(w, hp, s, &grads);
  auto loss = [&]() { return model_loss_and_grads(w, hp, s, nullptr); };

  for (std::size_t i = 0; i < w.embeds.size(); ++i) {
    auto res = gradcheck::fd_check(w.embeds[i].span(), grads.embeds[i].span(), loss);
    CAPTURE(i);
    CHECK(res.max_rel_err <= 1e-4);
  }
  auto res_w = gradcheck::fd_check(w.w.span(), grads.w.span(), loss);
  CHECK(res_w.max_rel_err <= 1e-4);
}

TEST_CASE("analytic gradients match central finite differences (hop-specific tying)") {
  HyperParams hp = tiny_conventional();
  hp.tying = Tying::HopSpecific;
  hp.hops = 2;
  ModelWeights w = fixtures::random_weights(hp, 15);
  REQUIRE(w.embeds.size() == 5);  // B, A1, C1, A2, C2
  Sample s = fixtures::random_sample(hp, 16);

  ModelGrads grads = ModelGrads::zeros_like(w);
  (void)model_loss_and_grads(w, hp, s, &grads);
  auto loss = [&]() { return model_loss_and_grads(w, hp, s, nullptr); };
  for (std::size_t i = 0; i < w.embeds.size(); ++i) {
    auto res = gradcheck::fd_check(w.embeds[i].span(), grads.embeds[i].span(), loss);
    CAPTURE(i);
    CHECK(res.max_rel_err <= 1e-4);
  }
}

TEST_CASE("analytic gradients match central finite differences (key-value)") {
  HyperParams hp = tiny_conventional();
  hp.variant = Variant::KeyValue;
  hp.hops = 2;
  ModelWeights w = fixtures::random_weights(hp, 25);
  Sample s = fixtures::random_sample(hp, 26);

  ModelGrads grads = ModelGrads::zeros_like(w);
  (void)model_loss_and_grads(w, hp, s, &grads);
  auto loss = [&]() { return model_loss_and_grads(w, hp, s, nullptr); };

  auto res_e = gradcheck::fd_check(w.embeds[0].span(), grads.embeds[0].span(), loss);
  CHECK(res_e.max_rel_err <= 1e-4);
  for (std::size_t i = 0; i < w.r.size(); ++i) {
    auto res = gradcheck::fd_check(w.r[i].span(), grads.r[i].span(), loss);
    CAPTURE(i);
    CHECK(res.max_rel_err <= 1e-4);
  }
  auto res_w = gradcheck::fd_check(w.w.span(), grads.w.span(), loss);
  CHECK(res_w.max_rel_err <= 1e-4);
}

TEST_CASE("early-head gradient matches finite differences") {
  oracles::TestRng rng(35);
  Mat head = Mat::from(6, 4, rng.vec(24));
  Vec u = Vec::from(rng.vec(4));
  Mat grad(6, 4);
  (void)head_loss_and_grad(head, u, 2, &grad);
  auto loss = [&]() { return head_loss_and_grad(head, u, 2, nullptr); };
  auto res = gradcheck::fd_check(head.span(), grad.span(), loss);
  CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("gate gradients match finite differences, weighted and unweighted") {
  oracles::TestRng rng(45);
  IcnWeights icn = fixtures::random_icn(4, 3, 46);
  Vec u2 = Vec::from(rng.vec(4));

  for (const LossSpec spec : {LossSpec{LossKind::CrossEntropy, {1.0, 1.0}},
                              LossSpec{LossKind::WeightedCrossEntropy, {0.4, 1.6}}}) {
    for (Route label : {Route::Easy, Route::Hard}) {
      IcnGrads grads = IcnGrads::zeros_like(icn);
      (void)icn_loss_and_grads(icn, u2, label, spec, &grads);
      auto loss = [&]() { return icn_loss_and_grads(icn, u2, label, spec, nullptr); };
      CHECK(gradcheck::fd_check(icn.w1.span(), grads.w1.span(), loss).max_rel_err <= 1e-4);
      CHECK(gradcheck::fd_check(icn.b1.span(), grads.b1.span(), loss).max_rel_err <= 1e-4);
      CHECK(gradcheck::fd_check(icn.w2.span(), grads.w2.span(), loss).max_rel_err <= 1e-4);
      CHECK(gradcheck::fd_check(icn.b2.span(), grads.b2.span(), loss).max_rel_err <= 1e-4);
    }
  }
}

TEST_CASE("weighted cross-entropy with unit weights reduces to plain cross-entropy") {
  oracles::TestRng rng(55);
  IcnWeights icn = fixtures::random_icn(5, 4, 56);
  for (int it = 0; it < 50; ++it) {
    Vec u2 = Vec::from(rng.vec(5));
    const Route label = rng.index(2) == 0 ? Route::Easy : Route::Hard;
    const double plain =
        icn_loss_and_grads(icn, u2, label, {LossKind::CrossEntropy, {1, 1}}, nullptr);
    const double unit =
        icn_loss_and_grads(icn, u2, label, {LossKind::WeightedCrossEntropy, {1, 1}}, nullptr);
    CHECK(plain == unit);

    const double doubled =
        icn_loss_and_grads(icn, u2, label, {LossKind::WeightedCrossEntropy, {2, 2}}, nullptr);
    CHECK(doubled == doctest::Approx(2.0 * plain));
  }
}

TEST_CASE("zero learning rate leaves the initial weights bit-identical") {
  HyperParams hp = tiny_conventional();
  auto data = copy_task(hp, 8);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 77;
  ModelWeights trained = train_baseline(data, hp, cfg);
  ModelWeights init = init_weights(hp, cfg.seed);
  CHECK(trained.w == init.w);
  for (std::size_t i = 0; i < trained.embeds.size(); ++i) {
    CHECK(trained.embeds[i] == init.embeds[i]);
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  HyperParams hp = tiny_conventional();
  auto data = copy_task(hp, 12);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 4;
  cfg.seed = 123;
  ModelWeights a = train_baseline(data, hp, cfg);
  ModelWeights b = train_baseline(data, hp, cfg);
  CHECK(a.w == b.w);
  for (std::size_t i = 0; i < a.embeds.size(); ++i) CHECK(a.embeds[i] == b.embeds[i]);

  cfg.seed = 124;
  ModelWeights c = train_baseline(data, hp, cfg);
  CHECK(a.w != c.w);
}

TEST_CASE("padding rows stay zero through training") {
  HyperParams hp = tiny_conventional();
  auto data = copy_task(hp, 12);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 4;
  ModelWeights w = train_baseline(data, hp, cfg);
  for (const auto& e : w.embeds) {
    for (double x : e.row(0)) CHECK(x == 0.0);
  }
}

TEST_CASE("copy task trains to full accuracy with decreasing loss") {
  HyperParams hp;
  hp.d = 8;
  hp.vocab_size = 12;
  hp.n_s = 1;
  hp.n_w = 1;
  hp.hops = 3;
  auto data = copy_task(hp, 20);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 4;
  cfg.seed = 7;
  TrainLog log;
  ModelWeights w = train_baseline(data, hp, cfg, &log);
  REQUIRE(log.size() == 200);
  CHECK(log.front().loss > log.back().loss);
  CHECK(log.back().accuracy == 1.0);

  // The retrained early head keeps the toy within five points of full depth.
  TrainConfig fce_cfg = cfg;
  fce_cfg.epochs = 100;
  Mat w_e = train_fc_e(w, hp, data, fce_cfg);
  ModelWeights with_head = w;
  with_head.w_e = w_e;
  std::size_t full_ok = 0, early_ok = 0;
  for (const auto& s : data) {
    full_ok += forward(w, hp, s, {}).answer_id == s.answer_id;
    early_ok +=
        forward(with_head, hp, s, {.policy = HopPolicy::OneHop}).answer_id == s.answer_id;
  }
  CHECK(static_cast<double>(early_ok) >= static_cast<double>(full_ok) - 1.0);
}

TEST_CASE("train_fc_e: zero epochs copies W; embeddings never move") {
  HyperParams hp = tiny_conventional();
  ModelWeights w = fixtures::random_weights(hp, 85);
  auto data = copy_task(hp, 8);

  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK(train_fc_e(w, hp, data, cfg) == w.w);

  cfg.epochs = 10;
  const std::vector<Mat> before = w.embeds;
  (void)train_fc_e(w, hp, data, cfg);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(w.embeds[i] == before[i]);
}

TEST_CASE("inverse frequency weights: mean one, degenerate single class") {
  std::vector<IcnLabel> labels{{0, 1, Route::Easy},
                               {1, 1, Route::Easy},
                               {2, 1, Route::Easy},
                               {3, 1, Route::Hard}};
  auto w = inverse_frequency_weights(labels);
  CHECK((w[0] + w[1]) / 2.0 == doctest::Approx(1.0));
  CHECK(w[1] > w[0]);
  CHECK(w[0] == doctest::Approx(0.5));
  CHECK(w[1] == doctest::Approx(1.5));

  std::vector<IcnLabel> mono{{0, 1, Route::Easy}, {1, 1, Route::Easy}};
  auto ones = inverse_frequency_weights(mono);
  CHECK(ones[0] == 1.0);
  CHECK(ones[1] == 1.0);
}

TEST_CASE("gate training separates linearly separable clusters") {
  oracles::TestRng rng(65);
  const std::size_t d = 8;
  std::vector<Vec> features;
  std::vector<IcnLabel> labels;
  for (std::size_t i = 0; i < 200; ++i) {
    const bool easy = i % 2 == 0;
    Vec u = Vec::from(rng.vec(d, -0.2, 0.2));
    u[0] += easy ? 1.0 : -1.0;
    features.push_back(u);
    labels.push_back({i, 1, easy ? Route::Easy : Route::Hard});
  }
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.batch_size = 16;
  cfg.seed = 3;
  TrainLog log;
  IcnWeights icn =
      train_icn(features, labels, d, 8, cfg, {LossKind::WeightedCrossEntropy, {1, 1}}, &log);
  CHECK(log.back().accuracy >= 0.99);

  FlopLedger led;
  RouteProbs p = icn_forward(features[0], icn, led);
  CHECK(p.easy > p.hard);
}

TEST_CASE("calibration: zero-loss gate needs no per-task thresholds") {
  HyperParams hp = tiny_conventional();
  ModelWeights w = fixtures::random_weights(hp, 95);
  w.w_e = w.w;  // heads agree, so any routing is loss-free
  w.icn = fixtures::random_icn(hp.d, hp.icn_hidden, 96);
  std::vector<Sample> val;
  for (int i = 0; i < 30; ++i) val.push_back(fixtures::random_sample(hp, 1000 + i));

  CalibrationResult per_task = calibrate_thresholds(w, hp, val, GateMode::PerTask, 0.01);
  CHECK(per_task.config.mode == GateMode::PerTask);
  CHECK(per_task.config.z_global == 0.5);
  CHECK(per_task.config.z_per_task.empty());
  CHECK(per_task.all_hard_tasks.empty());

  CalibrationResult global = calibrate_thresholds(w, hp, val, GateMode::Global, 0.01);
  CHECK(global.config.z_global == 0.5);
}

TEST_CASE("calibration: impossible budget flags the task all-Hard") {
  HyperParams hp = tiny_conventional();
  ModelWeights w = fixtures::random_weights(hp, 105);
  // Early head always disagrees with the full head; gate always says Easy.
  w.w_e = w.w;
  for (double& x : w.w_e->span()) x = -x;
  w.icn = IcnWeights{Mat(hp.icn_hidden, hp.d), Vec(hp.icn_hidden), Mat(2, hp.icn_hidden), Vec(2)};
  w.icn->b2[0] = 50.0;

  std::vector<Sample> val;
  for (int i = 0; i < 40; ++i) val.push_back(fixtures::random_sample(hp, 2000 + i));
  // Budget of exactly zero with a non-zero false-positive rate.
  CalibrationResult res = calibrate_thresholds(w, hp, val, GateMode::PerTask, 0.0);
  bool found_flag = false;
  for (unsigned t : res.all_hard_tasks) found_flag |= t == 1;
  if (found_flag) {
    CHECK(res.config.z_per_task.at(1) == 1.0);
  } else {
    // Baseline must already beat the early head nowhere; then 0.5 sufficed.
    CHECK(res.config.z_per_task.empty());
  }
}

TEST_CASE("training log serializes as JSON lines") {
  TrainLog log{{0, "train", 1.5, 0.25}, {1, "train", 1.0, 0.5}};
  const std::string jsonl = train_log_jsonl(log);
  CHECK(jsonl.find("{\"epoch\":0,\"split\":\"train\",\"loss\":1.5,\"accuracy\":0.25}\n") !=
        std::string::npos);
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 2);
}

TEST_CASE("divergence aborts with a diagnostic") {
  HyperParams hp = tiny_conventional();
  auto data = copy_task(hp, 8);
  TrainConfig cfg;
  cfg.learning_rate = 1e305;  // drives the loss non-finite
  cfg.epochs = 3;
  cfg.grad_clip_norm = std::nullopt;
  CHECK_THROWS_AS(train_baseline(data, hp, cfg), ParameterError);
}
