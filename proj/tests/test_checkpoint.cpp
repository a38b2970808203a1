#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "hopgate/checkpoint.hpp"
#include "hopgate/pruner.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace hopgate;

namespace {

HyperParams demo_hyper() {
  HyperParams hp;
  hp.d = 6;
  hp.vocab_size = 9;
  hp.n_s = 4;
  hp.n_w = 3;
  hp.hops = 2;
  hp.icn_hidden = 5;
  return hp;
}

}  // namespace

TEST_CASE("checkpoint JSON round-trips every tensor bit-exactly") {
  HyperParams hp = demo_hyper();
  ModelWeights w = fixtures::random_weights(hp, 3);
  w.w_e = fixtures::random_weights(hp, 4).w;
  w.icn = fixtures::random_icn(hp.d, hp.icn_hidden, 5);
  // Exercise awkward reals.
  w.w.at(0, 0) = 0.1;
  w.w.at(0, 1) = -1e-17;
  w.w.at(0, 2) = 12345678.87654321;

  Checkpoint ckpt{hp, std::move(w), std::nullopt, std::nullopt};
  Checkpoint back = checkpoint_from_json(checkpoint_to_json(ckpt));

  CHECK(back.hyper.d == hp.d);
  CHECK(back.hyper.hops == hp.hops);
  CHECK(back.weights.w == ckpt.weights.w);
  CHECK(back.weights.w_e == ckpt.weights.w_e);
  REQUIRE(back.weights.embeds.size() == ckpt.weights.embeds.size());
  for (std::size_t i = 0; i < back.weights.embeds.size(); ++i) {
    CHECK(back.weights.embeds[i] == ckpt.weights.embeds[i]);
  }
  REQUIRE(back.weights.icn.has_value());
  CHECK(back.weights.icn->w1 == ckpt.weights.icn->w1);
  CHECK(back.weights.icn->b2 == ckpt.weights.icn->b2);
  CHECK(back.weights.pe == ckpt.weights.pe);
}

TEST_CASE("key-value checkpoints carry R matrices and a single embedding") {
  HyperParams hp = demo_hyper();
  hp.variant = Variant::KeyValue;
  ModelWeights w = fixtures::random_weights(hp, 7);
  REQUIRE(w.embeds.size() == 1);
  REQUIRE(w.r.size() == hp.hops);

  Checkpoint ckpt{hp, std::move(w), std::nullopt, std::nullopt};
  const std::string text = checkpoint_to_json(ckpt);
  CHECK(text.find("\"R1\"") != std::string::npos);
  CHECK(text.find("\"R2\"") != std::string::npos);

  Checkpoint back = checkpoint_from_json(text);
  CHECK(back.weights.r[0] == ckpt.weights.r[0]);
  CHECK(back.weights.r[1] == ckpt.weights.r[1]);
  CHECK_FALSE(back.weights.pe.has_value());
}

TEST_CASE("pruned heads ride along with one shared index list") {
  HyperParams hp = demo_hyper();
  ModelWeights w = fixtures::random_weights(hp, 11);
  w.w_e = fixtures::random_weights(hp, 12).w;

  const std::set<std::uint32_t> drop{0, 2, 5};
  Checkpoint ckpt{hp, std::move(w), std::nullopt, std::nullopt};
  ckpt.pruned_w = prune(ckpt.weights.w, drop, {});
  ckpt.pruned_w_e = prune(*ckpt.weights.w_e, drop, {});

  Checkpoint back = checkpoint_from_json(checkpoint_to_json(ckpt));
  REQUIRE(back.pruned_w.has_value());
  REQUIRE(back.pruned_w_e.has_value());
  CHECK(back.pruned_w->important_indices == ckpt.pruned_w->important_indices);
  CHECK(back.pruned_w->rows == ckpt.pruned_w->rows);
  CHECK(back.pruned_w_e->rows == ckpt.pruned_w_e->rows);
}

TEST_CASE("loader rejects broken documents") {
  HyperParams hp = demo_hyper();
  Checkpoint ckpt{hp, fixtures::random_weights(hp, 13), std::nullopt, std::nullopt};
  const std::string good = checkpoint_to_json(ckpt);

  SUBCASE("missing tensor") {
    auto broken = good;
    const auto pos = broken.find("\"E1\"");
    REQUIRE(pos != std::string::npos);
    broken.replace(pos, 4, "\"EX\"");
    CHECK_THROWS_AS(checkpoint_from_json(broken), ConfigError);
  }
  SUBCASE("unsupported version") {
    auto broken = good;
    const auto pos = broken.find("\"format_version\":1");
    REQUIRE(pos != std::string::npos);
    broken.replace(pos, 18, "\"format_version\":9");
    CHECK_THROWS_AS(checkpoint_from_json(broken), ConfigError);
  }
  SUBCASE("non-finite entries") {
    auto broken = good;
    // JSON cannot encode NaN; emulate a corrupted numeric field instead.
    const auto pos = broken.find("\"d\":6");
    REQUIRE(pos != std::string::npos);
    broken.replace(pos, 5, "\"d\":0");
    CHECK_THROWS_AS(checkpoint_from_json(broken), ParameterError);
  }
}

TEST_CASE("save/load cycle through the filesystem is atomic and faithful") {
  const auto dir = std::filesystem::temp_directory_path() / "hopgate_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.json";

  HyperParams hp = demo_hyper();
  Checkpoint ckpt{hp, fixtures::random_weights(hp, 17), std::nullopt, std::nullopt};
  save_checkpoint(path, ckpt);
  CHECK_FALSE(std::filesystem::exists(path.string() + ".tmp"));

  Checkpoint back = load_checkpoint(path);
  CHECK(back.weights.w == ckpt.weights.w);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), ConfigError);
}
