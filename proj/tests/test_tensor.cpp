#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hopgate/tensor.hpp"
#include "support/oracles.hpp"

using namespace hopgate;

TEST_CASE("dot: hand values and ledger charge") {
  FlopLedger led;
  CHECK(dot(Vec{1, 2}, Vec{3, 4}, led, FlopCategory::InnerProduct) == doctest::Approx(11.0));
  CHECK(led.count(FlopCategory::InnerProduct) == 3);

  Vec zeros(40);
  CHECK(dot(zeros, zeros, led, FlopCategory::InnerProduct) == 0.0);
  CHECK(led.count(FlopCategory::InnerProduct) == 3 + 79);

  CHECK_THROWS_AS(dot(Vec{1.0}, Vec{1.0, 2.0}, led, FlopCategory::Other), DimensionError);
}

TEST_CASE("dot matches an independent naive loop on random instances") {
  oracles::TestRng rng(42);
  FlopLedger led;
  for (int it = 0; it < 1000; ++it) {
    auto a = rng.vec(40), b = rng.vec(40);
    const double got = dot(Vec::from(a), Vec::from(b), led, FlopCategory::Other);
    CHECK(oracles::rel_err(got, oracles::naive_dot(a, b)) < 1e-12);
  }
}

TEST_CASE("matvec: identity, single-row reduction, random oracle") {
  FlopLedger led;
  Mat eye(3, 3);
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Vec v{1, 2, 3};
  Vec out = matvec(eye, v, led, FlopCategory::Fc);
  CHECK(out == v);
  CHECK(led.count(FlopCategory::Fc) == 15);

  oracles::TestRng rng(7);
  auto row = rng.vec(9);
  auto x = rng.vec(9);
  FlopLedger l2;
  Vec as_mat = matvec(Mat::from(1, 9, row), Vec::from(x), l2, FlopCategory::Other);
  const double as_dot = dot(Vec::from(row), Vec::from(x), l2, FlopCategory::Other);
  CHECK(as_mat.size() == 1);
  CHECK(as_mat[0] == as_dot);

  for (int it = 0; it < 200; ++it) {
    auto m = rng.vec(35);
    auto u = rng.vec(7);
    Vec got = matvec(Mat::from(5, 7, m), Vec::from(u), l2, FlopCategory::Other);
    auto want = oracles::naive_matvec(5, 7, m, u);
    for (std::size_t i = 0; i < 5; ++i) CHECK(oracles::rel_err(got[i], want[i]) < 1e-12);
  }
}

TEST_CASE("softmax: uniform case, closed form, nominal ledger charge") {
  FlopLedger led;
  Vec out = softmax(Vec{0, 0, 0, 0}, led);
  for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(led.count(FlopCategory::Softmax) == 51);  // 13*4 - 1

  FlopLedger l50;
  (void)softmax(Vec(50, 0.0), l50);
  CHECK(l50.count(FlopCategory::Softmax) == 649);  // 13*50 - 1

  Vec two = softmax(Vec{std::log(1.0), std::log(3.0)}, led);
  CHECK(two[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(two[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax properties: simplex output and shift invariance") {
  oracles::TestRng rng(3);
  FlopLedger led;
  for (int it = 0; it < 500; ++it) {
    const std::size_t n = 1 + rng.index(64);
    auto raw = rng.vec(n, -30.0, 30.0);
    Vec p = softmax(Vec::from(raw), led);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(p[i] >= 0.0);
      CHECK(p[i] <= 1.0);
      sum += p[i];
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);

    const double shift = rng.uniform(-100.0, 100.0);
    auto shifted = raw;
    for (double& x : shifted) x += shift;
    Vec q = softmax(Vec::from(shifted), led);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(p[i] - q[i]) < 1e-12);
  }
}

TEST_CASE("ledger counts depend on dims only") {
  oracles::TestRng rng(11);
  FlopLedger a, b;
  (void)dot(Vec::from(rng.vec(17)), Vec::from(rng.vec(17)), a, FlopCategory::InnerProduct);
  (void)dot(Vec::from(rng.vec(17)), Vec::from(rng.vec(17)), b, FlopCategory::InnerProduct);
  (void)softmax(Vec::from(rng.vec(9)), a);
  (void)softmax(Vec::from(rng.vec(9)), b);
  CHECK(a == b);
}

TEST_CASE("ledger totals, snapshots, diff, merge") {
  FlopLedger led;
  CHECK(led.total() == 0);

  (void)dot(Vec(40, 1.0), Vec(40, 2.0), led, FlopCategory::InnerProduct);
  CHECK(led.total() == 79);

  FlopLedger snap = led.snapshot();
  (void)softmax(Vec(50, 0.0), led);
  CHECK(led.total() == 728);  // 649 + 79
  CHECK(snap.total() == 79);  // snapshot is independent

  FlopLedger delta = FlopLedger::diff(led, snap);
  CHECK(delta.count(FlopCategory::Softmax) == 649);
  CHECK(delta.count(FlopCategory::InnerProduct) == 0);
  CHECK_THROWS_AS(FlopLedger::diff(snap, led), ParameterError);

  FlopLedger merged;
  merged.merge(led);
  merged.merge(snap);
  CHECK(merged.total() == 728 + 79);

  led.reset();
  CHECK(led.total() == 0);
}

TEST_CASE("weighted_row_sum: skipping, order preservation, charges") {
  Mat m = Mat::from(3, 2, {1, 2, 10, 20, 100, 200});
  Vec coeffs{0.5, 0.001, 0.499};
  FlopLedger led;

  SUBCASE("no threshold keeps every row") {
    std::size_t kept = 0;
    Vec o = weighted_row_sum(m, coeffs, std::nullopt, led, FlopCategory::WeightedSum, &kept);
    CHECK(kept == 3);
    CHECK(o[0] == doctest::Approx(0.5 + 0.01 + 49.9));
    CHECK(led.count(FlopCategory::WeightedSum) == (2 * 3 - 1) * 2);
  }
  SUBCASE("threshold drops rows and their cost") {
    std::size_t kept = 0;
    Vec o = weighted_row_sum(m, coeffs, 0.01, led, FlopCategory::WeightedSum, &kept);
    CHECK(kept == 2);
    CHECK(o[0] == doctest::Approx(0.5 + 49.9));
    CHECK(led.count(FlopCategory::WeightedSum) == (2 * 2 - 1) * 2);
  }
  SUBCASE("all rows skipped: zero vector, zero cost") {
    std::size_t kept = 0;
    Vec o = weighted_row_sum(m, coeffs, 2.0, led, FlopCategory::WeightedSum, &kept);
    CHECK(kept == 0);
    CHECK(o[0] == 0.0);
    CHECK(o[1] == 0.0);
    CHECK(led.count(FlopCategory::WeightedSum) == 0);
  }
  SUBCASE("threshold zero is bit-identical to disabled") {
    FlopLedger l1, l2;
    Vec a = weighted_row_sum(m, coeffs, std::nullopt, l1, FlopCategory::WeightedSum);
    Vec b = weighted_row_sum(m, coeffs, 0.0, l2, FlopCategory::WeightedSum);
    CHECK(a == b);
    CHECK(l1 == l2);
  }
}

TEST_CASE("argmax ties break toward the lowest index") {
  CHECK(argmax(Vec{1, 3, 3, 2}) == 1);
  CHECK(argmax(Vec{5}) == 0);
  CHECK(argmax(Vec{2, 2, 2}) == 0);
}

TEST_CASE("shape and finiteness guards") {
  CHECK_THROWS_AS(Vec(0), DimensionError);
  CHECK_THROWS_AS(Mat(0, 3), DimensionError);
  CHECK_THROWS_AS(Mat::from(2, 2, {1.0, 2.0}), DimensionError);
  CHECK(Vec{1.0, 2.0}.all_finite());
  Vec bad{1.0, 2.0};
  bad[1] = std::nan("");
  CHECK_FALSE(bad.all_finite());
}
