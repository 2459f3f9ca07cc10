#include <doctest.h>

#include <cmath>
#include <random>

#include "ecr/error.hpp"
#include "ecr/layers.hpp"
#include "ecr/losses.hpp"
#include "oracles.hpp"

using namespace ecr;

namespace {

Tensor<double> rows(std::size_t d, std::vector<double> v) {
  const std::size_t n = v.size() / d;
  return Tensor<double>({n, d}, std::move(v));
}

Tensor<double> unit_rows(std::size_t b, std::size_t d, std::mt19937_64& rng) {
  return l2_normalize(Tensor<double>({b, d}, oracle::gaussian(b * d, rng)));
}

std::vector<int> balanced_labels(std::size_t b, std::size_t classes, std::mt19937_64& rng) {
  std::vector<int> y(b);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(classes) - 1);
  for (auto& v : y) v = pick(rng);
  return y;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("cross entropy of uniform logits is ln C") {
  for (std::size_t c = 2; c <= 6; ++c) {
    Tensor<double> z({3, c});
    std::vector<int> y{0, 1, static_cast<int>(c - 1)};
    CHECK(std::abs(cross_entropy(z, y).value - std::log(static_cast<double>(c))) < 1e-12);
  }
  Tensor<float> z({1, 4});
  std::vector<int> y{2};
  CHECK(std::abs(cross_entropy(z, y).value - 1.386294f) < 1e-6f);
}

TEST_CASE("saturated correct logit") {
  Tensor<double> z({1, 3}, std::vector<double>{-30, 30, -30});
  std::vector<int> y{1};
  CHECK(cross_entropy(z, y).value < 1e-9);
}

TEST_CASE("hand-computed two-row case") {
  Tensor<double> z({2, 3}, std::vector<double>{1, 2, 3, 0, 0, 1});
  std::vector<int> y{2, 0};
  CHECK(std::abs(cross_entropy(z, y).value - 0.9795253391882155) < 1e-6);
}

TEST_CASE("cross entropy is shift invariant per row") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<double> z({4, 5}, oracle::gaussian(20, rng, 3.0));
    auto y = balanced_labels(4, 5, rng);
    Tensor<double> shifted = z;
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 5; ++c) shifted[r * 5 + c] += 100.0 * static_cast<double>(r) - 50.0;
    CHECK(std::abs(cross_entropy(z, y).value - cross_entropy(shifted, y).value) < 1e-6);
  }
}

TEST_CASE("cross entropy errors") {
  Tensor<double> z({2, 3});
  std::vector<int> bad{0, 3};
  CHECK_THROWS_AS(cross_entropy(z, bad), DataError);
  std::vector<int> neg{0, -1};
  CHECK_THROWS_AS(cross_entropy(z, neg), DataError);
  std::vector<int> one{0};
  CHECK_THROWS_AS(cross_entropy(Tensor<double>({1, 1}), one), ShapeError);
  CHECK_THROWS_AS(cross_entropy(z, one), ShapeError);
}

TEST_CASE("constructed triplet batches") {
  std::vector<int> y{0, 0, 1};
  auto dup = rows(2, {1, 0, 1, 0, 0, 1});
  CHECK(triplet_loss(dup, y, 0.1).value == doctest::Approx(0.0));
  CHECK(hard_triplet_loss(dup, y, 0.1).value == doctest::Approx(0.0));

  auto mixed = rows(2, {1, 0, 0, 1, 1, 0});
  auto hard = hard_triplet_loss(mixed, y, 0.1);
  // Anchor 0: farthest positive sqrt(2), nearest negative 0.
  // Anchor 1: farthest positive sqrt(2), nearest negative sqrt(2).
  const double a0 = std::sqrt(2.0) + 0.1, a1 = 0.1;
  CHECK(hard.value == doctest::Approx((a0 + a1) / 2).epsilon(1e-12));
  CHECK(hard.valid_anchors == 2);
  CHECK(std::sqrt(2.0) + 0.1 == doctest::Approx(1.51421).epsilon(1e-5));
}

TEST_CASE("inactive hinge contributes nothing") {
  auto e = rows(2, {1, 0, 0.99, 0.141067, -1, 0, -0.99, -0.141067});
  std::vector<int> y{0, 0, 1, 1};
  CHECK(triplet_loss(e, y, 0.1).value == 0.0);
  CHECK(hard_triplet_loss(e, y, 0.1).value == 0.0);
  auto inactive = hard_triplet_loss(e, y, 0.1);
  for (double g : inactive.grad.data()) CHECK(g == 0.0);
}

TEST_CASE("no valid anchor is flagged") {
  auto e = rows(2, {1, 0, 0, 1});
  std::vector<int> same{0, 0};
  auto r = hard_triplet_loss(e, same, 0.1);
  CHECK(r.degenerate);
  CHECK(r.value == 0.0);
  std::vector<int> distinct{0, 1};
  CHECK(triplet_loss(e, distinct, 0.1).degenerate);
}

TEST_CASE("triplet losses match brute force on random batches") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    auto e = unit_rows(16, 8, rng);
    auto y = balanced_labels(16, 4, rng);
    std::vector<double> flat(e.data().begin(), e.data().end());
    const double margin = 0.1;
    REQUIRE(std::abs(hard_triplet_loss(e, y, margin).value - oracle::hard_triplet(flat, 8, y, margin)) < 1e-6);
    REQUIRE(std::abs(triplet_loss(e, y, margin).value - oracle::mean_triplet(flat, 8, y, margin)) < 1e-6);
  }
  for (int trial = 0; trial < 100; ++trial) {
    auto e = unit_rows(8, 4, rng);
    auto y = balanced_labels(8, 3, rng);
    std::vector<double> flat(e.data().begin(), e.data().end());
    REQUIRE(std::abs(triplet_loss(e, y, 0.3).value - oracle::mean_triplet(flat, 4, y, 0.3)) < 1e-6);
  }
}

TEST_CASE("batch-hard is never below the mean variant, both nonnegative") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    auto e = unit_rows(12, 5, rng);
    auto y = balanced_labels(12, 3, rng);
    const double h = hard_triplet_loss(e, y, 0.1).value, m = triplet_loss(e, y, 0.1).value;
    CHECK(m >= 0.0);
    CHECK(h >= m - 1e-12);
  }
}

TEST_CASE("float and double agree") {
  std::mt19937_64 rng(13);
  auto e = unit_rows(16, 8, rng);
  auto y = balanced_labels(16, 4, rng);
  auto f = e.cast<float>();
  CHECK(std::abs(hard_triplet_loss(f, y, 0.1).value - hard_triplet_loss(e, y, 0.1).value) < 1e-5);
}

TEST_CASE("ties pick the lowest index") {
  // Anchor 0 is equally far from rows 1 and 2. Pushing row 1 a hair farther
  // makes it the unique farthest positive without changing the subgradient.
  std::vector<int> y{0, 0, 0, 1};
  auto tie = hard_triplet_loss(rows(2, {1, 0, 0, 1, 0, -1, 1, 0}), y, 0.1);
  auto row1 = hard_triplet_loss(rows(2, {1, 0, -1e-9, 1, 0, -1, 1, 0}), y, 0.1);
  auto row2 = hard_triplet_loss(rows(2, {1, 0, 0, 1, -1e-9, -1, 1, 0}), y, 0.1);
  double to_row1 = 0, to_row2 = 0;
  for (std::size_t i = 0; i < tie.grad.size(); ++i) {
    to_row1 = std::max(to_row1, std::abs(tie.grad[i] - row1.grad[i]));
    to_row2 = std::max(to_row2, std::abs(tie.grad[i] - row2.grad[i]));
  }
  CHECK(to_row1 < 1e-6);
  CHECK(to_row2 > 1e-3);
}

TEST_CASE("non-finite embeddings give a non-finite loss") {
  auto e = rows(2, {1, 0, 0, 1, 1, 0, 0, 1});
  e[2] = std::nan("");
  std::vector<int> y{0, 1, 0, 1};
  CHECK(std::isnan(hard_triplet_loss(e, y, 0.1).value));
  CHECK(std::isnan(triplet_loss(e, y, 0.1).value));
}

}  // TEST_SUITE
