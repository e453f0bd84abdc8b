#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "dalign/error.hpp"
#include "dalign/gradcheck.hpp"
#include "dalign/scbs.hpp"
#include "generators.hpp"

using namespace dalign;

namespace {

// -log sigmoid(s) = log(1 + exp(-s)), evaluated directly.
double softplus_neg(double s) { return std::log1p(std::exp(-s)); }

double cosine_oracle(const Tensor& f, std::size_t i, std::size_t j) {
  double dot = 0.0, ni = 0.0, nj = 0.0;
  for (std::size_t k = 0; k < f.cols(); ++k) {
    dot += f.at(i, k) * f.at(j, k);
    ni += f.at(i, k) * f.at(i, k);
    nj += f.at(j, k) * f.at(j, k);
  }
  return dot / std::sqrt(ni * nj);
}

}  // namespace

TEST_CASE("cosine similarity examples") {
  CHECK(cosine_similarity(Tensor::vector({1, 0}), Tensor::vector({0, 1})) == 0.0);
  CHECK(cosine_similarity(Tensor::vector({1, 2}), Tensor::vector({2, 4})) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(Tensor::vector({1, 0}), Tensor::vector({-1, 0})) == -1.0);
  CHECK_THROWS_AS(cosine_similarity(Tensor::vector({0, 0}), Tensor::vector({1, 0})), DegenerateFeatureError);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const Tensor a = testgen::uniform_vector(rng, 4), b = testgen::uniform_vector(rng, 4);
    const double c = cosine_similarity(a, b);
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
  }
}

TEST_CASE("labeled pairs examples") {
  Rng rng(1);
  const PositivePairSet two = labeled_pairs({0, 0}, rng);
  CHECK(two.pairs == std::vector<PositivePair>{{0, 1}, {1, 0}});
  CHECK(two.origin == PairOrigin::Labeled);
  CHECK(labeled_pairs({0, 1}, rng).empty());

  Rng a(7), b(7);
  const PositivePairSet first = labeled_pairs({0, 0, 0}, a);
  CHECK(first.pairs == labeled_pairs({0, 0, 0}, b).pairs);
  CHECK(first.pairs == std::vector<PositivePair>{{0, 2}, {1, 0}, {2, 0}});
}

TEST_CASE("labeled pairs invariants on random labels") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::vector<int> labels = testgen::binary_labels(rng, testgen::size_in(rng, 1, 16));
    const PositivePairSet set = labeled_pairs(labels, rng);
    const auto count = [&](int c) { return std::count(labels.begin(), labels.end(), c); };
    std::set<std::size_t> anchors;
    for (const PositivePair& p : set.pairs) {
      CHECK(p.anchor != p.positive);
      CHECK(labels[p.anchor] == labels[p.positive]);
      CHECK(anchors.insert(p.anchor).second);
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      CHECK((anchors.count(i) == 1) == (count(labels[i]) >= 2));
    }
  }
}

TEST_CASE("pseudo pairs examples") {
  const PositivePairSet s = pseudo_pairs(Tensor::matrix({{1, 0}, {0.9, 0.1}, {-1, 0}}));
  CHECK(s.pairs[0] == PositivePair{0, 1});
  CHECK(s.origin == PairOrigin::Pseudo);
  CHECK(pseudo_pairs(Tensor::matrix({{1, 2}, {-3, 1}})).pairs ==
        std::vector<PositivePair>{{0, 1}, {1, 0}});
  const PositivePairSet dup = pseudo_pairs(Tensor::matrix({{1, 1}, {0, 1}, {1, 1}, {1, 1}}));
  CHECK(dup.pairs[0].positive == 2);
  CHECK(dup.pairs[2].positive == 0);
  CHECK(dup.pairs[3].positive == 0);
  CHECK_THROWS_AS(pseudo_pairs(Tensor::matrix({{1, 2}})), InsufficientBatchError);
  CHECK_THROWS_AS(pseudo_pairs(Tensor::matrix({{1, 2}, {0, 0}})), DegenerateFeatureError);
}

TEST_CASE("pseudo pairs match a brute force argmax") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const Tensor f = testgen::nonzero_rows(rng, testgen::size_in(rng, 2, 16), testgen::size_in(rng, 2, 8));
    const PositivePairSet set = pseudo_pairs(f);
    REQUIRE(set.size() == f.rows());
    for (std::size_t i = 0; i < f.rows(); ++i) {
      std::size_t best = i == 0 ? 1 : 0;
      for (std::size_t j = 0; j < f.rows(); ++j) {
        if (j != i && cosine_oracle(f, i, j) > cosine_oracle(f, i, best)) best = j;
      }
      CHECK(set.pairs[i] == PositivePair{i, best});
    }
  }
}

TEST_CASE("pseudo pairs are invariant to positive scaling") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    Tensor f = testgen::nonzero_rows(rng, testgen::size_in(rng, 2, 16), 4);
    const PositivePairSet before = pseudo_pairs(f);
    const double c = std::exp(rng.uniform(-5.0, 5.0));
    for (double& v : f.values()) v *= c;
    CHECK(pseudo_pairs(f).pairs == before.pairs);
  }
}

TEST_CASE("skip nearest takes the runner up") {
  const Tensor f = Tensor::matrix({{1, 0}, {0.9, 0.1}, {0.5, 0.5}, {-1, 0}});
  CHECK(pseudo_pairs(f, true).pairs[0] == PositivePair{0, 2});
  CHECK_THROWS_AS(pseudo_pairs(Tensor::matrix({{1, 0}, {0, 1}}), true), InsufficientBatchError);
}

TEST_CASE("pool pairs offsets the second set") {
  const PositivePairSet a{{{0, 1}, {1, 0}}, PairOrigin::Labeled};
  const PositivePairSet b{{{0, 2}, {2, 1}}, PairOrigin::Pseudo};
  const PositivePairSet p = pool_pairs(a, b, 5);
  CHECK(p.pairs == std::vector<PositivePair>{{0, 1}, {1, 0}, {5, 7}, {7, 6}});
  CHECK(p.origin == PairOrigin::Pooled);
}

TEST_CASE("scbs loss examples") {
  const Tensor orth = Tensor::matrix({{1, 0}, {0, 1}});
  CHECK(scbs_loss(orth, {{{0, 1}, {1, 0}}}) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(scbs_loss(Tensor::matrix({{1, 2}, {2, 4}}), {{{0, 1}}}) == doctest::Approx(0.313262).epsilon(1e-6));
  CHECK(scbs_loss(Tensor::matrix({{1, 2}, {2, 4}}), {{{0, 1}}}) == doctest::Approx(softplus_neg(1.0)).epsilon(1e-14));

  // Rows at 60 and 120 degrees from the anchor: cosines 0.5 and -0.5.
  const double r3 = std::sqrt(3.0) / 2.0;
  const Tensor f = Tensor::matrix({{1, 0}, {0.5, r3}, {-0.5, r3}});
  const double expected = 0.5 * (softplus_neg(0.5) + softplus_neg(-0.5));
  CHECK(scbs_loss(f, {{{0, 1}, {0, 2}}}) == doctest::Approx(expected).epsilon(1e-13));
  CHECK(scbs_loss(f, {{{0, 1}, {0, 2}}}) == doctest::Approx(0.724077).epsilon(1e-6));
  CHECK(scbs_loss(f, PositivePairSet{}) == 0.0);
}

TEST_CASE("scbs loss bounds and monotonicity") {
  const double lo = softplus_neg(1.0), hi = softplus_neg(-1.0);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const Tensor f = testgen::nonzero_rows(rng, testgen::size_in(rng, 2, 12), testgen::size_in(rng, 2, 6));
    const PositivePairSet pairs = pseudo_pairs(f);
    const double l = scbs_loss(f, pairs);
    CHECK(l >= lo - 1e-15);
    CHECK(l <= hi + 1e-15);
  }
  // Rotating the positive toward the anchor raises its cosine and lowers the loss.
  double prev = hi + 1.0;
  for (int step = 0; step <= 20; ++step) {
    const double angle = 3.14159265358979 * (1.0 - step / 20.0);
    const Tensor f = Tensor::matrix({{1, 0}, {std::cos(angle), std::sin(angle)}, {0, 1}, {1, 1}});
    const double l = scbs_loss(f, {{{0, 1}, {2, 3}}});
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("scbs graph loss agrees with the direct form and passes gradient checks") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Tensor f = testgen::nonzero_rows(rng, testgen::size_in(rng, 3, 12), testgen::size_in(rng, 2, 8));
    const PositivePairSet pairs = pseudo_pairs(f);
    Graph g;
    const NodeId x = g.parameter(f);
    const NodeId loss = scbs_loss(g, x, pairs);
    CHECK(forward(g, loss).item() == doctest::Approx(scbs_loss(f, pairs)).epsilon(1e-13));
    CHECK(finite_diff_check(g, loss, 1e-6).max_relative_error <= 1e-4);
  }
  Graph g;
  CHECK_THROWS_AS(scbs_loss(g, g.parameter(Tensor::matrix({{1, 0}, {0, 1}})), PositivePairSet{}),
                  InsufficientBatchError);
}
