#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dalign/ddo.hpp"
#include "dalign/error.hpp"
#include "generators.hpp"

using namespace dalign;

TEST_CASE("local centroid examples") {
  CHECK(local_centroid(Tensor::matrix({{1.5, -2}})) == Tensor::vector({1.5, -2}));
  CHECK(local_centroid(Tensor::matrix({{1, 2}, {3, 4}})) == Tensor::vector({2, 3}));
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}, {-5, 0.5}});
  const Tensor b = Tensor::matrix({{-5, 0.5}, {1, 2}, {3, 4}});
  const Tensor ca = local_centroid(a), cb = local_centroid(b);
  for (std::size_t j = 0; j < 2; ++j) CHECK(ca[j] == doctest::Approx(cb[j]).epsilon(1e-15));
  CHECK_THROWS_AS(local_centroid(Tensor(Shape{0, 3})), EmptyBatchError);
}

TEST_CASE("global centroid update examples") {
  CentroidTracker t(2, 0.9);
  CHECK(t.global() == Tensor::vector({0, 0}));
  CHECK_FALSE(t.initialized());
  t = update_global(t, Tensor::vector({10, 10}));
  CHECK(t.global()[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(t.global()[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(t.initialized());

  CentroidTracker none(3, 0.0);
  none.update(Tensor::vector({1, -2, 3}));
  CHECK(none.global() == Tensor::vector({1, -2, 3}));

  CHECK_THROWS_AS(t.update(Tensor::vector({1, 2, 3})), ShapeError);
  CHECK_THROWS_AS(CentroidTracker(2, 1.0), ConfigError);
}

TEST_CASE("global centroid matches the closed form") {
  for (double mu : {0.0, 0.3, 0.5, 0.9, 0.99}) {
    CentroidTracker t(3, mu);
    const Tensor c = Tensor::vector({2.0, -0.5, 7.25});
    double oracle_weight = 0.0;  // weight of c after k steps, by repeated blending
    for (std::size_t k = 1; k <= 20; ++k) {
      t.update(c);
      oracle_weight = mu * oracle_weight + (1.0 - mu);
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(std::abs(t.global()[j] - (1.0 - std::pow(mu, static_cast<double>(k))) * c[j]) <= 1e-10);
        CHECK(std::abs(t.global()[j] - oracle_weight * c[j]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("inter domain distance") {
  CHECK(inter_domain_distance(Tensor::vector({1, 2}), Tensor::vector({1, 2})) == 0.0);
  CHECK(inter_domain_distance(Tensor::vector({0, 0}), Tensor::vector({3, 4})) == 5.0);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::size_t d = testgen::size_in(rng, 1, 8);
    const Tensor a = testgen::uniform_vector(rng, d), b = testgen::uniform_vector(rng, d);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    CHECK(std::abs(inter_domain_distance(a, b) - std::sqrt(s)) <= 1e-12);
  }
  CHECK_THROWS_AS(inter_domain_distance(Tensor::vector({1}), Tensor::vector({1, 2})), ShapeError);
}

TEST_CASE("intra domain distance") {
  CHECK(intra_domain_distance(Tensor::matrix({{1, 2}, {1, 2}}), Tensor::vector({1, 2})) == 0.0);
  CHECK(intra_domain_distance(Tensor::matrix({{1, 0}, {-1, 0}}), Tensor::vector({0, 0})) == 1.0);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::size_t n = testgen::size_in(rng, 1, 10), d = testgen::size_in(rng, 1, 8);
    const Tensor f = testgen::uniform_matrix(rng, n, d);
    const Tensor c = testgen::uniform_vector(rng, d);
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += std::pow(f.at(r, j) - c[j], 2);
      total += std::sqrt(s);
    }
    CHECK(std::abs(intra_domain_distance(f, c) - total / static_cast<double>(n)) <= 1e-12);
  }
  CHECK_THROWS_AS(intra_domain_distance(Tensor(Shape{0, 2}), Tensor::vector({0, 0})), EmptyBatchError);
}

TEST_CASE("intra weight schedule") {
  CHECK(intra_weight(0, 100) == 1.0);
  CHECK(intra_weight(99, 100) == 0.01);
  CHECK(intra_weight(50, 100) == 0.5);
  for (std::size_t e = 1; e <= 300; ++e) {
    CHECK(intra_weight(0, e) == 1.0);
    CHECK(intra_weight(e - 1, e) == 1.0 / static_cast<double>(e));
  }
  CHECK_THROWS_AS(intra_weight(100, 100), ConfigError);
}

TEST_CASE("alignment loss examples") {
  CHECK(domain_alignment_loss(DomainDistances{2.0, 0.0, 0.0}, 1.0) == 3.0);
  CHECK(domain_alignment_loss(DomainDistances{2.0, 400.0, 400.0}, 0.7) == doctest::Approx(2.0).epsilon(1e-15));
  for (double inter : {0.0, 0.25, 3.5}) {
    CHECK(domain_alignment_loss(DomainDistances{inter, 0.3, 1.1}, 0.0) == inter);
  }
}

TEST_CASE("alignment loss monotonicity by finite differences") {
  const double h = 1e-6;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const DomainDistances d{rng.uniform(0, 3), rng.uniform(0, 2), rng.uniform(0, 2)};
    const double w = rng.uniform(0.01, 1.0);
    DomainDistances up = d, down = d;
    up.d_inter += h;
    down.d_inter -= h;
    const double d_inter = (domain_alignment_loss(up, w) - domain_alignment_loss(down, w)) / (2 * h);
    CHECK(d_inter == doctest::Approx(1.0).epsilon(1e-6));
    up = d;
    down = d;
    up.d_intra_source += h;
    down.d_intra_source -= h;
    const double d_intra = (domain_alignment_loss(up, w) - domain_alignment_loss(down, w)) / (2 * h);
    const double expected = -w * std::exp(-(d.d_intra_source + d.d_intra_target));
    CHECK(d_intra < 0.0);
    CHECK(d_intra == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("distances are translation invariant") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::size_t d = testgen::size_in(rng, 1, 8);
    Tensor fs = testgen::uniform_matrix(rng, testgen::size_in(rng, 1, 10), d);
    Tensor ft = testgen::uniform_matrix(rng, testgen::size_in(rng, 1, 10), d);
    const Tensor shift = testgen::uniform_vector(rng, d, -5.0, 5.0);
    auto distances = [](const Tensor& s, const Tensor& t) {
      const Tensor cs = local_centroid(s), ct = local_centroid(t);
      return DomainDistances{inter_domain_distance(cs, ct), intra_domain_distance(s, cs),
                             intra_domain_distance(t, ct)};
    };
    const DomainDistances before = distances(fs, ft);
    for (Tensor* f : {&fs, &ft}) {
      for (std::size_t r = 0; r < f->rows(); ++r) {
        for (std::size_t j = 0; j < d; ++j) f->at(r, j) += shift[j];
      }
    }
    const DomainDistances after = distances(fs, ft);
    CHECK(after.d_inter == doctest::Approx(before.d_inter).epsilon(1e-9));
    CHECK(after.d_intra_source == doctest::Approx(before.d_intra_source).epsilon(1e-9));
    CHECK(after.d_intra_target == doctest::Approx(before.d_intra_target).epsilon(1e-9));
  }
}

TEST_CASE("graph alignment loss routes gradients through the batch term only") {
  Rng rng(4);
  CentroidTracker ts(3, 0.9), tt(3, 0.9);
  ts.update(Tensor::vector({1, 0, 0}));
  tt.update(Tensor::vector({-1, 0.5, 0}));
  const Tensor xs = testgen::uniform_matrix(rng, 5, 3);
  Tensor xt = testgen::uniform_matrix(rng, 7, 3);
  for (double& v : xt.values()) v += 2.0;

  Graph g;
  const NodeId fs = g.parameter(xs), ft = g.parameter(xt);
  const AlignmentNodes n = domain_alignment_loss(g, fs, ft, ts, tt, 0.6);
  const Tensor cs = forward(g, n.centroid_source);
  const Tensor mean = local_centroid(xs);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(cs[j] == doctest::Approx(0.9 * ts.global()[j] + 0.1 * mean[j]).epsilon(1e-14));
  }
  // The trackers enter as constants: the features are the only leaves with gradients.
  CHECK(g.parameters().size() == 2);
  const Gradients grads = backward(g, n.loss);
  double norm = 0.0;
  for (double v : grads.at(fs).values()) norm += v * v;
  CHECK(norm > 0.0);

  const DomainDistances direct{forward(g, n.d_inter).item(), forward(g, n.d_intra_source).item(),
                               forward(g, n.d_intra_target).item()};
  CHECK(forward(g, n.loss).item() == doctest::Approx(domain_alignment_loss(direct, 0.6)).epsilon(1e-14));
}
