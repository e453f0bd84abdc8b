#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "dalign/data.hpp"
#include "dalign/error.hpp"
#include "dalign/textio.hpp"
#include "generators.hpp"

using namespace dalign;

namespace {

std::vector<double> class_mean(const Dataset& d, Domain domain, Label label) {
  std::vector<double> m(d.feature_dim, 0.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    if (d.records[i].domain != domain || d.ground_truth[i] != label) continue;
    for (std::size_t j = 0; j < d.feature_dim; ++j) m[j] += d.records[i].features[j];
    ++n;
  }
  for (double& v : m) v /= static_cast<double>(n);
  return m;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("dalign_test_" + name)).string();
}

}  // namespace

TEST_CASE("benchmark generation is deterministic and matches the recorded checksum") {
  const BenchmarkSpec spec;
  REQUIRE(spec.n_source == 200);
  REQUIRE(spec.n_target == 1800);
  REQUIRE(spec.feature_dim == 8);
  REQUIRE(spec.seed == 7);
  const Dataset a = generate_benchmark(spec), b = generate_benchmark(spec);
  CHECK(a == b);
  CHECK(serialize_dataset(a) == serialize_dataset(b));
  CHECK(fnv1a(serialize_dataset(a)) == 0xfb47b60d849601f3ULL);

  BenchmarkSpec other = spec;
  other.seed = 8;
  CHECK_FALSE(generate_benchmark(other) == a);
}

TEST_CASE("record invariants of a generated benchmark") {
  const Dataset d = generate_benchmark(BenchmarkSpec{});
  CHECK(d.count(Domain::Source) == 200);
  CHECK(d.count(Domain::Target) == 1800);
  std::set<std::string> source_methods, target_methods;
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const SampleRecord& r = d.records[i];
    CHECK(r.features.size() == 8);
    if (r.domain == Domain::Source) {
      CHECK(r.label == d.ground_truth[i]);
      CHECK(r.label != Label::Unknown);
    } else {
      CHECK(r.label == Label::Unknown);
    }
    CHECK((d.ground_truth[i] == Label::Fake) == !r.method_id.empty());
    if (!r.method_id.empty()) (r.domain == Domain::Source ? source_methods : target_methods).insert(r.method_id);
  }
  for (const std::string& m : source_methods) CHECK(target_methods.count(m) == 0);
}

TEST_CASE("zero shift leaves the real-class means of both domains equal") {
  BenchmarkSpec spec;
  spec.shift_vector.assign(spec.feature_dim, 0.0);
  spec.n_source = 4000;
  spec.n_target = 8000;
  const Dataset d = generate_benchmark(spec);
  const auto ms = class_mean(d, Domain::Source, Label::Real);
  const auto mt = class_mean(d, Domain::Target, Label::Real);
  // The mixture means are +-m with |m| about 1.5 * sqrt(8); sampling error of a
  // mean over ~2000 draws is well under 0.15 per coordinate.
  for (std::size_t j = 0; j < spec.feature_dim; ++j) CHECK(std::abs(ms[j] - mt[j]) < 0.15);

  const Dataset shifted = generate_benchmark(BenchmarkSpec{});
  const auto shift = BenchmarkSpec{}.effective_shift();
  double len = 0.0;
  for (double v : shift) len += v * v;
  CHECK(std::sqrt(len) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("generation succeeds iff the method sets are disjoint and n_source < n_target") {
  const std::vector<std::string> pool{"m0", "m1", "m2", "m3", "m4", "m5"};
  int accepted = 0, rejected = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    BenchmarkSpec spec;
    spec.seed = seed;
    spec.feature_dim = testgen::size_in(rng, 2, 6);
    spec.n_source = testgen::size_in(rng, 1, 60);
    spec.n_target = testgen::size_in(rng, 1, 60);
    spec.source_methods.clear();
    spec.target_methods.clear();
    for (const std::string& m : pool) {
      const auto r = rng.below(4);
      if (r == 1 || r == 3) spec.source_methods.push_back(m);
      if (r == 2 || (r == 3 && rng.below(3) == 0)) spec.target_methods.push_back(m);
    }
    if (spec.source_methods.empty()) spec.source_methods.push_back("s_only");
    if (spec.target_methods.empty()) spec.target_methods.push_back("t_only");

    bool disjoint = true;
    for (const std::string& m : spec.source_methods) {
      disjoint = disjoint && std::find(spec.target_methods.begin(), spec.target_methods.end(), m) ==
                                 spec.target_methods.end();
    }
    const bool valid = disjoint && spec.n_source < spec.n_target;
    if (valid) {
      const Dataset d = generate_benchmark(spec);
      CHECK(d.count(Domain::Source) == spec.n_source);
      ++accepted;
    } else if (spec.n_source >= spec.n_target) {
      CHECK_THROWS_AS(generate_benchmark(spec), ConfigError);
      ++rejected;
    } else {
      CHECK_THROWS_AS(generate_benchmark(spec), DisjointnessError);
      ++rejected;
    }
  }
  CHECK(accepted > 10);
  CHECK(rejected > 10);
}

TEST_CASE("batch split examples and conservation") {
  CHECK(batch_split(100, 900, 50) == BatchPlan{5, 45, 50});
  CHECK(batch_split(200, 1800, 50) == BatchPlan{5, 45, 50});
  CHECK(batch_split(300, 300, 50) == BatchPlan{25, 25, 50});
  CHECK(batch_split(1, 10000, 50) == BatchPlan{1, 49, 50});
  CHECK_THROWS_AS(batch_split(10, 10, 1), ConfigError);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const std::size_t n = testgen::size_in(rng, 1, 100000), m = testgen::size_in(rng, 1, 100000);
    const std::size_t total = testgen::size_in(rng, 2, 500);
    const BatchPlan p = batch_split(n, m, total);
    CHECK(p.b_source + p.b_target == total);
    CHECK(p.b_source >= 1);
    CHECK(p.b_target >= 1);
    const double ideal = static_cast<double>(total) * static_cast<double>(n) / static_cast<double>(n + m);
    if (ideal >= 1.0 && ideal <= static_cast<double>(total - 1)) {
      CHECK(std::abs(static_cast<double>(p.b_source) - ideal) <= 0.5);
    }
  }
}

TEST_CASE("joint batches") {
  const Dataset d = generate_benchmark(BenchmarkSpec{});
  const LabeledSet s = source_view(d);
  const UnlabeledSet t = target_view(d);
  Rng rng(7);
  JointBatchSampler sampler(s.ids.size(), t.ids.size(), batch_split(200, 1800, 50), rng);
  CHECK(sampler.batches_per_epoch() == 40);

  auto first = sample_joint_batch(s, t, sampler);
  REQUIRE(first);
  CHECK(first->first.ids == std::vector<std::string>{"s00094", "s00127", "s00175", "s00013", "s00064"});
  CHECK(std::vector<std::string>(first->second.ids.begin(), first->second.ids.begin() + 6) ==
        std::vector<std::string>{"t01092", "t00886", "t01352", "t00437", "t00639", "t01402"});

  std::set<std::string> seen(first->first.ids.begin(), first->first.ids.end());
  seen.insert(first->second.ids.begin(), first->second.ids.end());
  std::size_t batches = 1;
  while (auto b = sample_joint_batch(s, t, sampler)) {
    CHECK(b->first.ids.size() == 5);
    CHECK(b->second.ids.size() == 45);
    CHECK(b->first.labels.size() == 5);
    for (const auto* ids : {&b->first.ids, &b->second.ids}) {
      for (const std::string& id : *ids) CHECK(seen.insert(id).second);
    }
    ++batches;
  }
  CHECK(batches == 40);
  sampler.start_epoch();
  CHECK(sample_joint_batch(s, t, sampler));
}

TEST_CASE("target view carries no labels and evaluation view does") {
  const Dataset d = generate_benchmark(BenchmarkSpec{});
  const UnlabeledSet t = target_view(d);
  CHECK(t.ids.size() == 1800);
  const LabeledSet e = evaluation_view(d, Domain::Target);
  CHECK(e.labels.size() == 1800);
  CHECK(std::count(e.labels.begin(), e.labels.end(), 1) > 0);
}

TEST_CASE("dataset CSV round trip") {
  BenchmarkSpec spec;
  spec.n_source = 20;
  spec.n_target = 40;
  const Dataset d = generate_benchmark(spec);
  const std::string path = temp_path("roundtrip.csv");
  write_dataset(d, path);
  const Dataset back = load_dataset(path);
  CHECK(back == d);
  CHECK(serialize_dataset(back) == serialize_dataset(d));
  // Target ground truth is in the file, so loading reports it.
  CHECK_FALSE(back.warnings.empty());
  std::filesystem::remove(path);
}

TEST_CASE("dataset loader rejects malformed files") {
  const std::string header = "id,domain,label,method_id,f0,f1,f2,f3\n";
  try {
    parse_dataset(header + "a,source,real,,1,2,3,4\nb,source,real,,1,2,3\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse_dataset(header + "a,source,real,,1,2,3,4\na,target,,,1,2,3,4\n"), DuplicateIdError);
  CHECK_THROWS_AS(parse_dataset(header + "a,source,,,1,2,3,4\n"), ParseError);
  CHECK_THROWS_AS(parse_dataset(header + "a,source,fake,,1,2,3,4\n"), ParseError);
  CHECK_THROWS_AS(parse_dataset(header + "a,source,real,,1,2,x,4\n"), ParseError);
  CHECK_THROWS_AS(parse_dataset("id,label\n"), ParseError);
  CHECK_THROWS_AS(load_dataset("/nonexistent/bench.csv"), IoError);

  const Dataset unlabeled = parse_dataset(header + "a,source,real,,1,2,3,4\nb,target,,,1,2,3,4\n");
  CHECK(unlabeled.warnings.empty());
  CHECK(unlabeled.records[1].label == Label::Unknown);
}

TEST_CASE("target subsampling") {
  const Dataset d = generate_benchmark(BenchmarkSpec{});
  CHECK(subsample_target(d, 1.0, 3) == d);
  const Dataset part = subsample_target(d, 0.3, 3);
  CHECK(part.count(Domain::Source) == 200);
  CHECK(part.count(Domain::Target) == 540);
  CHECK(subsample_target(d, 0.3, 3) == part);
  CHECK_THROWS_AS(subsample_target(d, 0.0, 3), ConfigError);
  CHECK_THROWS_AS(subsample_target(d, 0.0005, 3), ConfigError);
}
