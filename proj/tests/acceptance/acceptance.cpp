// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failures, so ctest reports any red line.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dalign/ddo.hpp"
#include "dalign/error.hpp"
#include "dalign/harness.hpp"
#include "dalign/selftest.hpp"
#include "dalign/textio.hpp"

using namespace dalign;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& check, double budget_s = 0.0) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  if (budget_s > 0.0 && secs >= budget_s) {
    o.pass = false;
    o.detail += " [over the " + std::to_string(static_cast<int>(budget_s)) + " s budget]";
  }
  if (!o.pass) ++failures;
  std::printf("%s  %2d %-26s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c, d);
  return buf;
}

Outcome gradient_fidelity() {
  double worst = 0.0;
  bool kink = false;
  std::size_t entries = 0;
  for (LossTerm term : kAllLossTerms) {
    for (std::uint64_t i = 0; i < 20; ++i) {
      const GradCheckResult r = check_loss_gradient(term, 5000 + i, 1e-6);
      worst = std::max(worst, r.max_relative_error);
      kink = kink || r.excluded_point;
      entries += r.entries_checked;
    }
  }
  return {worst <= 1e-4 && !kink,
          fmt("5 terms x 20 instances, %.0f entries, max rel error %.2e <= 1e-4", static_cast<double>(entries), worst)};
}

Outcome centroid_closed_form() {
  double worst = 0.0;
  for (double mu : {0.0, 0.5, 0.9}) {
    CentroidTracker t(4, mu);
    const Tensor c = Tensor::vector({0.75, -3.0, 12.5, 1e-3});
    for (std::size_t k = 1; k <= 20; ++k) {
      t.update(c);
      if (k != 1 && k != 5 && k != 20) continue;
      for (std::size_t j = 0; j < c.size(); ++j) {
        worst = std::max(worst, std::abs(t.global()[j] - (1.0 - std::pow(mu, static_cast<double>(k))) * c[j]));
      }
    }
  }
  return {worst <= 1e-10, fmt("max error %.2e <= 1e-10", worst)};
}

Outcome schedule_endpoints() {
  std::size_t bad = 0;
  for (std::size_t e = 1; e <= 1000; ++e) {
    if (intra_weight(0, e) != 1.0) ++bad;
    if (intra_weight(e - 1, e) != 1.0 / static_cast<double>(e)) ++bad;
  }
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const DomainDistances d{rng.uniform(0, 10), rng.uniform(0, 5), rng.uniform(0, 5)};
    if (domain_alignment_loss(d, 0.0) != d.d_inter) ++bad;
  }
  return {bad == 0, fmt("E in 1..1000 and 1000 random distances, %.0f mismatches", static_cast<double>(bad))};
}

Outcome auc_oracle() {
  Rng rng(31);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(99);
    const std::uint64_t levels = 1 + rng.below(12);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng.below(levels)) / static_cast<double>(levels);
      labels[i] = static_cast<int>(rng.below(2));
    }
    labels[rng.below(n)] = 1;
    std::size_t neg = rng.below(n);
    while (labels[neg] == 1 && std::count(labels.begin(), labels.end(), 1) == static_cast<long>(n)) {
      labels[neg] = 0;
    }
    if (std::count(labels.begin(), labels.end(), 0) == 0) labels[neg] = 0;
    if (std::count(labels.begin(), labels.end(), 1) == 0) labels[(neg + 1) % n] = 1;

    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (labels[i] != 1 || labels[j] != 0) continue;
        pairs += 1.0;
        wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
      }
    }
    if (auc_score(scores, labels) != wins / pairs) ++mismatches;
  }
  return {mismatches == 0, fmt("100 instances with ties, %.0f inexact", static_cast<double>(mismatches))};
}

Outcome disjointness_enforcement() {
  std::size_t wrong = 0, accepted = 0, rejected = 0;
  const std::vector<std::string> pool{"a", "b", "c", "d", "e"};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed + 100);
    BenchmarkSpec spec;
    spec.seed = seed;
    spec.feature_dim = 2 + rng.below(6);
    spec.n_source = 1 + rng.below(50);
    spec.n_target = 1 + rng.below(50);
    spec.source_methods.clear();
    spec.target_methods.clear();
    for (const std::string& m : pool) {
      const auto r = rng.below(5);
      if (r == 1 || r == 3) spec.source_methods.push_back(m);
      if (r == 2 || (r == 3 && rng.below(2) == 0)) spec.target_methods.push_back(m);
    }
    if (spec.source_methods.empty()) spec.source_methods.push_back("src");
    if (spec.target_methods.empty()) spec.target_methods.push_back("tgt");
    bool disjoint = true;
    for (const std::string& m : spec.source_methods) {
      if (std::find(spec.target_methods.begin(), spec.target_methods.end(), m) != spec.target_methods.end()) {
        disjoint = false;
      }
    }
    const bool ordered = spec.n_source < spec.n_target;
    try {
      generate_benchmark(spec);
      ++accepted;
      if (!(disjoint && ordered)) ++wrong;
    } catch (const DisjointnessError&) {
      ++rejected;
      if (disjoint || !ordered) ++wrong;
    } catch (const ConfigError&) {
      ++rejected;
      if (ordered) ++wrong;
    }
  }
  return {wrong == 0 && accepted > 0 && rejected > 0,
          fmt("%.0f accepted, %.0f rejected, %.0f wrong outcomes", static_cast<double>(accepted),
              static_cast<double>(rejected), static_cast<double>(wrong))};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DALIGN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

int main() {
  std::printf("Acceptance criteria on the default benchmark (seed 7)\n");
  report(1, "gradient fidelity", gradient_fidelity, 30.0);
  report(2, "centroid closed form", centroid_closed_form);
  report(3, "schedule endpoints", schedule_endpoints);
  report(4, "auc oracle equivalence", auc_oracle);
  report(5, "method disjointness", disjointness_enforcement);

  const ExperimentConfig cfg;
  const Dataset data = generate_benchmark(cfg.benchmark);
  Model pretrained(ModelSpec{});
  double pretrain_s = 0.0;
  TrainResult full{Model(ModelSpec{}), {}, {}};

  report(6, "alignment dynamics", [&]() -> Outcome {
    const auto start = Clock::now();
    pretrained = pretrain(cfg, data).model;
    pretrain_s = std::chrono::duration<double>(Clock::now() - start).count();
    full = adapt(cfg, pretrained, data);
    const double first = full.metrics.front().d_inter, last = full.metrics.back().d_inter;
    return {last < 0.5 * first, fmt("d_inter epoch 0 %.4f -> final %.4f, ratio %.3f < 0.5", first, last, last / first)};
  }, 120.0);

  TrainResult baseline{Model(ModelSpec{}), {}, {}};
  report(7, "generalization gain", [&]() -> Outcome {
    ExperimentConfig ce_only = cfg;
    ce_only.etas = LossWeights{0.0, 0.0, 0.0, 0.0};
    baseline = adapt(ce_only, pretrained, data);
    const EvalResult bt = evaluate(baseline.model, data, Domain::Target);
    const EvalResult bs = evaluate(baseline.model, data, Domain::Source);
    const EvalResult ft = evaluate(full.model, data, Domain::Target);
    const EvalResult fs = evaluate(full.model, data, Domain::Source);
    const EvalResult ps = evaluate(pretrained, data, Domain::Source);
    const double gain = 100.0 * (ft.acc - bt.acc);
    const double drop = 100.0 * (std::max(bs.acc, ps.acc) - fs.acc);
    return {gain >= 10.0 && drop <= 2.0,
            fmt("target acc %.2f vs CE-only %.2f (+%.2f >= 10 points); source drop %.2f <= 2 points",
                100.0 * ft.acc, 100.0 * bt.acc, gain, drop)};
  }, 240.0 - pretrain_s);

  report(8, "ablation ordering", [&]() -> Outcome {
    const auto rows = run_ablation(cfg, pretrained, data);
    std::printf("%s", ablation_table(rows).c_str());
    bool ok = true;
    std::string detail = "full " + fmt("%.2f", 100.0 * rows[0].target.acc);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      ok = ok && rows[0].target.acc >= rows[i].target.acc;
      detail += ", " + rows[i].variant + fmt(" %.2f", 100.0 * rows[i].target.acc);
    }
    return {ok, detail + fmt(" (margin >= 0; table tolerance %.1f points)", kAblationTolerancePoints)};
  });

  report(9, "data efficiency", [&]() -> Outcome {
    const auto rows = data_efficiency_sweep(cfg, pretrained, data, {0.3, 0.5, 1.0});
    std::printf("%s", sweep_table(rows).c_str());
    const double base = evaluate(baseline.model, data, Domain::Target).acc;
    const double a03 = rows[0].target.acc, a10 = rows[2].target.acc;
    return {a10 >= a03 - 0.02 && a03 > base,
            fmt("acc(1.0) %.4f >= acc(0.3) %.4f - 0.02; acc(0.3) > CE-only %.4f", a10, a03, base)};
  });

  report(10, "determinism", []() -> Outcome {
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / "dalign_acceptance";
    fs::remove_all(root);
    const int a = run_cli("adapt --seed 7 --out " + (root / "a").string());
    const int b = run_cli("adapt --seed 7 --out " + (root / "b").string());
    if (a != 0 || b != 0) return {false, "adapt exited with " + std::to_string(a) + "/" + std::to_string(b)};
    const std::string ma = read_file((root / "a" / "metrics.jsonl").string());
    const std::string mb = read_file((root / "b" / "metrics.jsonl").string());
    fs::remove_all(root);
    return {ma == mb && !ma.empty(), fmt("two CLI adapt runs, %.0f-byte metrics streams ", static_cast<double>(ma.size())) +
                                         (ma == mb ? "identical" : "differ")};
  });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures;
}
