#include "dalign/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "dalign/ddo.hpp"
#include "dalign/error.hpp"
#include "dalign/harness.hpp"
#include "dalign/losses.hpp"
#include "dalign/model.hpp"
#include "dalign/random.hpp"
#include "dalign/scbs.hpp"

namespace dalign {
namespace {

constexpr double kGradTolerance = 1e-4;
constexpr int kMaxRedraws = 16;

std::size_t draw(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Tensor t(Shape{rows, cols});
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

std::vector<int> random_labels(Rng& rng, std::size_t n) {
  std::vector<int> labels(n);
  for (int& y : labels) y = static_cast<int>(rng.below(2));
  // Both classes present so every source row has a labeled partner.
  labels[0] = 0;
  labels[n - 1] = 1;
  return labels;
}

// One attempt at a seeded instance; returns the check result.
GradCheckResult check_once(LossTerm term, std::uint64_t seed, double step) {
  Rng rng(seed);
  ModelSpec spec;
  spec.encoder.input_dim = draw(rng, 2, 6);
  spec.encoder.hidden_dims = {draw(rng, 3, 8)};
  spec.encoder.feature_dim = draw(rng, 2, 8);
  spec.domain_classifier.feature_dim = spec.encoder.feature_dim;
  spec.domain_classifier.hidden_dims = {draw(rng, 2, 6)};
  Model model = Model::initialize(spec, rng.next_u64());
  for (NamedTensor& p : model.parameters()) {
    if (p.value.rank() == 1) {
      for (double& v : p.value.values()) v = 0.1 * rng.normal();
    }
  }

  const std::size_t n_source = draw(rng, 2, 8);
  const std::size_t n_target = draw(rng, 2, 8);
  const Tensor xs = random_matrix(rng, n_source, spec.encoder.input_dim, 1.0);
  const Tensor xt = random_matrix(rng, n_target, spec.encoder.input_dim, 1.0);
  const std::vector<int> labels = random_labels(rng, n_source);

  Graph g;
  const BoundModel b = bind_model(g, model);
  const NodeId fs = encode(g, b, g.constant(xs));
  const NodeId ft = encode(g, b, g.constant(xt));
  NodeId loss;
  std::function<double(NodeId)> scale = [](NodeId) { return 1.0; };
  switch (term) {
    case LossTerm::CrossEntropy:
      loss = supervised_ce_loss(g, class_logits(g, b, fs), labels);
      break;
    case LossTerm::DomainAlignment: {
      const double mu = rng.uniform(0.0, 0.95);
      CentroidTracker ts(spec.encoder.feature_dim, mu), tt(spec.encoder.feature_dim, mu);
      ts.update(Tensor::vector(random_matrix(rng, 1, spec.encoder.feature_dim, 1.0).row_copy(0)));
      tt.update(Tensor::vector(random_matrix(rng, 1, spec.encoder.feature_dim, 1.0).row_copy(0)));
      loss = domain_alignment_loss(g, fs, ft, ts, tt, rng.uniform(0.0, 1.0)).loss;
      break;
    }
    case LossTerm::Scbs: {
      const PositivePairSet src = labeled_pairs(labels, rng);
      const PositivePairSet tgt = pseudo_pairs(forward(g, ft));
      loss = scbs_loss(g, g.concat_rows(fs, ft), pool_pairs(src, tgt, n_source));
      break;
    }
    case LossTerm::Adversarial: {
      std::vector<int> domains(n_source, 1);
      domains.resize(n_source + n_target, 0);
      const double lambda = rng.uniform(0.5, 1.5);
      const NodeId reversed = g.grad_reverse(g.concat_rows(fs, ft), lambda);
      loss = adversarial_domain_loss(g, domain_logits(g, b, reversed), domains);
      // Encoder parameters sit below the reversal and see -lambda times the
      // true derivative; the domain classifier sees it unchanged.
      const std::vector<NodeId> encoder(b.nodes.begin(), b.nodes.begin() + 2 * b.encoder_layers);
      scale = [encoder, lambda](NodeId p) {
        return std::find(encoder.begin(), encoder.end(), p) != encoder.end() ? -lambda : 1.0;
      };
      break;
    }
    case LossTerm::Diversity:
      loss = diversity_regularizer(g, class_logits(g, b, g.concat_rows(fs, ft)), PriorDistribution{});
      break;
  }
  forward(g, loss);
  return finite_diff_check(g, loss, step, scale);
}

SelftestRow row(std::string name, bool passed, std::string detail) {
  return {std::move(name), passed, std::move(detail)};
}

std::string sci(double v) {
  std::ostringstream out;
  out.precision(2);
  out << std::scientific << v;
  return out.str();
}

SelftestRow centroid_oracle() {
  double worst = 0.0;
  for (double mu : {0.0, 0.5, 0.9}) {
    CentroidTracker t(3, mu);
    const Tensor c = Tensor::vector({1.5, -0.25, 4.0});
    for (std::size_t k = 1; k <= 20; ++k) {
      t.update(c);
      if (k == 1 || k == 5 || k == 20) {
        for (std::size_t j = 0; j < 3; ++j) {
          worst = std::max(worst, std::abs(t.global()[j] - (1.0 - std::pow(mu, k)) * c[j]));
        }
      }
    }
  }
  return row("centroid closed form", worst <= 1e-10, "max error " + sci(worst));
}

SelftestRow schedule_oracle() {
  bool ok = true;
  for (std::size_t e : {1, 2, 7, 100}) {
    ok = ok && intra_weight(0, e) == 1.0 && intra_weight(e - 1, e) == 1.0 / static_cast<double>(e);
  }
  DomainDistances d{2.5, 0.75, 1.25};
  ok = ok && domain_alignment_loss(d, 0.0) == d.d_inter;
  return row("intra weight endpoints", ok, ok ? "exact" : "mismatch");
}

SelftestRow auc_oracle() {
  Rng rng(99);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(99);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng.below(8)) / 8.0;  // coarse grid forces ties
      labels[i] = static_cast<int>(rng.below(2));
    }
    labels[0] = 0;
    labels[1] = 1;
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
  return row("auc vs pairwise count", mismatches == 0,
             std::to_string(mismatches) + " mismatches in 100");
}

SelftestRow sgd_oracle() {
  SgdOptions opt;
  Sgd sgd(opt);
  std::vector<NamedTensor> params{{"theta", Tensor::vector({1.0, -2.0})}};
  // Objective 0.5 |theta|^2 has gradient theta.
  for (int step = 0; step < 2; ++step) sgd.step(params, {params[0].value});
  double worst = 0.0;
  double theta[2] = {1.0, -2.0}, v[2] = {0.0, 0.0};
  for (int step = 0; step < 2; ++step) {
    for (int k = 0; k < 2; ++k) {
      v[k] = opt.momentum * v[k] + theta[k] + opt.weight_decay * theta[k];
      theta[k] -= opt.learning_rate * v[k];
    }
  }
  for (int k = 0; k < 2; ++k) worst = std::max(worst, std::abs(params[0].value[k] - theta[k]));
  return row("sgd momentum step", worst <= 1e-10, "max error " + sci(worst));
}

SelftestRow loss_value_oracle() {
  bool ok = std::abs(adversarial_domain_loss(Tensor::vector({0.0}), Tensor::vector({1.0})) -
                     std::numbers::ln2) <= 1e-12;
  const Tensor p = Tensor::matrix({{0.75, 0.25}});
  const double kl = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
  ok = ok && std::abs(kl_regularizer(p, PriorDistribution{}) - kl) <= 1e-12;
  ok = ok && std::abs(diversity_regularizer(p, PriorDistribution{}) -
                      -(0.75 * std::log(0.75) + 0.25 * std::log(0.25))) <= 1e-12;
  ok = ok && std::abs(total_loss(1, 1, 1, 1, 1, LossWeights{}).total - 2.1) <= 1e-12;
  return row("loss values", ok, ok ? "bce, kl, entropy, total" : "mismatch");
}

SelftestRow reversal_oracle() {
  Rng rng(5);
  const Tensor f = random_matrix(rng, 4, 3, 1.0);
  double worst = 0.0;
  Tensor grads[2];
  for (int reversed = 0; reversed < 2; ++reversed) {
    Graph g;
    const NodeId x = g.parameter(f, "features");
    const NodeId w = g.constant(Tensor::matrix({{0.5}, {-1.0}, {0.25}}));
    const NodeId z = g.pick(g.matmul(reversed ? g.grad_reverse(x, 1.0) : x, w), {0, 0, 0, 0});
    const NodeId loss = adversarial_domain_loss(g, z, {1, 0, 1, 0});
    grads[reversed] = backward(g, loss).at(x);
  }
  for (std::size_t k = 0; k < f.size(); ++k) worst = std::max(worst, std::abs(grads[0][k] + grads[1][k]));
  return row("gradient reversal sign", worst <= 1e-10, "max error " + sci(worst));
}

}  // namespace

const char* to_string(LossTerm term) {
  switch (term) {
    case LossTerm::CrossEntropy: return "supervised CE";
    case LossTerm::DomainAlignment: return "domain alignment";
    case LossTerm::Scbs: return "class boundary separation";
    case LossTerm::Adversarial: return "adversarial domain";
    case LossTerm::Diversity: return "diversity regularizer";
  }
  return "?";
}

GradCheckResult check_loss_gradient(LossTerm term, std::uint64_t seed, double step) {
  GradCheckResult result;
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    result = check_once(term, fnv1a(std::to_string(attempt), seed), step);
    if (!result.excluded_point) return result;
  }
  return result;
}

std::vector<SelftestRow> run_selftest(std::size_t gradient_instances) {
  std::vector<SelftestRow> rows;
  for (LossTerm term : kAllLossTerms) {
    double worst = 0.0;
    bool kink = false;
    for (std::size_t i = 0; i < gradient_instances; ++i) {
      const GradCheckResult r = check_loss_gradient(term, 1000 + i);
      worst = std::max(worst, r.max_relative_error);
      kink = kink || r.excluded_point;
    }
    rows.push_back(row(std::string("gradient: ") + to_string(term), worst <= kGradTolerance && !kink,
                       "max rel error " + sci(worst) + (kink ? " (kink)" : "")));
  }
  rows.push_back(centroid_oracle());
  rows.push_back(schedule_oracle());
  rows.push_back(auc_oracle());
  rows.push_back(sgd_oracle());
  rows.push_back(loss_value_oracle());
  rows.push_back(reversal_oracle());
  return rows;
}

std::string selftest_table(const std::vector<SelftestRow>& rows) {
  std::size_t width = 0;
  for (const SelftestRow& r : rows) width = std::max(width, r.name.size());
  std::ostringstream out;
  for (const SelftestRow& r : rows) {
    out << (r.passed ? "PASS  " : "FAIL  ") << r.name << std::string(width + 2 - r.name.size(), ' ')
        << r.detail << '\n';
  }
  return out.str();
}

}  // namespace dalign
