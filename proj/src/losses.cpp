#include "dalign/losses.hpp"

#include <cmath>
#include <numbers>

#include "dalign/error.hpp"

namespace dalign {

namespace {

constexpr double kStochasticTolerance = 1e-9;

std::size_t label_index(double v, const char* what) {
  if (v == 0.0) return 0;
  if (v == 1.0) return 1;
  throw LabelError(std::string(what) + " label must be 0 or 1, got " + std::to_string(v));
}

void check_labels(const std::vector<int>& labels, const char* what) {
  for (int l : labels) {
    if (l != 0 && l != 1) {
      throw LabelError(std::string(what) + " label must be 0 or 1, got " + std::to_string(l));
    }
  }
}

void check_stochastic(const Tensor& probs) {
  if (probs.rank() != 2 || probs.cols() != 2) {
    throw ShapeError("expected [B x 2] probabilities, got " + shape_to_string(probs.shape()));
  }
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    double s = 0.0;
    for (double p : probs.row(r)) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw ProbabilityError("row " + std::to_string(r) + " has entry outside [0, 1]");
      }
      s += p;
    }
    if (std::abs(s - 1.0) > kStochasticTolerance) {
      throw ProbabilityError("row " + std::to_string(r) + " sums to " + std::to_string(s));
    }
  }
}

}  // namespace

PriorDistribution::PriorDistribution(double real, double fake) : p_{real, fake} {
  if (!(real >= 0.0 && fake >= 0.0) || std::abs(real + fake - 1.0) > 1e-12) {
    throw ConfigError("prior must be non-negative and sum to 1");
  }
}

double adversarial_domain_loss(const Tensor& logits, const Tensor& domain_labels) {
  if (logits.rank() != 1 || logits.shape() != domain_labels.shape()) {
    throw ShapeError("adversarial_domain_loss: logits " + shape_to_string(logits.shape()) +
                     " vs labels " + shape_to_string(domain_labels.shape()));
  }
  if (logits.size() == 0) throw EmptyBatchError("adversarial_domain_loss: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    const double y = static_cast<double>(label_index(domain_labels[i], "domain"));
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  return total / static_cast<double>(logits.size());
}

double supervised_ce_loss(const Tensor& probs, const Tensor& labels) {
  check_stochastic(probs);
  if (labels.rank() != 1 || labels.size() != probs.rows()) {
    throw ShapeError("supervised_ce_loss: labels " + shape_to_string(labels.shape()) +
                     " vs probs " + shape_to_string(probs.shape()));
  }
  if (labels.size() == 0) throw EmptyBatchError("supervised_ce_loss: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = probs.at(i, label_index(labels[i], "class"));
    if (p <= 0.0) throw DivergenceError("cross-entropy of a zero probability");
    total -= std::log(p);
  }
  return total / static_cast<double>(labels.size());
}

double kl_regularizer(const Tensor& probs, const PriorDistribution& prior) {
  check_stochastic(probs);
  if (probs.rows() == 0) throw EmptyBatchError("kl_regularizer: empty batch");
  double kl = 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    double q = 0.0;
    for (std::size_t r = 0; r < probs.rows(); ++r) q += probs.at(r, k);
    q /= static_cast<double>(probs.rows());
    if (q == 0.0) continue;
    if (prior[k] == 0.0) {
      throw DivergenceError("prior assigns zero mass to class " + std::to_string(k) +
                            " that the predictions use");
    }
    kl += q * std::log(q / prior[k]);
  }
  return kl;
}

double diversity_regularizer(const Tensor& probs, const PriorDistribution& prior) {
  return std::numbers::ln2 - kl_regularizer(probs, prior);
}

LossBreakdown total_loss(double l_ce, double l_dal, double l_scbs, double l_adv, double r,
                         const LossWeights& w) {
  const std::pair<const char*, double> parts[] = {
      {"l_ce", l_ce}, {"l_dal", l_dal}, {"l_scbs", l_scbs}, {"l_adv", l_adv}, {"r", r}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) throw FinitenessError(std::string("loss term ") + name + " is not finite");
  }
  LossBreakdown b{l_ce, l_dal, l_scbs, l_adv, r, 0.0, w};
  b.total = l_ce + w.eta1 * l_dal + w.eta2 * l_scbs + w.eta3 * l_adv + w.eta4 * r;
  return b;
}

NodeId adversarial_domain_loss(Graph& g, NodeId logits, const std::vector<int>& domain_labels) {
  check_labels(domain_labels, "domain");
  if (g.shape(logits) != Shape{domain_labels.size()}) {
    throw ShapeError("adversarial_domain_loss: logits " + shape_to_string(g.shape(logits)) +
                     " vs " + std::to_string(domain_labels.size()) + " labels");
  }
  std::vector<double> y(domain_labels.begin(), domain_labels.end());
  std::vector<double> not_y;
  for (double v : y) not_y.push_back(1.0 - v);
  // -[y log s(z) + (1 - y) log s(-z)]
  NodeId pos = g.mul(g.log_sigmoid(logits), g.constant(Tensor::vector(std::move(y))));
  NodeId neg = g.mul(g.log_sigmoid(g.scale(logits, -1.0)), g.constant(Tensor::vector(std::move(not_y))));
  return g.scale(g.mean(g.add(pos, neg)), -1.0);
}

NodeId supervised_ce_loss(Graph& g, NodeId class_logits, const std::vector<int>& labels) {
  check_labels(labels, "class");
  std::vector<std::size_t> cols(labels.begin(), labels.end());
  return g.scale(g.mean(g.pick(g.log_softmax(class_logits), std::move(cols))), -1.0);
}

NodeId kl_regularizer(Graph& g, NodeId class_logits, const PriorDistribution& prior) {
  if (prior[0] == 0.0 || prior[1] == 0.0) {
    // Softmax outputs are strictly positive, so a zero prior entry always diverges.
    throw DivergenceError("prior with a zero entry makes the regularizer infinite");
  }
  NodeId q = g.mean_rows(g.softmax(class_logits));
  NodeId log_prior = g.constant(Tensor::vector({std::log(prior[0]), std::log(prior[1])}));
  return g.sum(g.mul(q, g.sub(g.log(q), log_prior)));
}

NodeId diversity_regularizer(Graph& g, NodeId class_logits, const PriorDistribution& prior) {
  return g.add(g.scale(kl_regularizer(g, class_logits, prior), -1.0),
               g.constant(Tensor::scalar(std::numbers::ln2)));
}

}  // namespace dalign
