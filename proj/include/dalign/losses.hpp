#pragma once

#include <array>
#include <vector>

#include "dalign/graph.hpp"
#include "dalign/tensor.hpp"

namespace dalign {

struct LossWeights {
  double eta1 = 0.1;   // domain alignment
  double eta2 = 1.0;   // class boundary separation
  double eta3 = 1.0;   // adversarial domain classification
  double eta4 = -1.0;  // prediction diversity regularizer

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossBreakdown {
  double l_ce = 0.0;
  double l_dal = 0.0;
  double l_scbs = 0.0;
  double l_adv = 0.0;
  double r = 0.0;
  double total = 0.0;
  LossWeights weights;
};

class PriorDistribution {
 public:
  PriorDistribution() : p_{0.5, 0.5} {}
  PriorDistribution(double real, double fake);

  double operator[](std::size_t k) const { return p_[k]; }
  const std::array<double, 2>& values() const noexcept { return p_; }

 private:
  std::array<double, 2> p_;
};

// Mean BCE of sigmoid(logit) against 0/1 domain labels, log-sum-exp form.
double adversarial_domain_loss(const Tensor& logits, const Tensor& domain_labels);

// Mean of -log probs[i, label_i]. Rows must sum to 1 within 1e-9.
double supervised_ce_loss(const Tensor& probs, const Tensor& labels);

// KL(mean row of probs || prior), 0 log 0 = 0.
double kl_regularizer(const Tensor& probs, const PriorDistribution& prior);

// log 2 - KL(mean row of probs || prior). Under the uniform prior this is the
// entropy of the batch-mean prediction, so a negative weight rewards diverse
// predictions and penalizes collapse onto one class.
double diversity_regularizer(const Tensor& probs, const PriorDistribution& prior);

// total = l_ce + eta1 l_dal + eta2 l_scbs + eta3 l_adv + eta4 r
LossBreakdown total_loss(double l_ce, double l_dal, double l_scbs, double l_adv, double r,
                         const LossWeights& weights);

// Graph forms, taking logits rather than probabilities.
NodeId adversarial_domain_loss(Graph& graph, NodeId logits, const std::vector<int>& domain_labels);
NodeId supervised_ce_loss(Graph& graph, NodeId class_logits, const std::vector<int>& labels);
NodeId kl_regularizer(Graph& graph, NodeId class_logits, const PriorDistribution& prior);
NodeId diversity_regularizer(Graph& graph, NodeId class_logits, const PriorDistribution& prior);

}  // namespace dalign
