#pragma once

#include <cstddef>

#include "dalign/graph.hpp"
#include "dalign/tensor.hpp"

namespace dalign {

// Momentum-smoothed global centroid of one domain's features. Starts at zero.
class CentroidTracker {
 public:
  CentroidTracker(std::size_t feature_dim, double momentum);

  const Tensor& global() const noexcept { return global_; }
  double momentum() const noexcept { return momentum_; }
  bool initialized() const noexcept { return initialized_; }
  std::size_t updates() const noexcept { return updates_; }

  // global <- mu * global + (1 - mu) * local
  void update(const Tensor& local);

 private:
  Tensor global_;
  double momentum_;
  bool initialized_ = false;
  std::size_t updates_ = 0;
};

struct DomainDistances {
  double d_inter = 0.0;
  double d_intra_source = 0.0;
  double d_intra_target = 0.0;
};

Tensor local_centroid(const Tensor& features);
CentroidTracker update_global(CentroidTracker tracker, const Tensor& local);
double inter_domain_distance(const Tensor& source_centroid, const Tensor& target_centroid);
double intra_domain_distance(const Tensor& features, const Tensor& centroid);

// 1 - epoch / total_epochs, epoch zero-based over adaptation epochs.
double intra_weight(std::size_t epoch, std::size_t total_epochs);

// D_inter + exp(-(D_intra_s + D_intra_t)) * w_intra
double domain_alignment_loss(const DomainDistances& d, double w_intra);

struct AlignmentNodes {
  NodeId loss;
  NodeId d_inter;
  NodeId d_intra_source;
  NodeId d_intra_target;
  NodeId centroid_source;  // blended, differentiable through the batch term
  NodeId centroid_target;
};

// Alignment loss for one joint batch. The centroid for each domain is
// mu * tracker.global() (constant) + (1 - mu) * batch mean (differentiable);
// after the step the caller stores the same value via tracker.update(batch mean).
AlignmentNodes domain_alignment_loss(Graph& graph, NodeId source_features,
                                     NodeId target_features, const CentroidTracker& source,
                                     const CentroidTracker& target, double w_intra);

}  // namespace dalign
