#include "dalign/ddo.hpp"

#include <cmath>

#include "dalign/error.hpp"

namespace dalign {

namespace {

void require_vector_match(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rank() != 1 || a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()) + " differ");
  }
}

void require_batch(const Tensor& features, const char* what) {
  if (features.rank() != 2) {
    throw ShapeError(std::string(what) + ": expected [N x d], got " +
                     shape_to_string(features.shape()));
  }
  if (features.rows() == 0) throw EmptyBatchError(std::string(what) + ": empty batch");
}

NodeId blended_centroid(Graph& g, NodeId features, const CentroidTracker& tracker) {
  const double mu = tracker.momentum();
  if (g.shape(features).size() != 2 || g.shape(features)[1] != tracker.global().size()) {
    throw ShapeError("alignment: features " + shape_to_string(g.shape(features)) +
                     " do not match centroid " + shape_to_string(tracker.global().shape()));
  }
  NodeId local = g.scale(g.mean_rows(features), 1.0 - mu);
  Tensor prior = tracker.global();
  for (double& v : prior.values()) v *= mu;
  return g.add(local, g.constant(std::move(prior)));
}

}  // namespace

CentroidTracker::CentroidTracker(std::size_t feature_dim, double momentum)
    : global_(Shape{feature_dim}), momentum_(momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("centroid momentum must lie in [0, 1), got " + std::to_string(momentum));
  }
}

void CentroidTracker::update(const Tensor& local) {
  require_vector_match(global_, local, "update_global");
  if (!local.all_finite()) throw FinitenessError("local centroid is not finite");
  for (std::size_t i = 0; i < global_.size(); ++i) {
    global_[i] = momentum_ * global_[i] + (1.0 - momentum_) * local[i];
  }
  initialized_ = true;
  ++updates_;
}

Tensor local_centroid(const Tensor& features) {
  require_batch(features, "local_centroid");
  const std::size_t n = features.rows(), d = features.cols();
  Tensor c(Shape{d});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) c[j] += features.at(r, j);
  }
  for (double& v : c.values()) v /= static_cast<double>(n);
  return c;
}

CentroidTracker update_global(CentroidTracker tracker, const Tensor& local) {
  tracker.update(local);
  return tracker;
}

double inter_domain_distance(const Tensor& source_centroid, const Tensor& target_centroid) {
  require_vector_match(source_centroid, target_centroid, "inter_domain_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < source_centroid.size(); ++i) {
    const double d = source_centroid[i] - target_centroid[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double intra_domain_distance(const Tensor& features, const Tensor& centroid) {
  require_batch(features, "intra_domain_distance");
  if (centroid.rank() != 1 || centroid.size() != features.cols()) {
    throw ShapeError("intra_domain_distance: features " + shape_to_string(features.shape()) +
                     " vs centroid " + shape_to_string(centroid.shape()));
  }
  double total = 0.0;
  for (std::size_t r = 0; r < features.rows(); ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < centroid.size(); ++j) {
      const double d = features.at(r, j) - centroid[j];
      s += d * d;
    }
    total += std::sqrt(s);
  }
  return total / static_cast<double>(features.rows());
}

double intra_weight(std::size_t epoch, std::size_t total_epochs) {
  if (epoch >= total_epochs) {
    throw ConfigError("epoch " + std::to_string(epoch) + " outside [0, " +
                      std::to_string(total_epochs) + ")");
  }
  return static_cast<double>(total_epochs - epoch) / static_cast<double>(total_epochs);
}

double domain_alignment_loss(const DomainDistances& d, double w_intra) {
  return d.d_inter + std::exp(-(d.d_intra_source + d.d_intra_target)) * w_intra;
}

AlignmentNodes domain_alignment_loss(Graph& g, NodeId source_features, NodeId target_features,
                                     const CentroidTracker& source,
                                     const CentroidTracker& target, double w_intra) {
  AlignmentNodes n{};
  n.centroid_source = blended_centroid(g, source_features, source);
  n.centroid_target = blended_centroid(g, target_features, target);
  n.d_inter = g.l2_norm(g.sub(n.centroid_source, n.centroid_target));
  n.d_intra_source = g.mean(g.row_norms(g.sub(source_features, n.centroid_source)));
  n.d_intra_target = g.mean(g.row_norms(g.sub(target_features, n.centroid_target)));
  NodeId spread = g.exp(g.scale(g.add(n.d_intra_source, n.d_intra_target), -1.0));
  n.loss = g.add(n.d_inter, g.scale(spread, w_intra));
  return n;
}

}  // namespace dalign
