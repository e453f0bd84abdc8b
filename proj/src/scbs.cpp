#include "dalign/scbs.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dalign/error.hpp"

namespace dalign {

namespace {

double row_cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) {
    throw DegenerateFeatureError("cosine similarity of a zero-norm feature");
  }
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

}  // namespace

double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || a.shape() != b.shape()) {
    throw ShapeError("cosine_similarity: shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()) + " differ");
  }
  return row_cosine(a.values(), b.values());
}

PositivePairSet labeled_pairs(const std::vector<int>& labels, Rng& rng) {
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);

  PositivePairSet out;
  out.origin = PairOrigin::Labeled;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& same = members[labels[i]];
    if (same.size() < 2) continue;
    // Draw among the other members: pick a slot in [0, size-1) and skip self.
    std::size_t slot = static_cast<std::size_t>(rng.below(same.size() - 1));
    std::size_t self_slot = static_cast<std::size_t>(
        std::find(same.begin(), same.end(), i) - same.begin());
    if (slot >= self_slot) ++slot;
    out.pairs.push_back({i, same[slot]});
  }
  return out;
}

PositivePairSet pseudo_pairs(const Tensor& features, bool skip_nearest) {
  if (features.rank() != 2) {
    throw ShapeError("pseudo_pairs: expected [N x d], got " + shape_to_string(features.shape()));
  }
  const std::size_t n = features.rows();
  const std::size_t needed = skip_nearest ? 3 : 2;
  if (n < needed) {
    throw InsufficientBatchError("pseudo_pairs needs at least " + std::to_string(needed) +
                                 " samples, got " + std::to_string(n));
  }

  PositivePairSet out;
  out.origin = PairOrigin::Pseudo;
  for (std::size_t i = 0; i < n; ++i) {
    // Strict '>' keeps the lowest index among ties.
    std::size_t best = n, second = n;
    double best_s = -2.0, second_s = -2.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double s = row_cosine(features.row(i), features.row(j));
      if (s > best_s) {
        second = best;
        second_s = best_s;
        best = j;
        best_s = s;
      } else if (s > second_s) {
        second = j;
        second_s = s;
      }
    }
    out.pairs.push_back({i, skip_nearest ? second : best});
  }
  return out;
}

PositivePairSet pool_pairs(const PositivePairSet& first, const PositivePairSet& second,
                           std::size_t offset) {
  PositivePairSet out;
  out.origin = PairOrigin::Pooled;
  out.pairs = first.pairs;
  for (const PositivePair& p : second.pairs) {
    out.pairs.push_back({p.anchor + offset, p.positive + offset});
  }
  return out;
}

double scbs_loss(const Tensor& features, const PositivePairSet& pairs) {
  if (pairs.empty()) return 0.0;
  if (features.rank() != 2) {
    throw ShapeError("scbs_loss: expected [N x d], got " + shape_to_string(features.shape()));
  }
  double total = 0.0;
  for (const PositivePair& p : pairs.pairs) {
    if (p.anchor >= features.rows() || p.positive >= features.rows()) {
      throw ShapeError("scbs_loss: pair index outside the batch");
    }
    const double s = row_cosine(features.row(p.anchor), features.row(p.positive));
    total += std::log1p(std::exp(-s));  // -log sigmoid(s), s in [-1, 1]
  }
  return total / static_cast<double>(pairs.size());
}

NodeId scbs_loss(Graph& graph, NodeId features, const PositivePairSet& pairs) {
  if (pairs.empty()) throw InsufficientBatchError("scbs_loss over an empty pair set");
  std::vector<std::size_t> anchors, positives;
  for (const PositivePair& p : pairs.pairs) {
    anchors.push_back(p.anchor);
    positives.push_back(p.positive);
  }
  NodeId s = graph.cosine_rows(graph.gather_rows(features, std::move(anchors)),
                               graph.gather_rows(features, std::move(positives)));
  return graph.scale(graph.mean(graph.log_sigmoid(s)), -1.0);
}

}  // namespace dalign
