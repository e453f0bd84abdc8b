#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "dalign/graph.hpp"
#include "dalign/random.hpp"
#include "dalign/tensor.hpp"

namespace dalign {

enum class PairOrigin { Labeled, Pseudo, Pooled };

struct PositivePair {
  std::size_t anchor;
  std::size_t positive;
  friend bool operator==(const PositivePair&, const PositivePair&) = default;
};

struct PositivePairSet {
  std::vector<PositivePair> pairs;
  PairOrigin origin = PairOrigin::Labeled;

  bool empty() const noexcept { return pairs.empty(); }
  std::size_t size() const noexcept { return pairs.size(); }
};

// dot(a, b) / (|a| |b|), clamped to [-1, 1]. Throws DegenerateFeatureError
// on a zero-norm input.
double cosine_similarity(const Tensor& a, const Tensor& b);

// Each sample whose class has another member gets one uniformly drawn
// same-class partner other than itself. Singleton classes are skipped.
PositivePairSet labeled_pairs(const std::vector<int>& labels, Rng& rng);

// Partner of each row is its most cosine-similar other row (lowest index on
// ties). With `skip_nearest` the runner-up is taken instead, which needs at
// least three rows.
PositivePairSet pseudo_pairs(const Tensor& features, bool skip_nearest = false);

// Concatenates two pair sets, shifting the second one's indices by `offset`.
PositivePairSet pool_pairs(const PositivePairSet& first, const PositivePairSet& second,
                           std::size_t offset);

// -(1/|P|) sum log sigmoid(s_ij). An empty set yields 0; callers flag it.
double scbs_loss(const Tensor& features, const PositivePairSet& pairs);

// Graph form of scbs_loss over the rows of `features`. `pairs` must be non-empty.
NodeId scbs_loss(Graph& graph, NodeId features, const PositivePairSet& pairs);

}  // namespace dalign
