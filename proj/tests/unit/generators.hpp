#pragma once

#include <cstddef>
#include <vector>

#include "dalign/random.hpp"
#include "dalign/tensor.hpp"

namespace testgen {

inline std::size_t size_in(dalign::Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

inline dalign::Tensor uniform_matrix(dalign::Rng& rng, std::size_t rows, std::size_t cols,
                                     double lo = -2.0, double hi = 2.0) {
  dalign::Tensor t(dalign::Shape{rows, cols});
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline dalign::Tensor uniform_vector(dalign::Rng& rng, std::size_t n, double lo = -2.0,
                                     double hi = 2.0) {
  dalign::Tensor t(dalign::Shape{n});
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Rows kept away from the origin so cosines and norms stay differentiable.
inline dalign::Tensor nonzero_rows(dalign::Rng& rng, std::size_t rows, std::size_t cols) {
  dalign::Tensor t = uniform_matrix(rng, rows, cols);
  for (std::size_t r = 0; r < rows; ++r) t.at(r, 0) = rng.uniform(0.5, 2.0);
  return t;
}

inline std::vector<int> binary_labels(dalign::Rng& rng, std::size_t n) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(rng.below(2));
  return y;
}

}  // namespace testgen
