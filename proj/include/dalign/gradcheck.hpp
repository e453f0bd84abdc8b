#pragma once

#include <functional>

#include "dalign/graph.hpp"

namespace dalign {

struct GradCheckResult {
  // max over parameter entries of |analytic - numeric| / max(1, |numeric|)
  double max_relative_error = 0.0;
  std::size_t entries_checked = 0;
  // Set when the evaluation point sits within `step` of a ReLU kink or a
  // zero-norm input. The error is still reported but is not meaningful there;
  // callers should perturb the inputs away from the kink.
  bool excluded_point = false;
};

// Compares backward() against central differences over every parameter of
// `graph`. Parameter values are restored before returning.
GradCheckResult finite_diff_check(Graph& graph, NodeId loss, double step = 1e-6);

// Same, but the analytic gradient of parameter p is expected to equal
// expected_scale(p) times the numeric derivative of the forward loss. Used
// where gradient reversal makes backward() differ from d(loss)/dp on purpose.
GradCheckResult finite_diff_check(Graph& graph, NodeId loss, double step,
                                  const std::function<double(NodeId)>& expected_scale);

}  // namespace dalign
