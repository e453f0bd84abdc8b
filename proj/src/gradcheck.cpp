#include "dalign/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dalign/error.hpp"

namespace dalign {

GradCheckResult finite_diff_check(Graph& graph, NodeId loss, double step) {
  return finite_diff_check(graph, loss, step, [](NodeId) { return 1.0; });
}

GradCheckResult finite_diff_check(Graph& graph, NodeId loss, double step,
                                  const std::function<double(NodeId)>& expected_scale) {
  if (!(step > 0.0)) throw ConfigError("finite-difference step must be > 0");

  GradCheckResult result;
  const Gradients analytic = backward(graph, loss);
  result.excluded_point = graph.near_kink(step);

  for (NodeId p : graph.parameters()) {
    Tensor original = forward(graph, p);
    const Tensor& grad = analytic.at(p);
    const double scale = expected_scale(p);
    for (std::size_t k = 0; k < original.size(); ++k) {
      Tensor probe = original;
      probe[k] = original[k] + step;
      graph.bind(p, probe);
      const double up = forward(graph, loss).item();
      result.excluded_point = result.excluded_point || graph.near_kink(step);
      probe[k] = original[k] - step;
      graph.bind(p, probe);
      const double down = forward(graph, loss).item();
      result.excluded_point = result.excluded_point || graph.near_kink(step);

      const double numeric = scale * (up - down) / (2.0 * step);
      const double err = std::abs(grad[k] - numeric) / std::max(1.0, std::abs(numeric));
      result.max_relative_error = std::max(result.max_relative_error, err);
      ++result.entries_checked;
    }
    graph.bind(p, original);
  }
  forward(graph, loss);
  return result;
}

}  // namespace dalign
