#include "amx/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace amx {

template <class T>
GradCheckReport check_gradients(Graph<T>& graph, NodeId loss, const GradCheckOptions& options) {
  graph.forward();
  graph.zero_grad();
  graph.backward(loss);
  const std::uint64_t base_signature = graph.nonsmooth_signature();
  const T h = static_cast<T>(options.step);

  GradCheckReport report;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const NodeId id{i};
    const auto& node = graph.node(id);
    if (node.kind != OpKind::kLeaf || !node.requires_grad) continue;
    const std::vector<T> analytic(node.grad.begin(), node.grad.end());
    auto values = graph.mutable_leaf_values(id);

    TensorGradCheck entry;
    entry.id = id;
    entry.name = node.name.empty() ? "leaf#" + std::to_string(i) : node.name;

    const std::size_t n = values.size();
    const std::size_t stride =
        options.max_elements_per_tensor == 0 || n <= options.max_elements_per_tensor
            ? 1
            : (n + options.max_elements_per_tensor - 1) / options.max_elements_per_tensor;
    for (std::size_t e = 0; e < n; e += stride) {
      const T saved = values[e];
      values[e] = saved + h;
      graph.forward();
      const double plus = graph.scalar(loss);
      const bool plus_smooth = graph.nonsmooth_signature() == base_signature;
      values[e] = saved - h;
      graph.forward();
      const double minus = graph.scalar(loss);
      const bool minus_smooth = graph.nonsmooth_signature() == base_signature;
      values[e] = saved;
      if (!plus_smooth || !minus_smooth) {
        ++entry.excluded;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * static_cast<double>(h));
      const double a = static_cast<double>(analytic[e]);
      const double abs_err = std::abs(a - numeric);
      const double rel_err =
          abs_err / std::max({std::abs(a), std::abs(numeric), options.rel_floor});
      entry.max_abs_err = std::max(entry.max_abs_err, abs_err);
      entry.max_rel_err = std::max(entry.max_rel_err, rel_err);
      ++entry.checked;
    }
    report.max_abs_err = std::max(report.max_abs_err, entry.max_abs_err);
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.checked += entry.checked;
    report.excluded += entry.excluded;
    report.per_tensor.push_back(std::move(entry));
  }
  graph.forward();
  return report;
}

template <class T>
GradCheckReport check_gradients(Graph<T>& graph, double step) {
  if (graph.size() == 0) throw ContractError("check_gradients: empty graph");
  GradCheckOptions options;
  options.step = step;
  return check_gradients(graph, NodeId{graph.size() - 1}, options);
}

template GradCheckReport check_gradients<float>(Graph<float>&, NodeId, const GradCheckOptions&);
template GradCheckReport check_gradients<double>(Graph<double>&, NodeId, const GradCheckOptions&);
template GradCheckReport check_gradients<float>(Graph<float>&, double);
template GradCheckReport check_gradients<double>(Graph<double>&, double);

}  // namespace amx
