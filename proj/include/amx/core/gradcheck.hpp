#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "amx/core/graph.hpp"

namespace amx {

struct GradCheckOptions {
  double step = 1e-5;
  // Denominator floor of the relative error, so gradients near zero are
  // judged by absolute error.
  double rel_floor = 1e-6;
  // 0 checks every element; otherwise at most this many evenly spaced
  // elements per tensor.
  std::size_t max_elements_per_tensor = 0;
};

struct TensorGradCheck {
  NodeId id;
  std::string name;
  std::size_t checked = 0;
  // Elements whose perturbation crossed a relu kink, pool tie or clamp.
  std::size_t excluded = 0;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  std::vector<TensorGradCheck> per_tensor;

  bool passed(double rel_tol) const { return max_rel_err < rel_tol; }
};

// Central-difference comparison on every requires_grad leaf element. Leaf
// gradients are recomputed from scratch; leaf values are restored afterwards.
// Mismatches are reported, never thrown.
template <class T>
GradCheckReport check_gradients(Graph<T>& graph, NodeId loss, const GradCheckOptions& options = {});

// Uses the last node as the loss.
template <class T>
GradCheckReport check_gradients(Graph<T>& graph, double step);

}  // namespace amx
