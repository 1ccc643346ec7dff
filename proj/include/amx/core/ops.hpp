#pragma once

#include <cstddef>
#include <span>

#include "amx/core/graph.hpp"
#include "amx/kernels/kernels.hpp"

namespace amx {

using kernels::Padding;

// out[i] = sum_j weights[i][j] * input[j] + bias[i]
template <class T>
NodeId dense(Graph<T>& g, NodeId input, NodeId weights, NodeId bias);

// Cross-correlation (no kernel flip) over a C x H x W input with F x C x kH x kW kernels.
template <class T>
NodeId conv2d(Graph<T>& g, NodeId input, NodeId kernels, NodeId bias, int stride, Padding padding);

// Non-overlapping size x size max pooling; gradient goes to the first maximal cell.
template <class T>
NodeId max_pool2d(Graph<T>& g, NodeId input, int size);

// Gradient is zero at exactly 0.
template <class T>
NodeId relu(Graph<T>& g, NodeId input);

// Logistic function with output clamped to [2^-24, 1 - 2^-24], so results stay
// strictly inside (0, 1) even in single precision.
template <class T>
NodeId sigmoid(Graph<T>& g, NodeId input);

template <class T>
NodeId softmax(Graph<T>& g, NodeId logits);

// -ln(probs[target] + 1e-12)
template <class T>
NodeId cross_entropy(Graph<T>& g, NodeId probs, std::size_t target_class);

template <class T>
NodeId mse(Graph<T>& g, NodeId a, NodeId b);

template <class T>
NodeId reshape(Graph<T>& g, NodeId input, Shape shape);

template <class T>
NodeId flatten(Graph<T>& g, NodeId input);

// Nearest-neighbour upsampling of a C x H x W tensor by an integer factor.
template <class T>
NodeId upsample_nearest2d(Graph<T>& g, NodeId input, int factor);

// Scalar view of one element.
template <class T>
NodeId select(Graph<T>& g, NodeId input, std::size_t index);

// Mean of scalar nodes, summed in argument order.
template <class T>
NodeId mean(Graph<T>& g, std::span<const NodeId> scalars);

}  // namespace amx
