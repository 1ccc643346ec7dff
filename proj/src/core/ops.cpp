#include "amx/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace amx {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kDense: return "dense";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kMaxPool2d: return "max_pool2d";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kCrossEntropy: return "cross_entropy";
    case OpKind::kMse: return "mse";
    case OpKind::kReshape: return "reshape";
    case OpKind::kUpsample: return "upsample_nearest2d";
    case OpKind::kSelect: return "select";
    case OpKind::kMean: return "mean";
  }
  return "?";
}

namespace {

std::string mismatch(const char* op, const Shape& a, const Shape& b) {
  return std::string(op) + ": shape mismatch " + shape_to_string(a) + " vs " +
         shape_to_string(b);
}

}  // namespace

template <class T>
NodeId dense(Graph<T>& g, NodeId input, NodeId weights, NodeId bias) {
  const Shape& ws = g.shape(weights);
  const Shape& xs = g.shape(input);
  const Shape& bs = g.shape(bias);
  if (ws.size() != 2 || xs.size() != 1 || ws[1] != xs[0]) {
    throw DimensionError(mismatch("dense", ws, xs));
  }
  if (bs.size() != 1 || bs[0] != ws[0]) throw DimensionError(mismatch("dense", ws, bs));
  const int m = static_cast<int>(ws[0]);
  const int n = static_cast<int>(ws[1]);
  return g.append(
      OpKind::kDense, {input, weights, bias}, Shape{ws[0]},
      [=](Graph<T>& gr, Node<T>& self) {
        kernels::dense_forward<T>(m, n, gr.value(weights), gr.value(input), gr.value(bias),
                                  self.owned);
      },
      [=](Graph<T>& gr, Node<T>& self) {
        kernels::dense_backward<T>(m, n, gr.value(weights), gr.value(input), self.grad,
                                   gr.input_grad(input), gr.input_grad(weights),
                                   gr.input_grad(bias));
      });
}

template <class T>
NodeId conv2d(Graph<T>& g, NodeId input, NodeId kernels_id, NodeId bias, int stride,
              Padding padding) {
  const Shape& xs = g.shape(input);
  const Shape& ks = g.shape(kernels_id);
  if (xs.size() != 3 || ks.size() != 4 || ks[1] != xs[0]) {
    throw DimensionError(mismatch("conv2d", xs, ks));
  }
  if (g.shape(bias) != Shape{ks[0]}) throw DimensionError(mismatch("conv2d", ks, g.shape(bias)));
  const auto geo = kernels::make_conv_geometry(
      static_cast<int>(xs[0]), static_cast<int>(xs[1]), static_cast<int>(xs[2]),
      static_cast<int>(ks[0]), static_cast<int>(ks[2]), static_cast<int>(ks[3]), stride, padding);
  return g.append(
      OpKind::kConv2d, {input, kernels_id, bias},
      Shape{ks[0], std::size_t(geo.out_h), std::size_t(geo.out_w)},
      [=](Graph<T>& gr, Node<T>& self) {
        kernels::conv2d_forward<T>(geo, gr.value(input), gr.value(kernels_id), gr.value(bias),
                                   self.owned);
      },
      [=](Graph<T>& gr, Node<T>& self) {
        kernels::conv2d_backward<T>(geo, gr.value(input), gr.value(kernels_id), self.grad,
                                    gr.input_grad(input), gr.input_grad(kernels_id),
                                    gr.input_grad(bias));
      });
}

template <class T>
NodeId max_pool2d(Graph<T>& g, NodeId input, int size) {
  const Shape xs = g.shape(input);
  if (size <= 0) throw ContractError("max_pool2d: size must be positive");
  if (xs.size() != 3 || xs[1] % size != 0 || xs[2] % size != 0) {
    throw DimensionError("max_pool2d: input " + shape_to_string(xs) + " not divisible by " +
                         std::to_string(size));
  }
  const int c = static_cast<int>(xs[0]), h = static_cast<int>(xs[1]), w = static_cast<int>(xs[2]);
  return g.append(
      OpKind::kMaxPool2d, {input}, Shape{xs[0], xs[1] / size, xs[2] / size},
      [=](Graph<T>& gr, Node<T>& self) {
        self.aux.resize(self.owned.size());
        kernels::max_pool_forward<T>(c, h, w, size, gr.value(input), self.owned, self.aux);
      },
      [=](Graph<T>& gr, Node<T>& self) {
        auto gi = gr.input_grad(input);
        if (!gi.empty()) kernels::max_pool_backward<T>(self.aux, self.grad, gi);
      },
      [](const Graph<T>&, const Node<T>& self, Fnv1a& h) {
        for (auto a : self.aux) h.add(a);
      });
}

template <class T>
NodeId relu(Graph<T>& g, NodeId input) {
  return g.append(
      OpKind::kRelu, {input}, g.shape(input),
      [=](Graph<T>& gr, Node<T>& self) {
        const auto x = gr.value(input);
        for (std::size_t i = 0; i < x.size(); ++i) self.owned[i] = x[i] > T(0) ? x[i] : T(0);
      },
      [=](Graph<T>& gr, Node<T>& self) {
        auto gi = gr.input_grad(input);
        if (gi.empty()) return;
        const auto x = gr.value(input);
        const T* gy = self.grad.data();
        for (std::size_t i = 0; i < x.size(); ++i) gi[i] += x[i] > T(0) ? gy[i] : T(0);
      },
      [=](const Graph<T>& gr, const Node<T>&, Fnv1a& h) {
        const auto x = gr.value(input);
        std::uint64_t word = 0;
        int bits = 0;
        for (auto v : x) {
          const std::uint64_t cls = v > T(0) ? 2u : (v < T(0) ? 0u : 1u);
          word = (word << 2) | cls;
          if (++bits == 32) {
            h.add(word);
            word = 0;
            bits = 0;
          }
        }
        h.add(word);
      });
}

namespace {
template <class T>
constexpr T kSigmoidFloor = T(0x1.0p-24);
}

template <class T>
NodeId sigmoid(Graph<T>& g, NodeId input) {
  return g.append(
      OpKind::kSigmoid, {input}, g.shape(input),
      [=](Graph<T>& gr, Node<T>& self) {
        const auto x = gr.value(input);
        for (std::size_t i = 0; i < x.size(); ++i) {
          const T s = T(1) / (T(1) + std::exp(-x[i]));
          self.owned[i] = std::clamp(s, kSigmoidFloor<T>, T(1) - kSigmoidFloor<T>);
        }
      },
      [=](Graph<T>& gr, Node<T>& self) {
        auto gi = gr.input_grad(input);
        if (gi.empty()) return;
        for (std::size_t i = 0; i < gi.size(); ++i) {
          const T s = self.owned[i];
          gi[i] += self.grad[i] * s * (T(1) - s);
        }
      },
      [](const Graph<T>&, const Node<T>& self, Fnv1a& h) {
        std::uint64_t clamped = 0;
        for (std::size_t i = 0; i < self.owned.size(); ++i) {
          const T s = self.owned[i];
          if (s <= kSigmoidFloor<T> || s >= T(1) - kSigmoidFloor<T>) clamped = clamped * 31 + i + 1;
        }
        h.add(clamped);
      });
}

template <class T>
NodeId softmax(Graph<T>& g, NodeId logits) {
  if (g.shape(logits).size() != 1) {
    throw DimensionError("softmax: expected a vector, got " + shape_to_string(g.shape(logits)));
  }
  return g.append(
      OpKind::kSoftmax, {logits}, g.shape(logits),
      [=](Graph<T>& gr, Node<T>& self) {
        const auto l = gr.value(logits);
        const T mx = *std::max_element(l.begin(), l.end());
        T sum = T(0);
        for (std::size_t i = 0; i < l.size(); ++i) {
          self.owned[i] = std::exp(l[i] - mx);
          sum += self.owned[i];
        }
        for (auto& v : self.owned) v /= sum;
      },
      [=](Graph<T>& gr, Node<T>& self) {
        auto gi = gr.input_grad(logits);
        if (gi.empty()) return;
        T dot = T(0);
        for (std::size_t i = 0; i < self.owned.size(); ++i) dot += self.grad[i] * self.owned[i];
        for (std::size_t i = 0; i < self.owned.size(); ++i) {
          gi[i] += self.owned[i] * (self.grad[i] - dot);
        }
      });
}

template <class T>
NodeId cross_entropy(Graph<T>& g, NodeId probs, std::size_t target_class) {
  const Shape& ps = g.shape(probs);
  if (ps.size() != 1) throw DimensionError("cross_entropy: expected a vector");
  if (target_class >= ps[0]) {
    throw IndexError("cross_entropy: target class " + std::to_string(target_class) +
                     " out of range for K=" + std::to_string(ps[0]));
  }
  constexpr T eps = T(1e-12);
  return g.append(
      OpKind::kCrossEntropy, {probs}, Shape{1},
      [=](Graph<T>& gr, Node<T>& self) {
        self.owned[0] = -std::log(gr.value(probs)[target_class] + eps);
      },
      [=](Graph<T>& gr, Node<T>& self) {
        auto gi = gr.input_grad(probs);
        if (gi.empty()) return;
        gi[target_class] += -self.grad[0] / (gr.value(probs)[target_class] + eps);
      });
}

template <class T>
NodeId mse(Graph<T>& g, NodeId a, NodeId b) {
  if (g.shape(a) != g.shape(b)) throw DimensionError(mismatch("mse", g.shape(a), g.shape(b)));
  const T inv_n = T(1) / static_cast<T>(shape_size(g.shape(a)));
  return g.append(
      OpKind::kMse, {a, b}, Shape{1},
      [=](Graph<T>& gr, Node<T>& self) {
        const auto x = gr.value(a);
        const auto y = gr.value(b);
        T acc = T(0);
        for (std::size_t i = 0; i < x.size(); ++i) {
          const T d = x[i] - y[i];
          acc += d * d;
        }
        self.owned[0] = acc * inv_n;
      },
      [=](Graph<T>& gr, Node<T>& self) {
        const auto x = gr.value(a);
        const auto y = gr.value(b);
        const T scale = T(2) * inv_n * self.grad[0];
        auto ga = gr.input_grad(a);
        auto gb = gr.input_grad(b);
        for (std::size_t i = 0; i < x.size(); ++i) {
          const T d = scale * (x[i] - y[i]);
          if (!ga.empty()) ga[i] += d;
          if (!gb.empty()) gb[i] -= d;
        }
      });
}

template <class T>
NodeId reshape(Graph<T>& g, NodeId input, Shape shape) {
  if (shape_size(shape) != shape_size(g.shape(input))) {
    throw DimensionError(mismatch("reshape", g.shape(input), shape));
  }
  return g.append(
      OpKind::kReshape, {input}, std::move(shape),
      [=](Graph<T>& gr, Node<T>& self) {
        const auto x = gr.value(input);
        std::copy(x.begin(), x.end(), self.owned.begin());
      },
      [=](Graph<T>& gr, Node<T>& self) {
        auto gi = gr.input_grad(input);
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i];
      });
}

template <class T>
NodeId flatten(Graph<T>& g, NodeId input) {
  return reshape(g, input, Shape{shape_size(g.shape(input))});
}

template <class T>
NodeId upsample_nearest2d(Graph<T>& g, NodeId input, int factor) {
  const Shape xs = g.shape(input);
  if (xs.size() != 3) throw DimensionError("upsample_nearest2d: expected C x H x W input");
  if (factor <= 0) throw ContractError("upsample_nearest2d: factor must be positive");
  const std::size_t c = xs[0], h = xs[1], w = xs[2], f = std::size_t(factor);
  return g.append(
      OpKind::kUpsample, {input}, Shape{c, h * f, w * f},
      [=](Graph<T>& gr, Node<T>& self) {
        const auto x = gr.value(input);
        const std::size_t ow = w * f;
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t oy = 0; oy < h * f; ++oy) {
            const T* src = x.data() + (ch * h + oy / f) * w;
            T* dst = self.owned.data() + (ch * h * f + oy) * ow;
            for (std::size_t ox = 0; ox < ow; ++ox) dst[ox] = src[ox / f];
          }
        }
      },
      [=](Graph<T>& gr, Node<T>& self) {
        auto gi = gr.input_grad(input);
        if (gi.empty()) return;
        const std::size_t ow = w * f;
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t oy = 0; oy < h * f; ++oy) {
            T* dst = gi.data() + (ch * h + oy / f) * w;
            const T* src = self.grad.data() + (ch * h * f + oy) * ow;
            for (std::size_t ox = 0; ox < ow; ++ox) dst[ox / f] += src[ox];
          }
        }
      });
}

template <class T>
NodeId select(Graph<T>& g, NodeId input, std::size_t index) {
  const auto n = shape_size(g.shape(input));
  if (index >= n) {
    throw IndexError("select: index " + std::to_string(index) + " out of range for " +
                     std::to_string(n) + " elements");
  }
  return g.append(
      OpKind::kSelect, {input}, Shape{1},
      [=](Graph<T>& gr, Node<T>& self) { self.owned[0] = gr.value(input)[index]; },
      [=](Graph<T>& gr, Node<T>& self) {
        auto gi = gr.input_grad(input);
        if (!gi.empty()) gi[index] += self.grad[0];
      });
}

template <class T>
NodeId mean(Graph<T>& g, std::span<const NodeId> scalars) {
  if (scalars.empty()) throw ContractError("mean: no inputs");
  for (auto id : scalars) {
    if (shape_size(g.shape(id)) != 1) throw DimensionError("mean: inputs must be scalars");
  }
  std::vector<NodeId> ins(scalars.begin(), scalars.end());
  const T inv_n = T(1) / static_cast<T>(ins.size());
  return g.append(
      OpKind::kMean, ins, Shape{1},
      [=](Graph<T>& gr, Node<T>& self) {
        T acc = T(0);
        for (auto id : ins) acc += gr.value(id)[0];
        self.owned[0] = acc * inv_n;
      },
      [=](Graph<T>& gr, Node<T>& self) {
        const T gv = self.grad[0] * inv_n;
        for (auto id : ins) {
          auto gi = gr.input_grad(id);
          if (!gi.empty()) gi[0] += gv;
        }
      });
}

#define AMX_INSTANTIATE(T)                                                             \
  template NodeId dense<T>(Graph<T>&, NodeId, NodeId, NodeId);                         \
  template NodeId conv2d<T>(Graph<T>&, NodeId, NodeId, NodeId, int, Padding);          \
  template NodeId max_pool2d<T>(Graph<T>&, NodeId, int);                               \
  template NodeId relu<T>(Graph<T>&, NodeId);                                          \
  template NodeId sigmoid<T>(Graph<T>&, NodeId);                                       \
  template NodeId softmax<T>(Graph<T>&, NodeId);                                       \
  template NodeId cross_entropy<T>(Graph<T>&, NodeId, std::size_t);                    \
  template NodeId mse<T>(Graph<T>&, NodeId, NodeId);                                   \
  template NodeId reshape<T>(Graph<T>&, NodeId, Shape);                                \
  template NodeId flatten<T>(Graph<T>&, NodeId);                                       \
  template NodeId upsample_nearest2d<T>(Graph<T>&, NodeId, int);                       \
  template NodeId select<T>(Graph<T>&, NodeId, std::size_t);                           \
  template NodeId mean<T>(Graph<T>&, std::span<const NodeId>);

AMX_INSTANTIATE(float)
AMX_INSTANTIATE(double)

#undef AMX_INSTANTIATE

}  // namespace amx
