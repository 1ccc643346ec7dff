#include <cstddef>

#include "amx/kernels/kernels.hpp"

namespace amx::kernels::reference {

template <class T>
void gemm(int m, int n, int k, std::span<const T> a, std::span<const T> b, std::span<T> c) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = T(0);
      for (int p = 0; p < k; ++p) acc += a[std::size_t(i) * k + p] * b[std::size_t(p) * n + j];
      c[std::size_t(i) * n + j] = acc;
    }
  }
}

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> kernels,
                    std::span<const T> bias, std::span<T> output) {
  for (int f = 0; f < g.filters; ++f) {
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        T acc = T(0);
        for (int c = 0; c < g.channels; ++c) {
          for (int ky = 0; ky < g.kernel_h; ++ky) {
            const int iy = oy * g.stride + ky - g.pad_top;
            if (iy < 0 || iy >= g.height) continue;
            for (int kx = 0; kx < g.kernel_w; ++kx) {
              const int ix = ox * g.stride + kx - g.pad_left;
              if (ix < 0 || ix >= g.width) continue;
              acc += kernels[((std::size_t(f) * g.channels + c) * g.kernel_h + ky) * g.kernel_w +
                             kx] *
                     input[(std::size_t(c) * g.height + iy) * g.width + ix];
            }
          }
        }
        output[(std::size_t(f) * g.out_h + oy) * g.out_w + ox] = acc + bias[f];
      }
    }
  }
}

template <class T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input, std::span<const T> kernels,
                     std::span<const T> grad_output, std::span<T> grad_input,
                     std::span<T> grad_kernels, std::span<T> grad_bias) {
  for (int f = 0; f < g.filters; ++f) {
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        const T go = grad_output[(std::size_t(f) * g.out_h + oy) * g.out_w + ox];
        if (!grad_bias.empty()) grad_bias[f] += go;
        for (int c = 0; c < g.channels; ++c) {
          for (int ky = 0; ky < g.kernel_h; ++ky) {
            const int iy = oy * g.stride + ky - g.pad_top;
            if (iy < 0 || iy >= g.height) continue;
            for (int kx = 0; kx < g.kernel_w; ++kx) {
              const int ix = ox * g.stride + kx - g.pad_left;
              if (ix < 0 || ix >= g.width) continue;
              const std::size_t ki =
                  ((std::size_t(f) * g.channels + c) * g.kernel_h + ky) * g.kernel_w + kx;
              const std::size_t ii = (std::size_t(c) * g.height + iy) * g.width + ix;
              if (!grad_kernels.empty()) grad_kernels[ki] += go * input[ii];
              if (!grad_input.empty()) grad_input[ii] += go * kernels[ki];
            }
          }
        }
      }
    }
  }
}

template <class T>
void dense_forward(int m, int n, std::span<const T> weights, std::span<const T> input,
                   std::span<const T> bias, std::span<T> output) {
  for (int i = 0; i < m; ++i) {
    T acc = T(0);
    for (int j = 0; j < n; ++j) acc += weights[std::size_t(i) * n + j] * input[j];
    output[i] = acc + bias[i];
  }
}

template <class T>
void dense_backward(int m, int n, std::span<const T> weights, std::span<const T> input,
                    std::span<const T> grad_output, std::span<T> grad_input,
                    std::span<T> grad_weights, std::span<T> grad_bias) {
  for (int i = 0; i < m; ++i) {
    const T gi = grad_output[i];
    if (!grad_bias.empty()) grad_bias[i] += gi;
    for (int j = 0; j < n; ++j) {
      if (!grad_weights.empty()) grad_weights[std::size_t(i) * n + j] += gi * input[j];
      if (!grad_input.empty()) grad_input[j] += gi * weights[std::size_t(i) * n + j];
    }
  }
}

template <class T>
void max_pool_forward(int channels, int height, int width, int size, std::span<const T> input,
                      std::span<T> output, std::span<std::uint32_t> argmax) {
  const int oh = height / size;
  const int ow = width / size;
  for (int c = 0; c < channels; ++c) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        bool first = true;
        T best_v{};
        std::size_t best = 0;
        for (int dy = 0; dy < size; ++dy) {
          for (int dx = 0; dx < size; ++dx) {
            const std::size_t idx =
                (std::size_t(c) * height + oy * size + dy) * width + ox * size + dx;
            if (first || input[idx] > best_v) {
              best_v = input[idx];
              best = idx;
              first = false;
            }
          }
        }
        const std::size_t o = (std::size_t(c) * oh + oy) * ow + ox;
        output[o] = best_v;
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

#define AMX_INSTANTIATE(T)                                                                      \
  template void gemm<T>(int, int, int, std::span<const T>, std::span<const T>, std::span<T>);   \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,  \
                                  std::span<const T>, std::span<T>);                            \
  template void conv2d_backward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, \
                                   std::span<const T>, std::span<T>, std::span<T>,              \
                                   std::span<T>);                                               \
  template void dense_forward<T>(int, int, std::span<const T>, std::span<const T>,              \
                                 std::span<const T>, std::span<T>);                             \
  template void dense_backward<T>(int, int, std::span<const T>, std::span<const T>,             \
                                  std::span<const T>, std::span<T>, std::span<T>,               \
                                  std::span<T>);                                                \
  template void max_pool_forward<T>(int, int, int, int, std::span<const T>, std::span<T>,       \
                                    std::span<std::uint32_t>);

AMX_INSTANTIATE(float)
AMX_INSTANTIATE(double)

#undef AMX_INSTANTIATE

}  // namespace amx::kernels::reference
