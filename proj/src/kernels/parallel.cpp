#include "amx/kernels/kernels.hpp"

#include <algorithm>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "amx/error.hpp"

namespace amx::kernels {

ConvGeometry make_conv_geometry(int channels, int height, int width, int filters, int kernel_h,
                                int kernel_w, int stride, Padding padding) {
  if (channels <= 0 || height <= 0 || width <= 0 || filters <= 0 || kernel_h <= 0 ||
      kernel_w <= 0) {
    throw DimensionError("conv2d: all dimensions must be positive");
  }
  if (stride <= 0) throw ContractError("conv2d: stride must be positive");
  ConvGeometry g;
  g.channels = channels;
  g.height = height;
  g.width = width;
  g.filters = filters;
  g.kernel_h = kernel_h;
  g.kernel_w = kernel_w;
  g.stride = stride;
  if (padding == Padding::kSame) {
    const int oh = (height + stride - 1) / stride;
    const int ow = (width + stride - 1) / stride;
    g.pad_total_h = std::max((oh - 1) * stride + kernel_h - height, 0);
    g.pad_total_w = std::max((ow - 1) * stride + kernel_w - width, 0);
    g.pad_top = g.pad_total_h / 2;
    g.pad_left = g.pad_total_w / 2;
  }
  if (kernel_h > height + g.pad_total_h || kernel_w > width + g.pad_total_w) {
    throw DimensionError("conv2d: kernel " + std::to_string(kernel_h) + "x" +
                         std::to_string(kernel_w) + " larger than padded input " +
                         std::to_string(height + g.pad_total_h) + "x" +
                         std::to_string(width + g.pad_total_w));
  }
  g.out_h = (height + g.pad_total_h - kernel_h) / stride + 1;
  g.out_w = (width + g.pad_total_w - kernel_w) / stride + 1;
  return g;
}

void set_num_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

// Register tile width: 48 floats or 24 doubles per row.
template <class T>
constexpr int kTile = 192 / int(sizeof(T));

// C[i0..i0+rows) = A*B (or C += A*B) over all n columns, where
// A(i, p) = a[i * si + p * sp]. Every product sum runs over p in increasing
// order before it touches C.
template <bool Accumulate, class T>
void gemm_rows(int i0, int rows, int n, int k, const T* a, std::size_t si, std::size_t sp, const T* b, T* c) {
  constexpr int W = kTile<T>;
  int j0 = 0;
  if (rows == 4) {
    for (; j0 + W <= n; j0 += W) {
      T acc[4][W];
      for (int r = 0; r < 4; ++r)
        for (int j = 0; j < W; ++j) acc[r][j] = T(0);
      for (int p = 0; p < k; ++p) {
        const T* bp = b + std::size_t(p) * n + j0;
        for (int r = 0; r < 4; ++r) {
          const T v = a[(i0 + r) * si + p * sp];
#pragma omp simd
          for (int j = 0; j < W; ++j) acc[r][j] += v * bp[j];
        }
      }
      for (int r = 0; r < 4; ++r) {
        T* dst = c + std::size_t(i0 + r) * n + j0;
        if constexpr (Accumulate) {
          for (int j = 0; j < W; ++j) dst[j] += acc[r][j];
        } else {
          std::copy(acc[r], acc[r] + W, dst);
        }
      }
    }
  }
  if (j0 == n) return;
  std::vector<T> sums(std::size_t(n - j0));
  for (int r = 0; r < rows; ++r) {
    std::fill(sums.begin(), sums.end(), T(0));
    for (int p = 0; p < k; ++p) {
      const T v = a[(i0 + r) * si + p * sp];
      const T* bp = b + std::size_t(p) * n + j0;
#pragma omp simd
      for (int j = 0; j < n - j0; ++j) sums[j] += v * bp[j];
    }
    T* ci = c + std::size_t(i0 + r) * n + j0;
    for (int j = 0; j < n - j0; ++j) {
      if constexpr (Accumulate) {
        ci[j] += sums[j];
      } else {
        ci[j] = sums[j];
      }
    }
  }
}

template <class T>
void im2col(const ConvGeometry& g, const T* input, T* cols) {
  const int P = g.out_h * g.out_w;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        T* row = cols + (std::size_t(c * g.kernel_h + ky) * g.kernel_w + kx) * P;
        const T* plane = input + std::size_t(c) * g.height * g.width;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride + ky - g.pad_top;
          T* dst = row + std::size_t(oy) * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = plane + std::size_t(iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride + kx - g.pad_left;
            dst[ox] = (ix < 0 || ix >= g.width) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

// grad_input += col2im(cols); parallel over channels so no two threads touch
// the same input plane.
template <class T>
void col2im_acc(const ConvGeometry& g, const T* cols, T* grad_input) {
  const int P = g.out_h * g.out_w;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.channels; ++c) {
    T* plane = grad_input + std::size_t(c) * g.height * g.width;
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        const T* row = cols + (std::size_t(c * g.kernel_h + ky) * g.kernel_w + kx) * P;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride + ky - g.pad_top;
          if (iy < 0 || iy >= g.height) continue;
          T* dst = plane + std::size_t(iy) * g.width;
          const T* src = row + std::size_t(oy) * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride + kx - g.pad_left;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <class T>
constexpr int kRowTile = 128 / int(sizeof(T));
template <class T>
constexpr int kSlack = kRowTile<T>;

// Stride-1 valid correlation of a zero-padded input. in is channels x ph x pw
// with at least kSlack readable elements past the end; w is filters x
// (channels * kh * kw); out is filters x (ph - kh + 1) x (pw - kw + 1). Each
// output sums its taps in (channel, ky, kx) order.
template <class T>
struct DirectConv {
  const T* in;
  int channels, ph, pw;
  int kh, kw;
  const T* w;
  int filters;
  int out_h() const { return ph - kh + 1; }
  int out_w() const { return pw - kw + 1; }
};

template <int R, bool Accumulate, class T>
void direct_row(const DirectConv<T>& d, int f0, int oy, T* out) {
  constexpr int TW = kRowTile<T>;
  const int ow = d.out_w();
  const std::size_t K = std::size_t(d.channels) * d.kh * d.kw;
  for (int ox0 = 0; ox0 < ow; ox0 += TW) {
    const int n = std::min(TW, ow - ox0);
    T acc[R][TW] = {};
    for (int c = 0; c < d.channels; ++c) {
      for (int ky = 0; ky < d.kh; ++ky) {
        const T* row = d.in + (std::size_t(c) * d.ph + oy + ky) * d.pw + ox0;
        const T* wk = d.w + std::size_t(f0) * K + (std::size_t(c) * d.kh + ky) * d.kw;
        for (int kx = 0; kx < d.kw; ++kx) {
          for (int r = 0; r < R; ++r) {
            const T v = wk[r * K + kx];
#pragma omp simd
            for (int j = 0; j < TW; ++j) acc[r][j] += v * row[kx + j];
          }
        }
      }
    }
    for (int r = 0; r < R; ++r) {
      T* dst = out + (std::size_t(f0 + r) * d.out_h() + oy) * ow + ox0;
      for (int j = 0; j < n; ++j) {
        if constexpr (Accumulate) {
          dst[j] += acc[r][j];
        } else {
          dst[j] = acc[r][j];
        }
      }
    }
  }
}

template <bool Accumulate, class T>
void direct_conv(const DirectConv<T>& d, T* out) {
  const int blocks = (d.filters + 3) / 4;
  const int oh = d.out_h();
#pragma omp parallel for schedule(static)
  for (int item = 0; item < blocks * oh; ++item) {
    const int f0 = (item / oh) * 4;
    const int oy = item % oh;
    switch (std::min(4, d.filters - f0)) {
      case 1: direct_row<1, Accumulate>(d, f0, oy, out); break;
      case 2: direct_row<2, Accumulate>(d, f0, oy, out); break;
      case 3: direct_row<3, Accumulate>(d, f0, oy, out); break;
      default: direct_row<4, Accumulate>(d, f0, oy, out); break;
    }
  }
}

// Copies channels x h x w into a zeroed channels x ph x pw buffer at (top, left).
template <class T>
std::vector<T> pad_planes(const T* src, int channels, int h, int w, int ph, int pw, int top, int left) {
  std::vector<T> buf(std::size_t(channels) * ph * pw + kSlack<T>, T(0));
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < h; ++y) {
      const T* s = src + (std::size_t(c) * h + y) * w;
      std::copy(s, s + w, buf.data() + (std::size_t(c) * ph + top + y) * pw + left);
    }
  }
  return buf;
}

}  // namespace

template <class T>
void gemm(int m, int n, int k, std::span<const T> a, std::span<const T> b, std::span<T> c) {
  const int blocks = (m + 3) / 4;
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < blocks; ++blk) {
    const int i0 = blk * 4;
    gemm_rows<false>(i0, std::min(4, m - i0), n, k, a.data(), std::size_t(k), std::size_t(1), b.data(), c.data());
  }
}

template <class T>
void gemm_nt_acc(int m, int n, int k, std::span<const T> a, std::span<const T> b, std::span<T> c) {
  const int blocks = (m + 3) / 4;
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < blocks; ++blk) {
    const int i0 = blk * 4;
    const int rows = std::min(4, m - i0);
    const T* a0 = a.data() + std::size_t(i0) * k;
    const T* a1 = a.data() + std::size_t(i0 + std::min(1, rows - 1)) * k;
    const T* a2 = a.data() + std::size_t(i0 + std::min(2, rows - 1)) * k;
    const T* a3 = a.data() + std::size_t(i0 + std::min(3, rows - 1)) * k;
    for (int j = 0; j < n; j += 2) {
      const int cols = std::min(2, n - j);
      const T* b0 = b.data() + std::size_t(j) * k;
      const T* b1 = b.data() + std::size_t(j + cols - 1) * k;
      T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0), t0 = T(0), t1 = T(0), t2 = T(0), t3 = T(0);
#pragma omp simd reduction(+ : s0, s1, s2, s3, t0, t1, t2, t3)
      for (int p = 0; p < k; ++p) {
        const T u = b0[p], w = b1[p];
        const T x0 = a0[p], x1 = a1[p], x2 = a2[p], x3 = a3[p];
        s0 += x0 * u;
        s1 += x1 * u;
        s2 += x2 * u;
        s3 += x3 * u;
        t0 += x0 * w;
        t1 += x1 * w;
        t2 += x2 * w;
        t3 += x3 * w;
      }
      const T first[4] = {s0, s1, s2, s3};
      const T second[4] = {t0, t1, t2, t3};
      for (int r = 0; r < rows; ++r) {
        T* ci = c.data() + std::size_t(i0 + r) * n + j;
        ci[0] += first[r];
        if (cols == 2) ci[1] += second[r];
      }
    }
  }
}

template <class T>
void gemm_tn(int m, int n, int k, std::span<const T> a, std::span<const T> b, std::span<T> c) {
  const int blocks = (m + 3) / 4;
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < blocks; ++blk) {
    const int i0 = blk * 4;
    gemm_rows<false>(i0, std::min(4, m - i0), n, k, a.data(), std::size_t(1), std::size_t(m), b.data(), c.data());
  }
}

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> kernels,
                    std::span<const T> bias, std::span<T> output) {
  const int P = g.out_h * g.out_w;
  if (g.stride == 1) {
    const int ph = g.height + g.pad_total_h, pw = g.width + g.pad_total_w;
    const auto padded = pad_planes(input.data(), g.channels, g.height, g.width, ph, pw, g.pad_top, g.pad_left);
    direct_conv<false>(DirectConv<T>{padded.data(), g.channels, ph, pw, g.kernel_h, g.kernel_w, kernels.data(), g.filters},
                       output.data());
  } else {
    const int K = static_cast<int>(g.patch_size());
    std::vector<T> cols(std::size_t(K) * P);
    im2col(g, input.data(), cols.data());
    gemm<T>(g.filters, P, K, kernels, cols, output);
  }
#pragma omp parallel for schedule(static)
  for (int f = 0; f < g.filters; ++f) {
    T* row = output.data() + std::size_t(f) * P;
    const T b = bias[f];
    for (int p = 0; p < P; ++p) row[p] += b;
  }
}

template <class T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input, std::span<const T> kernels,
                     std::span<const T> grad_output, std::span<T> grad_input,
                     std::span<T> grad_kernels, std::span<T> grad_bias) {
  const int P = g.out_h * g.out_w;
  const int K = static_cast<int>(g.patch_size());
  if (!grad_bias.empty()) {
    for (int f = 0; f < g.filters; ++f) {
      const T* row = grad_output.data() + std::size_t(f) * P;
      T acc = T(0);
      for (int p = 0; p < P; ++p) acc += row[p];
      grad_bias[f] += acc;
    }
  }
  if (!grad_kernels.empty()) {
    std::vector<T> cols(std::size_t(K) * P);
    im2col(g, input.data(), cols.data());
    gemm_nt_acc<T>(g.filters, K, P, grad_output, cols, grad_kernels);
  }
  if (grad_input.empty()) return;
  if (g.stride != 1) {
    std::vector<T> grad_cols(std::size_t(K) * P);
    gemm_tn<T>(K, P, g.filters, kernels, grad_output, grad_cols);
    col2im_acc(g, grad_cols.data(), grad_input.data());
    return;
  }
  // Full correlation of grad_output with the flipped, channel-transposed kernels.
  const int kh = g.kernel_h, kw = g.kernel_w;
  const int area = kh * kw;
  std::vector<T> flipped(std::size_t(K) * g.filters);
  for (int f = 0; f < g.filters; ++f)
    for (int c = 0; c < g.channels; ++c)
      for (int t = 0; t < area; ++t)
        flipped[(std::size_t(c) * g.filters + f) * area + (area - 1 - t)] =
            kernels[(std::size_t(f) * g.channels + c) * area + t];
  const int ph = g.height + kh - 1, pw = g.width + kw - 1;
  const auto padded = pad_planes(grad_output.data(), g.filters, g.out_h, g.out_w, ph, pw, kh - 1 - g.pad_top,
                                 kw - 1 - g.pad_left);
  direct_conv<true>(DirectConv<T>{padded.data(), g.filters, ph, pw, kh, kw, flipped.data(), g.channels},
                    grad_input.data());
}

template <class T>
void dense_forward(int m, int n, std::span<const T> weights, std::span<const T> input,
                   std::span<const T> bias, std::span<T> output) {
  const int blocks = (m + 3) / 4;
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < blocks; ++blk) {
    const int i0 = blk * 4;
    const int rows = std::min(4, m - i0);
    const T* w0 = weights.data() + std::size_t(i0) * n;
    const T* w1 = weights.data() + std::size_t(i0 + std::min(1, rows - 1)) * n;
    const T* w2 = weights.data() + std::size_t(i0 + std::min(2, rows - 1)) * n;
    const T* w3 = weights.data() + std::size_t(i0 + std::min(3, rows - 1)) * n;
    T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0);
#pragma omp simd reduction(+ : s0, s1, s2, s3)
    for (int j = 0; j < n; ++j) {
      const T x = input[j];
      s0 += w0[j] * x;
      s1 += w1[j] * x;
      s2 += w2[j] * x;
      s3 += w3[j] * x;
    }
    const T sums[4] = {s0, s1, s2, s3};
    for (int r = 0; r < rows; ++r) output[i0 + r] = sums[r] + bias[i0 + r];
  }
}

template <class T>
void dense_backward(int m, int n, std::span<const T> weights, std::span<const T> input,
                    std::span<const T> grad_output, std::span<T> grad_input,
                    std::span<T> grad_weights, std::span<T> grad_bias) {
  if (!grad_bias.empty()) {
    for (int i = 0; i < m; ++i) grad_bias[i] += grad_output[i];
  }
  if (!grad_weights.empty()) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
      const T gi = grad_output[i];
      if (gi == T(0)) continue;
      T* gw = grad_weights.data() + std::size_t(i) * n;
#pragma omp simd
      for (int j = 0; j < n; ++j) gw[j] += gi * input[j];
    }
  }
  if (!grad_input.empty()) {
    // Rows with a zero output gradient contribute nothing.
    std::vector<int> live;
    for (int i = 0; i < m; ++i)
      if (grad_output[i] != T(0)) live.push_back(i);
    const int rows = static_cast<int>(live.size());
    constexpr int kChunk = 512;
    const int chunks = (n + kChunk - 1) / kChunk;
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < chunks; ++ch) {
      const int j0 = ch * kChunk;
      const int j1 = std::min(n, j0 + kChunk);
      T* gx = grad_input.data();
      int r = 0;
      for (; r + 4 <= rows; r += 4) {
        const T g0 = grad_output[live[r]], g1 = grad_output[live[r + 1]];
        const T g2 = grad_output[live[r + 2]], g3 = grad_output[live[r + 3]];
        const T* w0 = weights.data() + std::size_t(live[r]) * n;
        const T* w1 = weights.data() + std::size_t(live[r + 1]) * n;
        const T* w2 = weights.data() + std::size_t(live[r + 2]) * n;
        const T* w3 = weights.data() + std::size_t(live[r + 3]) * n;
#pragma omp simd
        for (int j = j0; j < j1; ++j) {
          T v = gx[j];
          v += g0 * w0[j];
          v += g1 * w1[j];
          v += g2 * w2[j];
          v += g3 * w3[j];
          gx[j] = v;
        }
      }
      for (; r < rows; ++r) {
        const T gi = grad_output[live[r]];
        const T* w = weights.data() + std::size_t(live[r]) * n;
#pragma omp simd
        for (int j = j0; j < j1; ++j) gx[j] += gi * w[j];
      }
    }
  }
}

template <class T>
void max_pool_forward(int channels, int height, int width, int size, std::span<const T> input,
                      std::span<T> output, std::span<std::uint32_t> argmax) {
  const int oh = height / size;
  const int ow = width / size;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        std::size_t best = (std::size_t(c) * height + oy * size) * width + ox * size;
        T best_v = input[best];
        for (int dy = 0; dy < size; ++dy) {
          for (int dx = 0; dx < size; ++dx) {
            const std::size_t idx =
                (std::size_t(c) * height + oy * size + dy) * width + ox * size + dx;
            if (input[idx] > best_v) {
              best_v = input[idx];
              best = idx;
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

template <class T>
void max_pool_backward(std::span<const std::uint32_t> argmax, std::span<const T> grad_output,
                       std::span<T> grad_input) {
  // Windows do not overlap, so each input cell receives at most one write.
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(argmax.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t o = 0; o < n; ++o) grad_input[argmax[o]] += grad_output[o];
}

#define AMX_INSTANTIATE(T)                                                                       \
  template void gemm<T>(int, int, int, std::span<const T>, std::span<const T>, std::span<T>);    \
  template void gemm_nt_acc<T>(int, int, int, std::span<const T>, std::span<const T>,            \
                               std::span<T>);                                                    \
  template void gemm_tn<T>(int, int, int, std::span<const T>, std::span<const T>, std::span<T>); \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,   \
                                  std::span<const T>, std::span<T>);                             \
  template void conv2d_backward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,  \
                                   std::span<const T>, std::span<T>, std::span<T>,               \
                                   std::span<T>);                                                \
  template void dense_forward<T>(int, int, std::span<const T>, std::span<const T>,               \
                                 std::span<const T>, std::span<T>);                              \
  template void dense_backward<T>(int, int, std::span<const T>, std::span<const T>,              \
                                  std::span<const T>, std::span<T>, std::span<T>, std::span<T>); \
  template void max_pool_forward<T>(int, int, int, int, std::span<const T>, std::span<T>,        \
                                    std::span<std::uint32_t>);                                   \
  template void max_pool_backward<T>(std::span<const std::uint32_t>, std::span<const T>,         \
                                     std::span<T>);

AMX_INSTANTIATE(float)
AMX_INSTANTIATE(double)

#undef AMX_INSTANTIATE

}  // namespace amx::kernels
