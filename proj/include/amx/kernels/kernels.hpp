#pragma once

// Numeric kernels behind the autodiff ops. The functions in namespace
// amx::kernels are the OpenMP-parallel versions used at run time; the ones in
// amx::kernels::reference are straightforward serial loops kept as the
// testing baseline. Both families share signatures.
//
// Gradient kernels accumulate (+=) into their outputs; an empty span means
// "not requested". Parallel loops split only over output elements, so results
// are bit-identical for any thread count.

#include <cstddef>
#include <cstdint>
#include <span>

namespace amx::kernels {

enum class Padding { kValid, kSame };

struct ConvGeometry {
  int channels = 0;
  int height = 0;
  int width = 0;
  int filters = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  int stride = 1;
  int pad_top = 0;
  int pad_left = 0;
  int pad_total_h = 0;
  int pad_total_w = 0;
  int out_h = 0;
  int out_w = 0;

  std::size_t input_size() const { return std::size_t(channels) * height * width; }
  std::size_t kernel_size() const { return std::size_t(filters) * channels * kernel_h * kernel_w; }
  std::size_t output_size() const { return std::size_t(filters) * out_h * out_w; }
  // Rows of the im2col matrix.
  std::size_t patch_size() const { return std::size_t(channels) * kernel_h * kernel_w; }
  std::size_t out_pixels() const { return std::size_t(out_h) * out_w; }
};

// "same" padding follows the usual convention: out = ceil(in / stride), the
// odd pixel of padding goes to the bottom/right. Throws DimensionError when
// the kernel does not fit the padded input.
ConvGeometry make_conv_geometry(int channels, int height, int width, int filters, int kernel_h,
                                int kernel_w, int stride, Padding padding);

// Thread-count control for the parallel kernels; no-ops without OpenMP.
void set_num_threads(int n);
int num_threads();

// C[m x n] = A[m x k] * B[k x n]  (row-major, overwrites C)
template <class T>
void gemm(int m, int n, int k, std::span<const T> a, std::span<const T> b, std::span<T> c);
// C[m x n] += A[m x k] * B[n x k]^T
template <class T>
void gemm_nt_acc(int m, int n, int k, std::span<const T> a, std::span<const T> b, std::span<T> c);
// C[m x n] = A[k x m]^T * B[k x n]  (overwrites C)
template <class T>
void gemm_tn(int m, int n, int k, std::span<const T> a, std::span<const T> b, std::span<T> c);

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> kernels,
                    std::span<const T> bias, std::span<T> output);
template <class T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input, std::span<const T> kernels,
                     std::span<const T> grad_output, std::span<T> grad_input,
                     std::span<T> grad_kernels, std::span<T> grad_bias);

// out[m] = W[m x n] * x[n] + b[m]
template <class T>
void dense_forward(int m, int n, std::span<const T> weights, std::span<const T> input,
                   std::span<const T> bias, std::span<T> output);
template <class T>
void dense_backward(int m, int n, std::span<const T> weights, std::span<const T> input,
                    std::span<const T> grad_output, std::span<T> grad_input,
                    std::span<T> grad_weights, std::span<T> grad_bias);

// argmax holds the flat input index chosen for every output cell (first
// row-major maximum on ties).
template <class T>
void max_pool_forward(int channels, int height, int width, int size, std::span<const T> input,
                      std::span<T> output, std::span<std::uint32_t> argmax);
template <class T>
void max_pool_backward(std::span<const std::uint32_t> argmax, std::span<const T> grad_output,
                       std::span<T> grad_input);

namespace reference {

template <class T>
void gemm(int m, int n, int k, std::span<const T> a, std::span<const T> b, std::span<T> c);

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> kernels,
                    std::span<const T> bias, std::span<T> output);
template <class T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input, std::span<const T> kernels,
                     std::span<const T> grad_output, std::span<T> grad_input,
                     std::span<T> grad_kernels, std::span<T> grad_bias);

template <class T>
void dense_forward(int m, int n, std::span<const T> weights, std::span<const T> input,
                   std::span<const T> bias, std::span<T> output);
template <class T>
void dense_backward(int m, int n, std::span<const T> weights, std::span<const T> input,
                    std::span<const T> grad_output, std::span<T> grad_input,
                    std::span<T> grad_weights, std::span<T> grad_bias);

template <class T>
void max_pool_forward(int channels, int height, int width, int size, std::span<const T> input,
                      std::span<T> output, std::span<std::uint32_t> argmax);

}  // namespace reference

}  // namespace amx::kernels
