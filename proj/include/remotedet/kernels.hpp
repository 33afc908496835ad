#pragma once

// OpenMP-parallel inner kernels shared by the tensor ops. Every parallel loop
// partitions output elements, so each element is produced by exactly one thread
// in a fixed summation order and results do not depend on the thread count.

#include <cstdint>

namespace remotedet::kernels {

/// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k, std::int64_t n);

/// C[M,N] += A[K,M]^T * B[K,N]
void gemm_tn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k, std::int64_t n);

/// out[cols, rows] = in[rows, cols]^T
void transpose(const double* in, double* out, std::int64_t rows, std::int64_t cols);

struct ConvGeometry {
  std::int64_t channels, height, width;
  std::int64_t kernel_h, kernel_w;
  std::int64_t stride, padding;
  std::int64_t out_h() const { return (height + 2 * padding - kernel_h) / stride + 1; }
  std::int64_t out_w() const { return (width + 2 * padding - kernel_w) / stride + 1; }
  std::int64_t patch_size() const { return channels * kernel_h * kernel_w; }
};

/// Unfolds input[C,H,W] into cols[C*kH*kW, H'*W'] with zero padding.
void im2col(const double* input, const ConvGeometry& g, double* cols);

/// Scatter-adds cols back into grad_input[C,H,W] (adjoint of im2col).
void col2im(const double* cols, const ConvGeometry& g, double* grad_input);

/// Per-channel k x k correlation with stride 1 and zero padding.
void depthwise_forward(const double* input, const double* weight, const double* bias, double* out,
                       std::int64_t channels, std::int64_t height, std::int64_t width, std::int64_t kernel,
                       std::int64_t padding);

void depthwise_backward(const double* input, const double* weight, const double* grad_out, double* grad_input,
                        double* grad_weight, double* grad_bias, std::int64_t channels, std::int64_t height,
                        std::int64_t width, std::int64_t kernel, std::int64_t padding);

}  // namespace remotedet::kernels
