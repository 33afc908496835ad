#include "remotedet/kernels.hpp"

#include <algorithm>

namespace remotedet::kernels {

namespace {
// Below this many multiply-adds the fork/join cost dominates.
constexpr std::int64_t kParallelWork = 1 << 15;
}  // namespace

void gemm_nn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k, std::int64_t n) {
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k, std::int64_t n) {
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      const double* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void transpose(const double* in, double* out, std::int64_t rows, std::int64_t cols) {
  constexpr std::int64_t kBlock = 32;
  for (std::int64_t r0 = 0; r0 < rows; r0 += kBlock) {
    for (std::int64_t c0 = 0; c0 < cols; c0 += kBlock) {
      const std::int64_t r1 = std::min(rows, r0 + kBlock);
      const std::int64_t c1 = std::min(cols, c0 + kBlock);
      for (std::int64_t r = r0; r < r1; ++r)
        for (std::int64_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
    }
  }
}

void im2col(const double* input, const ConvGeometry& g, double* cols) {
  const std::int64_t oh = g.out_h(), ow = g.out_w();
  const std::int64_t rows = g.patch_size();
#pragma omp parallel for schedule(static) if (rows * oh * ow > kParallelWork)
  for (std::int64_t row = 0; row < rows; ++row) {
    const std::int64_t kw = row % g.kernel_w;
    const std::int64_t kh = (row / g.kernel_w) % g.kernel_h;
    const std::int64_t c = row / (g.kernel_w * g.kernel_h);
    const double* plane = input + c * g.height * g.width;
    double* dst = cols + row * oh * ow;
    for (std::int64_t y = 0; y < oh; ++y) {
      const std::int64_t iy = y * g.stride - g.padding + kh;
      if (iy < 0 || iy >= g.height) {
        std::fill(dst + y * ow, dst + (y + 1) * ow, 0.0);
        continue;
      }
      for (std::int64_t x = 0; x < ow; ++x) {
        const std::int64_t ix = x * g.stride - g.padding + kw;
        dst[y * ow + x] = (ix >= 0 && ix < g.width) ? plane[iy * g.width + ix] : 0.0;
      }
    }
  }
}

void col2im(const double* cols, const ConvGeometry& g, double* grad_input) {
  const std::int64_t oh = g.out_h(), ow = g.out_w();
  const std::int64_t taps = g.kernel_h * g.kernel_w;
  // Parallel over input channels: each channel's rows of cols only touch that channel's plane.
#pragma omp parallel for schedule(static) if (g.patch_size() * oh * ow > kParallelWork)
  for (std::int64_t c = 0; c < g.channels; ++c) {
    double* plane = grad_input + c * g.height * g.width;
    for (std::int64_t tap = 0; tap < taps; ++tap) {
      const std::int64_t kh = tap / g.kernel_w, kw = tap % g.kernel_w;
      const double* src = cols + (c * taps + tap) * oh * ow;
      for (std::int64_t y = 0; y < oh; ++y) {
        const std::int64_t iy = y * g.stride - g.padding + kh;
        if (iy < 0 || iy >= g.height) continue;
        for (std::int64_t x = 0; x < ow; ++x) {
          const std::int64_t ix = x * g.stride - g.padding + kw;
          if (ix >= 0 && ix < g.width) plane[iy * g.width + ix] += src[y * ow + x];
        }
      }
    }
  }
}

void depthwise_forward(const double* input, const double* weight, const double* bias, double* out,
                       std::int64_t channels, std::int64_t height, std::int64_t width, std::int64_t kernel,
                       std::int64_t padding) {
#pragma omp parallel for schedule(static) if (channels * height * width * kernel * kernel > kParallelWork)
  for (std::int64_t c = 0; c < channels; ++c) {
    const double* plane = input + c * height * width;
    const double* w = weight + c * kernel * kernel;
    double* dst = out + c * height * width;
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t x = 0; x < width; ++x) {
        double acc = bias[c];
        for (std::int64_t kh = 0; kh < kernel; ++kh) {
          const std::int64_t iy = y - padding + kh;
          if (iy < 0 || iy >= height) continue;
          for (std::int64_t kw = 0; kw < kernel; ++kw) {
            const std::int64_t ix = x - padding + kw;
            if (ix < 0 || ix >= width) continue;
            acc += w[kh * kernel + kw] * plane[iy * width + ix];
          }
        }
        dst[y * width + x] = acc;
      }
    }
  }
}

void depthwise_backward(const double* input, const double* weight, const double* grad_out, double* grad_input,
                        double* grad_weight, double* grad_bias, std::int64_t channels, std::int64_t height,
                        std::int64_t width, std::int64_t kernel, std::int64_t padding) {
#pragma omp parallel for schedule(static) if (channels * height * width * kernel * kernel > kParallelWork)
  for (std::int64_t c = 0; c < channels; ++c) {
    const double* plane = input + c * height * width;
    const double* w = weight + c * kernel * kernel;
    const double* go = grad_out + c * height * width;
    double* gi = grad_input + c * height * width;
    double* gw = grad_weight + c * kernel * kernel;
    double gb = 0.0;
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t x = 0; x < width; ++x) {
        const double g = go[y * width + x];
        gb += g;
        for (std::int64_t kh = 0; kh < kernel; ++kh) {
          const std::int64_t iy = y - padding + kh;
          if (iy < 0 || iy >= height) continue;
          for (std::int64_t kw = 0; kw < kernel; ++kw) {
            const std::int64_t ix = x - padding + kw;
            if (ix < 0 || ix >= width) continue;
            gw[kh * kernel + kw] += g * plane[iy * width + ix];
            gi[iy * width + ix] += g * w[kh * kernel + kw];
          }
        }
      }
    }
    grad_bias[c] += gb;
  }
}

}  // namespace remotedet::kernels
