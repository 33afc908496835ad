#include "remotedet/ops.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "remotedet/kernels.hpp"

namespace remotedet {

namespace {

kernels::ConvGeometry conv_geometry(const Tensor& input, const Tensor& weight, int stride, int padding) {
  if (input.rank() != 3) throw DimensionError("conv2d: input must be [C,H,W], got " + shape_to_string(input.shape()));
  if (weight.rank() != 4) {
    throw DimensionError("conv2d: weight must be [C_out,C_in,kH,kW], got " + shape_to_string(weight.shape()));
  }
  if (weight.dim(1) != input.dim(0)) {
    throw DimensionError("conv2d: input " + shape_to_string(input.shape()) + " incompatible with weight " +
                         shape_to_string(weight.shape()));
  }
  if (weight.dim(2) % 2 == 0 || weight.dim(3) % 2 == 0) {
    throw DimensionError("conv2d: kernel must be odd, got " + shape_to_string(weight.shape()));
  }
  if (stride < 1 || padding < 0) throw ValidationError("conv2d: stride must be >= 1 and padding >= 0");
  kernels::ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), weight.dim(2), weight.dim(3), stride, padding};
  if (g.height + 2 * padding < g.kernel_h || g.width + 2 * padding < g.kernel_w) {
    throw DimensionError("conv2d: kernel " + shape_to_string(weight.shape()) + " larger than padded input " +
                         shape_to_string(input.shape()));
  }
  return g;
}

bool is_pointwise(const kernels::ConvGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.padding == 0;
}

std::int64_t last_dim(const Tensor& t, const char* what) {
  if (t.rank() == 0) throw DimensionError(std::string(what) + ": rank-0 input");
  return t.shape().back();
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  const auto g = conv_geometry(input, weight, stride, padding);
  const std::int64_t c_out = weight.dim(0);
  require_shape(bias, {c_out}, "conv2d bias");
  const std::int64_t oh = g.out_h(), ow = g.out_w(), pixels = oh * ow;
  Tensor out({c_out, oh, ow});
  for (std::int64_t c = 0; c < c_out; ++c) std::fill_n(out.data() + c * pixels, pixels, bias[c]);
  if (is_pointwise(g)) {
    kernels::gemm_nn(weight.data(), input.data(), out.data(), c_out, g.channels, pixels);
    return out;
  }
  std::vector<double> cols(static_cast<std::size_t>(g.patch_size() * pixels));
  kernels::im2col(input.data(), g, cols.data());
  kernels::gemm_nn(weight.data(), cols.data(), out.data(), c_out, g.patch_size(), pixels);
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out, int stride,
                          int padding) {
  const auto g = conv_geometry(input, weight, stride, padding);
  const std::int64_t c_out = weight.dim(0);
  const std::int64_t pixels = g.out_h() * g.out_w();
  require_shape(grad_out, {c_out, g.out_h(), g.out_w()}, "conv2d_backward grad_out");
  const std::int64_t patch = g.patch_size();

  ConvGrads grads{Tensor::zeros_like(input), Tensor::zeros_like(weight), Tensor({c_out})};
  for (std::int64_t c = 0; c < c_out; ++c) {
    double s = 0.0;
    const double* row = grad_out.data() + c * pixels;
    for (std::int64_t p = 0; p < pixels; ++p) s += row[p];
    grads.bias[static_cast<std::size_t>(c)] = s;
  }

  std::vector<double> cols;
  const double* cols_ptr = input.data();
  if (!is_pointwise(g)) {
    cols.resize(static_cast<std::size_t>(patch * pixels));
    kernels::im2col(input.data(), g, cols.data());
    cols_ptr = cols.data();
  }
  // grad_weight[C_out, patch] = grad_out[C_out, P] * cols^T
  std::vector<double> cols_t(static_cast<std::size_t>(patch * pixels));
  kernels::transpose(cols_ptr, cols_t.data(), patch, pixels);
  kernels::gemm_nn(grad_out.data(), cols_t.data(), grads.weight.data(), c_out, pixels, patch);

  // grad_cols[patch, P] = weight^T * grad_out
  if (is_pointwise(g)) {
    kernels::gemm_tn(weight.data(), grad_out.data(), grads.input.data(), patch, c_out, pixels);
  } else {
    std::vector<double> grad_cols(static_cast<std::size_t>(patch * pixels), 0.0);
    kernels::gemm_tn(weight.data(), grad_out.data(), grad_cols.data(), patch, c_out, pixels);
    kernels::col2im(grad_cols.data(), g, grads.input.data());
  }
  return grads;
}

Tensor depthwise_conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int padding) {
  if (input.rank() != 3 || weight.rank() != 3 || weight.dim(0) != input.dim(0) || weight.dim(1) != weight.dim(2)) {
    throw DimensionError("depthwise_conv2d: input " + shape_to_string(input.shape()) + " incompatible with weight " +
                         shape_to_string(weight.shape()));
  }
  const std::int64_t k = weight.dim(1);
  if (k % 2 == 0 || padding != (k - 1) / 2) {
    throw DimensionError("depthwise_conv2d: padding " + std::to_string(padding) + " does not preserve size for kernel " +
                         std::to_string(k));
  }
  require_shape(bias, {input.dim(0)}, "depthwise_conv2d bias");
  Tensor out = Tensor::zeros_like(input);
  kernels::depthwise_forward(input.data(), weight.data(), bias.data(), out.data(), input.dim(0), input.dim(1),
                             input.dim(2), k, padding);
  return out;
}

ConvGrads depthwise_conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                                    int padding) {
  require_same_shape(input, grad_out, "depthwise_conv2d_backward");
  if (weight.rank() != 3 || weight.dim(0) != input.dim(0)) {
    throw DimensionError("depthwise_conv2d_backward: weight " + shape_to_string(weight.shape()) +
                         " incompatible with input " + shape_to_string(input.shape()));
  }
  ConvGrads grads{Tensor::zeros_like(input), Tensor::zeros_like(weight), Tensor({input.dim(0)})};
  kernels::depthwise_backward(input.data(), weight.data(), grad_out.data(), grads.input.data(), grads.weight.data(),
                              grads.bias.data(), input.dim(0), input.dim(1), input.dim(2), weight.dim(1), padding);
  return grads;
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  const std::int64_t d_in = last_dim(input, "linear");
  if (weight.rank() != 2 || weight.dim(0) != d_in) {
    throw DimensionError("linear: input " + shape_to_string(input.shape()) + " incompatible with weight " +
                         shape_to_string(weight.shape()));
  }
  const std::int64_t d_out = weight.dim(1);
  require_shape(bias, {d_out}, "linear bias");
  const std::int64_t rows = static_cast<std::int64_t>(input.size()) / std::max<std::int64_t>(d_in, 1);
  Shape out_shape = input.shape();
  out_shape.back() = d_out;
  Tensor out(out_shape);
  for (std::int64_t r = 0; r < rows; ++r) std::copy_n(bias.data(), d_out, out.data() + r * d_out);
  kernels::gemm_nn(input.data(), weight.data(), out.data(), rows, d_in, d_out);
  return out;
}

LinearGrads linear_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out) {
  const std::int64_t d_in = last_dim(input, "linear_backward");
  const std::int64_t d_out = weight.dim(1);
  const std::int64_t rows = static_cast<std::int64_t>(input.size()) / std::max<std::int64_t>(d_in, 1);
  Shape expected = input.shape();
  expected.back() = d_out;
  require_shape(grad_out, expected, "linear_backward grad_out");

  LinearGrads grads{Tensor::zeros_like(input), Tensor::zeros_like(weight), Tensor({d_out})};
  std::vector<double> weight_t(static_cast<std::size_t>(d_in * d_out));
  kernels::transpose(weight.data(), weight_t.data(), d_in, d_out);
  kernels::gemm_nn(grad_out.data(), weight_t.data(), grads.input.data(), rows, d_out, d_in);
  kernels::gemm_tn(input.data(), grad_out.data(), grads.weight.data(), d_in, rows, d_out);
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t j = 0; j < d_out; ++j) grads.bias[static_cast<std::size_t>(j)] += grad_out[r * d_out + j];
  return grads;
}

Tensor layer_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::int64_t d = last_dim(input, "layer_norm");
  require_shape(gamma, {d}, "layer_norm gamma");
  require_shape(beta, {d}, "layer_norm beta");
  if (d < 1) throw DimensionError("layer_norm: empty last axis");
  Tensor out = Tensor::zeros_like(input);
  const std::int64_t rows = static_cast<std::int64_t>(input.size()) / d;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* x = input.data() + r * d;
    double mean = 0.0;
    for (std::int64_t i = 0; i < d; ++i) mean += x[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::int64_t i = 0; i < d; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    double* y = out.data() + r * d;
    for (std::int64_t i = 0; i < d; ++i) y[i] = (x[i] - mean) * inv * gamma[i] + beta[i];
  }
  return out;
}

LayerNormGrads layer_norm_backward(const Tensor& input, const Tensor& gamma, const Tensor& grad_out, double eps) {
  require_same_shape(input, grad_out, "layer_norm_backward");
  const std::int64_t d = last_dim(input, "layer_norm_backward");
  require_shape(gamma, {d}, "layer_norm_backward gamma");
  LayerNormGrads grads{Tensor::zeros_like(input), Tensor({d}), Tensor({d})};
  const std::int64_t rows = static_cast<std::int64_t>(input.size()) / d;
  std::vector<double> xhat(static_cast<std::size_t>(d)), gxhat(static_cast<std::size_t>(d));
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* x = input.data() + r * d;
    const double* gy = grad_out.data() + r * d;
    double mean = 0.0;
    for (std::int64_t i = 0; i < d; ++i) mean += x[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::int64_t i = 0; i < d; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    double mean_g = 0.0, mean_gx = 0.0;
    for (std::int64_t i = 0; i < d; ++i) {
      xhat[i] = (x[i] - mean) * inv;
      gxhat[i] = gy[i] * gamma[i];
      grads.gamma[i] += gy[i] * xhat[i];
      grads.beta[i] += gy[i];
      mean_g += gxhat[i];
      mean_gx += gxhat[i] * xhat[i];
    }
    mean_g /= static_cast<double>(d);
    mean_gx /= static_cast<double>(d);
    double* gx = grads.input.data() + r * d;
    for (std::int64_t i = 0; i < d; ++i) gx[i] = inv * (gxhat[i] - mean_g - xhat[i] * mean_gx);
  }
  return grads;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu(double x) { return x * sigmoid(x); }

double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

namespace {
template <class F>
Tensor map(const Tensor& x, F f) {
  Tensor out = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}
template <class F>
Tensor map_grad(const Tensor& x, const Tensor& g, F f) {
  require_same_shape(x, g, "activation backward");
  Tensor out = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = g[i] * f(x[i]);
  return out;
}
}  // namespace

Tensor sigmoid(const Tensor& x) { return map(x, [](double v) { return sigmoid(v); }); }
Tensor silu(const Tensor& x) { return map(x, [](double v) { return silu(v); }); }
Tensor gelu(const Tensor& x) { return map(x, [](double v) { return gelu(v); }); }
Tensor softplus(const Tensor& x) { return map(x, [](double v) { return softplus(v); }); }
Tensor silu_backward(const Tensor& x, const Tensor& g) { return map_grad(x, g, [](double v) { return silu_grad(v); }); }
Tensor gelu_backward(const Tensor& x, const Tensor& g) { return map_grad(x, g, [](double v) { return gelu_grad(v); }); }

namespace {
// Flat index of the first maximum inside the pooling window around (y, x).
std::int64_t window_argmax(const double* plane, std::int64_t h, std::int64_t w, std::int64_t y, std::int64_t x,
                           std::int64_t radius) {
  std::int64_t best = -1;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::int64_t iy = std::max<std::int64_t>(0, y - radius); iy <= std::min(h - 1, y + radius); ++iy) {
    for (std::int64_t ix = std::max<std::int64_t>(0, x - radius); ix <= std::min(w - 1, x + radius); ++ix) {
      const double v = plane[iy * w + ix];
      if (best < 0 || v > best_v) {
        best = iy * w + ix;
        best_v = v;
      }
    }
  }
  return best;
}
}  // namespace

Tensor max_pool2d(const Tensor& input, int kernel) {
  if (input.rank() != 3 || kernel % 2 == 0) throw DimensionError("max_pool2d: needs [C,H,W] input and odd kernel");
  const std::int64_t c = input.dim(0), h = input.dim(1), w = input.dim(2), r = kernel / 2;
  Tensor out = Tensor::zeros_like(input);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const double* plane = input.data() + ch * h * w;
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) out.at(ch, y, x) = plane[window_argmax(plane, h, w, y, x, r)];
  }
  return out;
}

Tensor max_pool2d_backward(const Tensor& input, int kernel, const Tensor& grad_out) {
  require_same_shape(input, grad_out, "max_pool2d_backward");
  const std::int64_t c = input.dim(0), h = input.dim(1), w = input.dim(2), r = kernel / 2;
  Tensor grad = Tensor::zeros_like(input);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const double* plane = input.data() + ch * h * w;
    double* gplane = grad.data() + ch * h * w;
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) gplane[window_argmax(plane, h, w, y, x, r)] += grad_out.at(ch, y, x);
  }
  return grad;
}

Tensor upsample_nearest2x(const Tensor& input) {
  if (input.rank() != 3) throw DimensionError("upsample_nearest2x: needs [C,H,W] input");
  const std::int64_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  Tensor out({c, 2 * h, 2 * w});
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < 2 * h; ++y)
      for (std::int64_t x = 0; x < 2 * w; ++x) out.at(ch, y, x) = input.at(ch, y / 2, x / 2);
  return out;
}

Tensor upsample_nearest2x_backward(const Tensor& grad_out) {
  const std::int64_t c = grad_out.dim(0), h = grad_out.dim(1) / 2, w = grad_out.dim(2) / 2;
  Tensor grad({c, h, w});
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < 2 * h; ++y)
      for (std::int64_t x = 0; x < 2 * w; ++x) grad.at(ch, y / 2, x / 2) += grad_out.at(ch, y, x);
  return grad;
}

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const std::int64_t h = parts.front()->dim(1), w = parts.front()->dim(2);
  std::int64_t channels = 0;
  for (const Tensor* p : parts) {
    if (p->rank() != 3 || p->dim(1) != h || p->dim(2) != w) {
      throw DimensionError("concat_channels: spatial mismatch " + shape_to_string(parts.front()->shape()) + " vs " +
                           shape_to_string(p->shape()));
    }
    channels += p->dim(0);
  }
  Tensor out({channels, h, w});
  double* dst = out.data();
  for (const Tensor* p : parts) dst = std::copy(p->data(), p->data() + p->size(), dst);
  return out;
}

std::vector<Tensor> split_channels(const Tensor& input, const std::vector<std::int64_t>& channels) {
  const std::int64_t h = input.dim(1), w = input.dim(2);
  std::vector<Tensor> out;
  const double* src = input.data();
  std::int64_t total = 0;
  for (auto c : channels) total += c;
  if (total != input.dim(0)) throw DimensionError("split_channels: channel counts do not sum to input channels");
  for (auto c : channels) {
    Tensor part({c, h, w});
    std::copy_n(src, part.size(), part.data());
    src += part.size();
    out.push_back(std::move(part));
  }
  return out;
}

Tensor chw_to_tokens(const Tensor& input) {
  if (input.rank() != 3) throw DimensionError("chw_to_tokens: needs [C,H,W], got " + shape_to_string(input.shape()));
  const std::int64_t c = input.dim(0), hw = input.dim(1) * input.dim(2);
  Tensor out({hw, c});
  kernels::transpose(input.data(), out.data(), c, hw);
  return out;
}

Tensor tokens_to_chw(const Tensor& tokens, std::int64_t height, std::int64_t width) {
  if (tokens.rank() != 2 || tokens.dim(0) != height * width) {
    throw DimensionError("tokens_to_chw: " + shape_to_string(tokens.shape()) + " does not hold " +
                         std::to_string(height) + "x" + std::to_string(width) + " tokens");
  }
  const std::int64_t c = tokens.dim(1);
  Tensor out({c, height, width});
  kernels::transpose(tokens.data(), out.data(), height * width, c);
  return out;
}

}  // namespace remotedet
