#pragma once

#include <vector>

#include "remotedet/tensor.hpp"

namespace remotedet {

inline constexpr double kLayerNormEps = 1e-5;

struct ConvGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

struct LinearGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

struct LayerNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

/// Cross-correlation of input[C_in,H,W] with weight[C_out,C_in,kH,kW] (odd kernels).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding);
ConvGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out, int stride,
                          int padding);

/// Per-channel convolution, input[C,H,W] with weight[C,k,k]; padding must keep H and W.
Tensor depthwise_conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int padding);
ConvGrads depthwise_conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                                    int padding);

/// Affine map over the last axis: input[..., D_in] x weight[D_in, D_out] + bias[D_out].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);
LinearGrads linear_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out);

/// Normalizes every last-axis slice with population variance.
Tensor layer_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps = kLayerNormEps);
LayerNormGrads layer_norm_backward(const Tensor& input, const Tensor& gamma, const Tensor& grad_out,
                                   double eps = kLayerNormEps);

double sigmoid(double x);
double silu(double x);
double silu_grad(double x);
/// Exact erf form.
double gelu(double x);
double gelu_grad(double x);
double softplus(double x);

Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor softplus(const Tensor& x);
/// grad_out * f'(x) for the activation applied to x.
Tensor silu_backward(const Tensor& x, const Tensor& grad_out);
Tensor gelu_backward(const Tensor& x, const Tensor& grad_out);

/// Stride-1 max pooling with implicit -inf padding; output has the input's spatial size.
Tensor max_pool2d(const Tensor& input, int kernel);
Tensor max_pool2d_backward(const Tensor& input, int kernel, const Tensor& grad_out);

Tensor upsample_nearest2x(const Tensor& input);
Tensor upsample_nearest2x_backward(const Tensor& grad_out);

/// Stacks [C_i,H,W] tensors along the channel axis.
Tensor concat_channels(const std::vector<const Tensor*>& parts);
/// Inverse of concat_channels for a gradient: splits by the given channel counts.
std::vector<Tensor> split_channels(const Tensor& input, const std::vector<std::int64_t>& channels);

/// [C,H,W] -> [H*W,C] with tokens in row-major pixel order, and back.
Tensor chw_to_tokens(const Tensor& input);
Tensor tokens_to_chw(const Tensor& tokens, std::int64_t height, std::int64_t width);

}  // namespace remotedet
