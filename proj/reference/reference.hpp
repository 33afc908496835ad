#pragma once

// Straightforward serial loop implementations used as oracles for the
// optimized kernels. Nothing here is used on the library's fast paths.

#include "remotedet/tensor.hpp"

namespace remotedet::reference {

/// Six nested loops, zero padding, cross-correlation.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding);

/// Triple-loop matrix product a[M,K] * b[K,N].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Depthwise convolution expressed as a dense conv with a block-diagonal weight.
Tensor depthwise_via_grouped(const Tensor& input, const Tensor& weight, const Tensor& bias, int padding);

/// erf by its Maclaurin series in long double; accurate to ~1e-18 for |x| <= 3.
long double erf_series(long double x);

}  // namespace remotedet::reference
