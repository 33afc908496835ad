#pragma once

#include <string>

#include "remotedet/params.hpp"
#include "remotedet/tensor.hpp"

namespace remotedet {

/// Convolution followed by normalization and SiLU, or a plain biased convolution for output layers.
/// The normalized form uses one group spanning all of C, H and W, per sample, with a per-channel
/// affine (gamma, beta); the conv bias is then redundant and unused. "Same" padding for odd kernels.
struct ConvUnit {
  Tensor weight;  // [C_out, C_in, k, k]
  Tensor bias;    // [C_out], plain form only
  Tensor gamma;   // [C_out], normalized form only
  Tensor beta;    // [C_out], normalized form only
  int stride = 1;
  bool activate = true;  // normalized + SiLU; false gives conv + bias

  /// He-uniform weights, unit gamma, zero bias/beta; weights and gamma are zero when rng is null.
  static ConvUnit create(std::int64_t in, std::int64_t out, int kernel, int stride, bool activate, Rng* rng);
  int padding() const { return static_cast<int>(weight.dim(2) / 2); }
  std::int64_t out_channels() const { return weight.dim(0); }
  void for_each_param(const std::string& prefix, const ParamVisitor& f);
};

struct ConvUnitCache {
  Tensor input;
  Tensor conv;        // raw convolution output
  Tensor normalized;  // after normalization, before the affine
  Tensor pre;         // before SiLU
};

Tensor forward(const ConvUnit& m, const Tensor& x, ConvUnitCache* cache);
/// Accumulates parameter gradients into grads and returns d/d input.
Tensor backward(const ConvUnit& m, const ConvUnitCache& cache, const Tensor& grad_out, ConvUnit& grads);

/// CSP block: two 1x1 branches, one bottleneck (1x1, 3x3, residual) on the first, merged by a 1x1.
struct C3Block {
  ConvUnit cv1, cv2, cv3, m1, m2;

  static C3Block create(std::int64_t in, std::int64_t out, Rng* rng);
  void for_each_param(const std::string& prefix, const ParamVisitor& f);
};

struct C3Cache {
  ConvUnitCache cv1, cv2, cv3, m1, m2;
  std::int64_t hidden = 0;
};

Tensor forward(const C3Block& m, const Tensor& x, C3Cache* cache);
Tensor backward(const C3Block& m, const C3Cache& cache, const Tensor& grad_out, C3Block& grads);

/// Fast spatial pyramid pooling: 1x1 reduce, three chained 5x5 max pools, concat, 1x1.
struct SppfBlock {
  ConvUnit cv1, cv2;
  int pool = 5;

  static SppfBlock create(std::int64_t in, std::int64_t out, Rng* rng);
  void for_each_param(const std::string& prefix, const ParamVisitor& f);
};

struct SppfCache {
  ConvUnitCache cv1, cv2;
  Tensor x, y1, y2;
};

Tensor forward(const SppfBlock& m, const Tensor& x, SppfCache* cache);
Tensor backward(const SppfBlock& m, const SppfCache& cache, const Tensor& grad_out, SppfBlock& grads);

}  // namespace remotedet
