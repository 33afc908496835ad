#pragma once

// Selective state-space (S6) sequence transform over a token sequence x[L, D].
//
//   delta_t = softplus(x_t W_delta + delta_bias)          [D]
//   B_t = x_t W_B,  C_t = x_t W_C                          [N]
//   A = -exp(log_a)                                        [D, N]
//   h_t[d,n] = exp(delta_t[d] A[d,n]) h_{t-1}[d,n] + delta_t[d] B_t[n] x_t[d]
//   y_t[d]   = sum_n C_t[n] h_t[d,n] + d_skip[d] x_t[d]
//
// The transition uses zero-order hold and the input matrix the Euler step.

#include <cstdint>
#include <string>

#include "remotedet/params.hpp"
#include "remotedet/tensor.hpp"

namespace remotedet {

inline constexpr std::int64_t kDefaultStateSize = 8;

struct S6Params {
  Tensor log_a;       // [D, N]
  Tensor w_b;         // [D, N]
  Tensor w_c;         // [D, N]
  Tensor w_delta;     // [D, D]
  Tensor delta_bias;  // [D]
  Tensor d_skip;      // [D]

  std::int64_t channels() const { return log_a.dim(0); }
  std::int64_t state_size() const { return log_a.dim(1); }

  static S6Params zeros(std::int64_t channels, std::int64_t state_size);
  /// A[d,n] = -(n+1); softplus(delta_bias) log-uniform in [1e-3, 0.1]; W_B, W_C, W_delta uniform +-1/sqrt(D); d_skip = 1.
  static S6Params initialized(std::int64_t channels, std::int64_t state_size, Rng& rng);

  /// Sets W_C and d_skip to zero so the block outputs zeros for any input.
  void silence();

  /// Throws ValidationError on non-finite values and DimensionError on inconsistent shapes.
  void validate() const;

  void for_each_param(const std::string& prefix, const ParamVisitor& f);
};

/// Per-step quantities kept by the sequential pass for the adjoint sweep.
struct S6Trace {
  Tensor delta_pre;  // [L, D] before softplus
  Tensor delta;      // [L, D]
  Tensor b;          // [L, N]
  Tensor c;          // [L, N]
  Tensor h;          // [L, D, N]
};

/// Reference recurrence, one timestep after another.
Tensor s6_forward_sequential(const Tensor& x, const S6Params& params, S6Trace* trace = nullptr);

/// Same result via a work-efficient (Blelloch) associative scan over (a_t, b_t) pairs,
/// parallel across channels.
Tensor s6_forward_scan(const Tensor& x, const S6Params& params);

struct S6Grads {
  Tensor x;
  S6Params params;
};

/// Gradients of sum(grad_out * y) by a reverse sweep of the recurrence.
S6Grads s6_backward(const Tensor& x, const S6Params& params, const Tensor& grad_out);

}  // namespace remotedet
