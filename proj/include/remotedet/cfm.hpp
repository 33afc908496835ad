#pragma once

// Cross-modal fusion block. For two modality feature maps F1, F2 of shape [C,H,W]:
//
//   f_m  = SiLU(DWConv_m(Linear_m(LN_m(F_m))))                 expand*C channels
//   s_i  = flatten_i(f_1) + flatten_i(f_2)                     one sequence per scan direction
//   Y    = Linear_out(sum_i unflatten_i(S6_i(s_i)))            back to C channels
//   F^_m = F_m + Y
//   out_m = F^_m + W2 GELU(W1 LN'_m(F^_m) + b1) + b2
//
// Both modalities receive the same Y.

#include <array>
#include <cstdint>
#include <string>

#include "remotedet/params.hpp"
#include "remotedet/s6.hpp"
#include "remotedet/ss2d.hpp"
#include "remotedet/tensor.hpp"

namespace remotedet {

struct CfmConfig {
  std::int64_t channels = 0;
  std::int64_t expand = 2;
  std::int64_t dw_kernel = 3;
  std::int64_t ffn_hidden = 0;  // 0 means 4 * channels
  std::int64_t state_size = kDefaultStateSize;

  std::int64_t inner() const { return expand * channels; }
  std::int64_t hidden() const { return ffn_hidden > 0 ? ffn_hidden : 4 * channels; }
  void validate() const;
};

struct CfmInputBranch {
  Tensor ln_gamma, ln_beta;  // [C]
  Tensor proj_w, proj_b;     // [C, E], [E]
  Tensor dw_w, dw_b;         // [E, k, k], [E]
};

struct CfmFfnBranch {
  Tensor ln_gamma, ln_beta;  // [C]
  Tensor w1, b1;             // [C, hidden], [hidden]
  Tensor w2, b2;             // [hidden, C], [C]
};

struct CfmWeights {
  CfmConfig config;
  std::array<CfmInputBranch, 2> input;
  std::array<S6Params, 4> s6;  // one per scan direction
  Tensor out_w, out_b;         // [E, C], [C]
  std::array<CfmFfnBranch, 2> ffn;

  static CfmWeights zeros(const CfmConfig& config);
  static CfmWeights initialized(const CfmConfig& config, Rng& rng);

  void for_each_param(const std::string& prefix, const ParamVisitor& f);
};

struct CfmOptions {
  /// Scan directions in use, taken in kAllDirections order: 4 for the full block, 2 for bidirectional scanning.
  int directions = 4;
  /// Parallel scan or the sequential recurrence inside each S6 block.
  bool parallel_scan = true;
};

/// Intermediates kept for cfm_backward.
struct CfmCache {
  std::int64_t height = 0, width = 0;
  int directions = 4;
  std::array<Tensor, 2> tokens;       // F_m as [HW, C]
  std::array<Tensor, 2> ln_in;        // LN_m(F_m) tokens
  std::array<Tensor, 2> projected;    // Linear_m output as [E, H, W]
  std::array<Tensor, 2> dw_out;       // before SiLU
  std::array<Tensor, 2> activated;    // f_m
  std::array<Tensor, 4> fused_seq;    // s_i
  Tensor scan_sum;                    // sum_i unflatten_i(y_i), [E, H, W]
  Tensor y_fus;                       // [C, H, W]
  std::array<Tensor, 2> residual;     // F^_m as [HW, C]
  std::array<Tensor, 2> ffn_ln;       // LN'_m(F^_m)
  std::array<Tensor, 2> ffn_pre;      // before GELU
  std::array<Tensor, 2> ffn_act;      // after GELU
};

struct CfmOutput {
  Tensor rgb;
  Tensor tir;
};

CfmOutput cfm_forward(const Tensor& f1, const Tensor& f2, const CfmWeights& w, const CfmOptions& options = {},
                      CfmCache* cache = nullptr);

struct CfmGrads {
  Tensor f1, f2;
  CfmWeights weights;
};

/// Gradients of sum(grad_out1 * out1) + sum(grad_out2 * out2).
CfmGrads cfm_backward(const CfmCache& cache, const CfmWeights& w, const Tensor& grad_out1, const Tensor& grad_out2);

}  // namespace remotedet
