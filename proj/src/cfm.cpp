#include "remotedet/cfm.hpp"

#include <cmath>

#include "remotedet/ops.hpp"

namespace remotedet {

void CfmConfig::validate() const {
  if (channels <= 0 || expand <= 0 || dw_kernel <= 0 || ffn_hidden < 0 || state_size <= 0) {
    throw ValidationError("CfmConfig: sizes must be positive");
  }
  if (dw_kernel % 2 == 0) throw ValidationError("CfmConfig: depthwise kernel must be odd");
}

CfmWeights CfmWeights::zeros(const CfmConfig& config) {
  config.validate();
  const std::int64_t c = config.channels, e = config.inner(), k = config.dw_kernel, hid = config.hidden();
  CfmWeights w;
  w.config = config;
  for (auto& in : w.input) {
    in = CfmInputBranch{Tensor({c}), Tensor({c}), Tensor({c, e}), Tensor({e}), Tensor({e, k, k}), Tensor({e})};
  }
  for (auto& s : w.s6) s = S6Params::zeros(e, config.state_size);
  w.out_w = Tensor({e, c});
  w.out_b = Tensor({c});
  for (auto& f : w.ffn) {
    f = CfmFfnBranch{Tensor({c}), Tensor({c}), Tensor({c, hid}), Tensor({hid}), Tensor({hid, c}), Tensor({c})};
  }
  return w;
}

CfmWeights CfmWeights::initialized(const CfmConfig& config, Rng& rng) {
  CfmWeights w = zeros(config);
  const auto c = static_cast<double>(config.channels), e = static_cast<double>(config.inner());
  const auto k2 = static_cast<double>(config.dw_kernel * config.dw_kernel);
  for (auto& in : w.input) {
    in.ln_gamma.fill(1.0);
    fill_uniform(in.proj_w, rng, 1.0 / std::sqrt(c));
    fill_uniform(in.dw_w, rng, 1.0 / std::sqrt(k2));
  }
  for (auto& s : w.s6) s = S6Params::initialized(config.inner(), config.state_size, rng);
  fill_uniform(w.out_w, rng, 1.0 / std::sqrt(e));
  for (auto& f : w.ffn) {
    f.ln_gamma.fill(1.0);
    fill_uniform(f.w1, rng, 1.0 / std::sqrt(c));
    fill_uniform(f.w2, rng, 1.0 / std::sqrt(static_cast<double>(config.hidden())));
  }
  return w;
}

void CfmWeights::for_each_param(const std::string& prefix, const ParamVisitor& f) {
  for (int m = 0; m < 2; ++m) {
    const std::string p = prefix + "in" + std::to_string(m) + ".";
    f(p + "ln.gamma", input[m].ln_gamma);
    f(p + "ln.beta", input[m].ln_beta);
    f(p + "proj.weight", input[m].proj_w);
    f(p + "proj.bias", input[m].proj_b);
    f(p + "dw.weight", input[m].dw_w);
    f(p + "dw.bias", input[m].dw_b);
  }
  for (int i = 0; i < 4; ++i) s6[i].for_each_param(prefix + "s6_" + std::to_string(i) + ".", f);
  f(prefix + "out.weight", out_w);
  f(prefix + "out.bias", out_b);
  for (int m = 0; m < 2; ++m) {
    const std::string p = prefix + "ffn" + std::to_string(m) + ".";
    f(p + "ln.gamma", ffn[m].ln_gamma);
    f(p + "ln.beta", ffn[m].ln_beta);
    f(p + "w1", ffn[m].w1);
    f(p + "b1", ffn[m].b1);
    f(p + "w2", ffn[m].w2);
    f(p + "b2", ffn[m].b2);
  }
}

CfmOutput cfm_forward(const Tensor& f1, const Tensor& f2, const CfmWeights& w, const CfmOptions& options,
                      CfmCache* cache) {
  require_same_shape(f1, f2, "cfm_forward modalities");
  if (f1.rank() != 3 || f1.dim(0) != w.config.channels) {
    throw DimensionError("cfm_forward: input " + shape_to_string(f1.shape()) + " does not match channel count " +
                         std::to_string(w.config.channels));
  }
  if (options.directions < 1 || options.directions > 4) throw ValidationError("cfm_forward: directions must be 1..4");
  const std::int64_t h = f1.dim(1), wd = f1.dim(2);
  const int pad = static_cast<int>(w.config.dw_kernel / 2);

  CfmCache local;
  CfmCache& c = cache ? *cache : local;
  c.height = h;
  c.width = wd;
  c.directions = options.directions;

  const std::array<const Tensor*, 2> inputs = {&f1, &f2};
  for (int m = 0; m < 2; ++m) {
    const auto& in = w.input[m];
    c.tokens[m] = chw_to_tokens(*inputs[m]);
    c.ln_in[m] = layer_norm(c.tokens[m], in.ln_gamma, in.ln_beta);
    c.projected[m] = tokens_to_chw(linear(c.ln_in[m], in.proj_w, in.proj_b), h, wd);
    c.dw_out[m] = depthwise_conv2d(c.projected[m], in.dw_w, in.dw_b, pad);
    c.activated[m] = silu(c.dw_out[m]);
  }

  c.scan_sum = Tensor({w.config.inner(), h, wd});
  for (int i = 0; i < options.directions; ++i) {
    const ScanDirection dir = kAllDirections[i];
    c.fused_seq[i] = fuse_sequences(flatten(c.activated[0], dir), flatten(c.activated[1], dir));
    const Tensor y = options.parallel_scan ? s6_forward_scan(c.fused_seq[i], w.s6[i])
                                           : s6_forward_sequential(c.fused_seq[i], w.s6[i]);
    c.scan_sum += unflatten(y, dir, h, wd);
  }
  const Tensor y_tokens = linear(chw_to_tokens(c.scan_sum), w.out_w, w.out_b);
  c.y_fus = tokens_to_chw(y_tokens, h, wd);

  std::array<Tensor, 2> outputs;
  for (int m = 0; m < 2; ++m) {
    const auto& ffn = w.ffn[m];
    c.residual[m] = c.tokens[m] + y_tokens;
    c.ffn_ln[m] = layer_norm(c.residual[m], ffn.ln_gamma, ffn.ln_beta);
    c.ffn_pre[m] = linear(c.ffn_ln[m], ffn.w1, ffn.b1);
    c.ffn_act[m] = gelu(c.ffn_pre[m]);
    outputs[m] = tokens_to_chw(c.residual[m] + linear(c.ffn_act[m], ffn.w2, ffn.b2), h, wd);
  }
  return CfmOutput{std::move(outputs[0]), std::move(outputs[1])};
}

CfmGrads cfm_backward(const CfmCache& c, const CfmWeights& w, const Tensor& grad_out1, const Tensor& grad_out2) {
  const std::int64_t h = c.height, wd = c.width;
  const int pad = static_cast<int>(w.config.dw_kernel / 2);
  require_shape(grad_out1, {w.config.channels, h, wd}, "cfm_backward grad_out1");
  require_shape(grad_out2, {w.config.channels, h, wd}, "cfm_backward grad_out2");

  CfmGrads g;
  g.weights = CfmWeights::zeros(w.config);
  std::array<Tensor, 2> grad_inputs;

  // FFN and residual: out_m = F^_m + FFN(LN'(F^_m)).
  Tensor grad_y_tokens({h * wd, w.config.channels});
  const std::array<const Tensor*, 2> grad_outs = {&grad_out1, &grad_out2};
  for (int m = 0; m < 2; ++m) {
    const auto& ffn = w.ffn[m];
    auto& gffn = g.weights.ffn[m];
    const Tensor go = chw_to_tokens(*grad_outs[m]);
    LinearGrads l2 = linear_backward(c.ffn_act[m], ffn.w2, go);
    const Tensor g_pre = gelu_backward(c.ffn_pre[m], l2.input);
    LinearGrads l1 = linear_backward(c.ffn_ln[m], ffn.w1, g_pre);
    LayerNormGrads ln = layer_norm_backward(c.residual[m], ffn.ln_gamma, l1.input);
    gffn.w2 = std::move(l2.weight);
    gffn.b2 = std::move(l2.bias);
    gffn.w1 = std::move(l1.weight);
    gffn.b1 = std::move(l1.bias);
    gffn.ln_gamma = std::move(ln.gamma);
    gffn.ln_beta = std::move(ln.beta);
    Tensor g_res = go + ln.input;
    grad_y_tokens += g_res;
    grad_inputs[m] = std::move(g_res);  // direct path F_m -> F^_m, as tokens
  }

  // Y = Linear_out(scan_sum).
  LinearGrads lo = linear_backward(chw_to_tokens(c.scan_sum), w.out_w, grad_y_tokens);
  g.weights.out_w = std::move(lo.weight);
  g.weights.out_b = std::move(lo.bias);
  const Tensor g_scan_sum = tokens_to_chw(lo.input, h, wd);

  std::array<Tensor, 2> g_activated = {Tensor::zeros_like(c.activated[0]), Tensor::zeros_like(c.activated[1])};
  for (int i = 0; i < c.directions; ++i) {
    const ScanDirection dir = kAllDirections[i];
    S6Grads sg = s6_backward(c.fused_seq[i], w.s6[i], flatten(g_scan_sum, dir));
    g.weights.s6[i] = std::move(sg.params);
    const Tensor back = unflatten(sg.x, dir, h, wd);
    g_activated[0] += back;
    g_activated[1] += back;
  }

  for (int m = 0; m < 2; ++m) {
    const auto& in = w.input[m];
    auto& gin = g.weights.input[m];
    const Tensor g_dw = silu_backward(c.dw_out[m], g_activated[m]);
    ConvGrads dg = depthwise_conv2d_backward(c.projected[m], in.dw_w, g_dw, pad);
    gin.dw_w = std::move(dg.weight);
    gin.dw_b = std::move(dg.bias);
    LinearGrads lp = linear_backward(c.ln_in[m], in.proj_w, chw_to_tokens(dg.input));
    gin.proj_w = std::move(lp.weight);
    gin.proj_b = std::move(lp.bias);
    LayerNormGrads ln = layer_norm_backward(c.tokens[m], in.ln_gamma, lp.input);
    gin.ln_gamma = std::move(ln.gamma);
    gin.ln_beta = std::move(ln.beta);
    grad_inputs[m] += ln.input;
  }
  g.f1 = tokens_to_chw(grad_inputs[0], h, wd);
  g.f2 = tokens_to_chw(grad_inputs[1], h, wd);
  return g;
}

}  // namespace remotedet
