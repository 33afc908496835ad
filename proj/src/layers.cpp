#include "remotedet/layers.hpp"

#include <cmath>

#include "remotedet/ops.hpp"

namespace remotedet {

ConvUnit ConvUnit::create(std::int64_t in, std::int64_t out, int kernel, int stride, bool activate, Rng* rng) {
  if (in <= 0 || out <= 0 || kernel <= 0 || kernel % 2 == 0 || stride <= 0) {
    throw ValidationError("ConvUnit: invalid geometry");
  }
  ConvUnit u;
  u.weight = Tensor({out, in, kernel, kernel});
  u.bias = Tensor({out});
  u.stride = stride;
  u.activate = activate;
  if (activate) {
    u.gamma = Tensor({out}, rng ? 1.0 : 0.0);
    u.beta = Tensor({out});
  }
  if (rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in * kernel * kernel));
    fill_uniform(u.weight, *rng, bound);
  }
  return u;
}

void ConvUnit::for_each_param(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + "weight", weight);
  if (activate) {
    f(prefix + "norm.gamma", gamma);
    f(prefix + "norm.beta", beta);
  } else {
    f(prefix + "bias", bias);
  }
}

namespace {

Tensor as_row(const Tensor& t) { return t.reshaped({1, static_cast<std::int64_t>(t.size())}); }

}  // namespace

Tensor forward(const ConvUnit& m, const Tensor& x, ConvUnitCache* cache) {
  Tensor conv = conv2d(x, m.weight, m.bias, m.stride, m.padding());
  if (!m.activate) {
    if (cache) cache->input = x;
    return conv;
  }
  const std::int64_t c = conv.dim(0), plane = conv.dim(1) * conv.dim(2);
  const Tensor ones({static_cast<std::int64_t>(conv.size())}, 1.0);
  const Tensor zeros({static_cast<std::int64_t>(conv.size())});
  Tensor normalized = layer_norm(as_row(conv), ones, zeros).reshaped(conv.shape());
  Tensor pre(conv.shape());
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < plane; ++i) pre[ch * plane + i] = m.gamma[ch] * normalized[ch * plane + i] + m.beta[ch];
  Tensor out = silu(pre);
  if (cache) {
    cache->input = x;
    cache->conv = std::move(conv);
    cache->normalized = std::move(normalized);
    cache->pre = std::move(pre);
  }
  return out;
}

Tensor backward(const ConvUnit& m, const ConvUnitCache& cache, const Tensor& grad_out, ConvUnit& grads) {
  Tensor g_conv;
  if (!m.activate) {
    g_conv = grad_out;
  } else {
    const Tensor g_pre = silu_backward(cache.pre, grad_out);
    const std::int64_t c = g_pre.dim(0), plane = g_pre.dim(1) * g_pre.dim(2);
    Tensor g_norm(g_pre.shape());
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double gg = 0, gb = 0;
      for (std::int64_t i = 0; i < plane; ++i) {
        const double g = g_pre[ch * plane + i];
        gg += g * cache.normalized[ch * plane + i];
        gb += g;
        g_norm[ch * plane + i] = g * m.gamma[ch];
      }
      grads.gamma[ch] += gg;
      grads.beta[ch] += gb;
    }
    const Tensor ones({static_cast<std::int64_t>(g_norm.size())}, 1.0);
    g_conv = layer_norm_backward(as_row(cache.conv), ones, as_row(g_norm)).input.reshaped(g_norm.shape());
  }
  ConvGrads cg = conv2d_backward(cache.input, m.weight, g_conv, m.stride, m.padding());
  grads.weight += cg.weight;
  if (!m.activate) grads.bias += cg.bias;
  return std::move(cg.input);
}

C3Block C3Block::create(std::int64_t in, std::int64_t out, Rng* rng) {
  const std::int64_t hidden = std::max<std::int64_t>(1, out / 2);
  C3Block b;
  b.cv1 = ConvUnit::create(in, hidden, 1, 1, true, rng);
  b.cv2 = ConvUnit::create(in, hidden, 1, 1, true, rng);
  b.m1 = ConvUnit::create(hidden, hidden, 1, 1, true, rng);
  b.m2 = ConvUnit::create(hidden, hidden, 3, 1, true, rng);
  b.cv3 = ConvUnit::create(2 * hidden, out, 1, 1, true, rng);
  return b;
}

void C3Block::for_each_param(const std::string& prefix, const ParamVisitor& f) {
  cv1.for_each_param(prefix + "cv1.", f);
  cv2.for_each_param(prefix + "cv2.", f);
  m1.for_each_param(prefix + "m1.", f);
  m2.for_each_param(prefix + "m2.", f);
  cv3.for_each_param(prefix + "cv3.", f);
}

Tensor forward(const C3Block& m, const Tensor& x, C3Cache* cache) {
  C3Cache local;
  C3Cache& c = cache ? *cache : local;
  const Tensor a = forward(m.cv1, x, &c.cv1);
  Tensor branch = forward(m.m2, forward(m.m1, a, &c.m1), &c.m2);
  branch += a;
  const Tensor b = forward(m.cv2, x, &c.cv2);
  c.hidden = a.dim(0);
  return forward(m.cv3, concat_channels({&branch, &b}), &c.cv3);
}

Tensor backward(const C3Block& m, const C3Cache& c, const Tensor& grad_out, C3Block& grads) {
  const Tensor g_cat = backward(m.cv3, c.cv3, grad_out, grads.cv3);
  auto parts = split_channels(g_cat, {c.hidden, c.hidden});
  Tensor g_a = backward(m.m1, c.m1, backward(m.m2, c.m2, parts[0], grads.m2), grads.m1);
  g_a += parts[0];
  Tensor gx = backward(m.cv1, c.cv1, g_a, grads.cv1);
  gx += backward(m.cv2, c.cv2, parts[1], grads.cv2);
  return gx;
}

SppfBlock SppfBlock::create(std::int64_t in, std::int64_t out, Rng* rng) {
  const std::int64_t hidden = std::max<std::int64_t>(1, in / 2);
  SppfBlock b;
  b.cv1 = ConvUnit::create(in, hidden, 1, 1, true, rng);
  b.cv2 = ConvUnit::create(4 * hidden, out, 1, 1, true, rng);
  return b;
}

void SppfBlock::for_each_param(const std::string& prefix, const ParamVisitor& f) {
  cv1.for_each_param(prefix + "cv1.", f);
  cv2.for_each_param(prefix + "cv2.", f);
}

Tensor forward(const SppfBlock& m, const Tensor& x, SppfCache* cache) {
  SppfCache local;
  SppfCache& c = cache ? *cache : local;
  c.x = forward(m.cv1, x, &c.cv1);
  c.y1 = max_pool2d(c.x, m.pool);
  c.y2 = max_pool2d(c.y1, m.pool);
  const Tensor y3 = max_pool2d(c.y2, m.pool);
  return forward(m.cv2, concat_channels({&c.x, &c.y1, &c.y2, &y3}), &c.cv2);
}

Tensor backward(const SppfBlock& m, const SppfCache& c, const Tensor& grad_out, SppfBlock& grads) {
  const std::int64_t h = c.x.dim(0);
  auto parts = split_channels(backward(m.cv2, c.cv2, grad_out, grads.cv2), {h, h, h, h});
  Tensor g2 = parts[2];
  g2 += max_pool2d_backward(c.y2, m.pool, parts[3]);
  Tensor g1 = parts[1];
  g1 += max_pool2d_backward(c.y1, m.pool, g2);
  Tensor g0 = parts[0];
  g0 += max_pool2d_backward(c.x, m.pool, g1);
  return backward(m.cv1, c.cv1, g0, grads.cv1);
}

}  // namespace remotedet
