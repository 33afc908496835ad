#include "remotedet/s6.hpp"

#include <bit>
#include <cmath>
#include <vector>

#include "remotedet/kernels.hpp"
#include "remotedet/ops.hpp"

namespace remotedet {

S6Params S6Params::zeros(std::int64_t d, std::int64_t n) {
  return S6Params{Tensor({d, n}), Tensor({d, n}), Tensor({d, n}), Tensor({d, d}), Tensor({d}), Tensor({d})};
}

S6Params S6Params::initialized(std::int64_t d, std::int64_t n, Rng& rng) {
  S6Params p = zeros(d, n);
  for (std::int64_t i = 0; i < d; ++i)
    for (std::int64_t j = 0; j < n; ++j) p.log_a.at(i, j) = std::log(static_cast<double>(j + 1));
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  fill_uniform(p.w_b, rng, bound);
  fill_uniform(p.w_c, rng, bound);
  fill_uniform(p.w_delta, rng, bound);
  for (std::int64_t i = 0; i < d; ++i) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(0.1)));
    p.delta_bias[i] = dt + std::log(-std::expm1(-dt));  // inverse softplus
    p.d_skip[i] = 1.0;
  }
  return p;
}

void S6Params::silence() {
  w_c.fill(0.0);
  d_skip.fill(0.0);
}

void S6Params::validate() const {
  if (log_a.rank() != 2) throw DimensionError("S6Params: log_a must be [D,N], got " + shape_to_string(log_a.shape()));
  const std::int64_t d = log_a.dim(0), n = log_a.dim(1);
  require_shape(w_b, {d, n}, "S6Params w_b");
  require_shape(w_c, {d, n}, "S6Params w_c");
  require_shape(w_delta, {d, d}, "S6Params w_delta");
  require_shape(delta_bias, {d}, "S6Params delta_bias");
  require_shape(d_skip, {d}, "S6Params d_skip");
  for (const Tensor* t : {&log_a, &w_b, &w_c, &w_delta, &delta_bias, &d_skip}) {
    if (!t->all_finite()) throw ValidationError("S6Params: non-finite parameter value");
  }
}

void S6Params::for_each_param(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + "log_a", log_a);
  f(prefix + "w_b", w_b);
  f(prefix + "w_c", w_c);
  f(prefix + "w_delta", w_delta);
  f(prefix + "delta_bias", delta_bias);
  f(prefix + "d_skip", d_skip);
}

namespace {

struct Projections {
  Tensor delta_pre, delta, b, c;
};

void check_input(const Tensor& x, const S6Params& p) {
  p.validate();
  if (x.rank() != 2 || x.dim(1) != p.channels() || x.dim(0) < 1) {
    throw DimensionError("s6: input " + shape_to_string(x.shape()) + " incompatible with channel count " +
                         std::to_string(p.channels()));
  }
}

Projections project(const Tensor& x, const S6Params& p) {
  Projections out;
  out.delta_pre = linear(x, p.w_delta, p.delta_bias);
  out.delta = softplus(out.delta_pre);
  const Tensor no_bias({p.state_size()});
  out.b = linear(x, p.w_b, no_bias);
  out.c = linear(x, p.w_c, no_bias);
  return out;
}

std::vector<double> continuous_a(const S6Params& p) {
  std::vector<double> a(p.log_a.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(p.log_a[i]);
  return a;
}

}  // namespace

Tensor s6_forward_sequential(const Tensor& x, const S6Params& params, S6Trace* trace) {
  check_input(x, params);
  const std::int64_t len = x.dim(0), d = params.channels(), n = params.state_size();
  Projections proj = project(x, params);
  const std::vector<double> a = continuous_a(params);

  Tensor y({len, d});
  std::vector<double> h(static_cast<std::size_t>(d * n), 0.0);
  if (trace) trace->h = Tensor({len, d, n});
  for (std::int64_t t = 0; t < len; ++t) {
    const double* xt = x.data() + t * d;
    const double* dt = proj.delta.data() + t * d;
    const double* bt = proj.b.data() + t * n;
    const double* ct = proj.c.data() + t * n;
    for (std::int64_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::int64_t j = 0; j < n; ++j) {
        double& state = h[static_cast<std::size_t>(i * n + j)];
        state = std::exp(dt[i] * a[static_cast<std::size_t>(i * n + j)]) * state + dt[i] * bt[j] * xt[i];
        acc += ct[j] * state;
      }
      y.at(t, i) = acc + params.d_skip[i] * xt[i];
    }
    if (trace) std::copy(h.begin(), h.end(), trace->h.data() + t * d * n);
  }
  if (trace) {
    trace->delta_pre = std::move(proj.delta_pre);
    trace->delta = std::move(proj.delta);
    trace->b = std::move(proj.b);
    trace->c = std::move(proj.c);
  }
  return y;
}

namespace {

// Composition of h -> a1 h + b1 followed by h -> a2 h + b2.
inline void combine(double a1, double b1, double& a2, double& b2) {
  b2 = a2 * b1 + b2;
  a2 = a1 * a2;
}

// In-place exclusive Blelloch scan over power-of-two arrays.
void blelloch_exclusive(double* ca, double* cb, std::int64_t size) {
  for (std::int64_t stride = 1; stride < size; stride *= 2)
    for (std::int64_t i = 2 * stride - 1; i < size; i += 2 * stride) combine(ca[i - stride], cb[i - stride], ca[i], cb[i]);
  ca[size - 1] = 1.0;
  cb[size - 1] = 0.0;
  for (std::int64_t stride = size / 2; stride >= 1; stride /= 2) {
    for (std::int64_t i = 2 * stride - 1; i < size; i += 2 * stride) {
      const double left_a = ca[i - stride], left_b = cb[i - stride];
      ca[i - stride] = ca[i];
      cb[i - stride] = cb[i];
      double ra = left_a, rb = left_b;
      combine(ca[i], cb[i], ra, rb);
      ca[i] = ra;
      cb[i] = rb;
    }
  }
}

}  // namespace

Tensor s6_forward_scan(const Tensor& x, const S6Params& params) {
  check_input(x, params);
  const std::int64_t len = x.dim(0), d = params.channels(), n = params.state_size();
  const Projections proj = project(x, params);
  const std::vector<double> a = continuous_a(params);
  // Leaves of the scan tree are short blocks scanned serially; the Blelloch
  // up/down sweep runs over the block aggregates.
  constexpr std::int64_t kBlock = 32;
  const std::int64_t blocks = (len + kBlock - 1) / kBlock;
  const std::int64_t padded = static_cast<std::int64_t>(std::bit_ceil(static_cast<std::uint64_t>(blocks)));

  // Channels are independent; each thread owns whole channels, so the sum over
  // state lanes runs in the same order as the sequential recurrence.
  // Channel-major copies so every lane streams contiguous memory.
  std::vector<double> delta_t(static_cast<std::size_t>(len * d)), x_t(static_cast<std::size_t>(len * d));
  std::vector<double> b_t(static_cast<std::size_t>(len * n)), c_t(static_cast<std::size_t>(len * n));
  kernels::transpose(proj.delta.data(), delta_t.data(), len, d);
  kernels::transpose(x.data(), x_t.data(), len, d);
  kernels::transpose(proj.b.data(), b_t.data(), len, n);
  kernels::transpose(proj.c.data(), c_t.data(), len, n);

  Tensor out_t({d, len});
#pragma omp parallel
  {
    std::vector<double> cum_a(static_cast<std::size_t>(len)), cum_b(static_cast<std::size_t>(len));
    std::vector<double> agg_a(static_cast<std::size_t>(padded)), agg_b(static_cast<std::size_t>(padded));
    std::vector<double> acc(static_cast<std::size_t>(len));
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < d; ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      const double* delta_i = delta_t.data() + i * len;
      const double* x_i = x_t.data() + i * len;
      for (std::int64_t j = 0; j < n; ++j) {
        const double a_ij = a[static_cast<std::size_t>(i * n + j)];
        const double* b_j = b_t.data() + j * len;
        const double* c_j = c_t.data() + j * len;
        for (std::int64_t blk = 0; blk < blocks; ++blk) {
          double run_a = 1.0, run_b = 0.0;
          for (std::int64_t t = blk * kBlock; t < std::min(len, (blk + 1) * kBlock); ++t) {
            const double dt = delta_i[t];
            const double step_a = std::exp(dt * a_ij);
            run_b = step_a * run_b + dt * b_j[t] * x_i[t];
            run_a *= step_a;
            cum_a[t] = run_a;
            cum_b[t] = run_b;
          }
          agg_a[blk] = run_a;
          agg_b[blk] = run_b;
        }
        std::fill(agg_a.begin() + blocks, agg_a.end(), 1.0);
        std::fill(agg_b.begin() + blocks, agg_b.end(), 0.0);
        blelloch_exclusive(agg_a.data(), agg_b.data(), padded);
        // The exclusive prefix applied to h_{-1} = 0 is the state entering each block.
        for (std::int64_t t = 0; t < len; ++t) {
          const double h = cum_a[t] * agg_b[t / kBlock] + cum_b[t];
          acc[t] += c_j[t] * h;
        }
      }
      double* out_i = out_t.data() + i * len;
      for (std::int64_t t = 0; t < len; ++t) out_i[t] = acc[t] + params.d_skip[i] * x_i[t];
    }
  }
  Tensor y({len, d});
  kernels::transpose(out_t.data(), y.data(), d, len);
  return y;
}

S6Grads s6_backward(const Tensor& x, const S6Params& params, const Tensor& grad_out) {
  S6Trace tr;
  s6_forward_sequential(x, params, &tr);
  require_same_shape(x, grad_out, "s6_backward grad_out");
  const std::int64_t len = x.dim(0), d = params.channels(), n = params.state_size();
  const std::vector<double> a = continuous_a(params);

  S6Grads g{Tensor::zeros_like(x), S6Params::zeros(d, n)};
  Tensor g_delta({len, d}), g_b({len, n}), g_c({len, n});
  Tensor g_a({d, n});
  std::vector<double> gh(static_cast<std::size_t>(d * n), 0.0);

  for (std::int64_t t = len - 1; t >= 0; --t) {
    const double* xt = x.data() + t * d;
    const double* gy = grad_out.data() + t * d;
    const double* dt = tr.delta.data() + t * d;
    const double* bt = tr.b.data() + t * n;
    const double* ct = tr.c.data() + t * n;
    const double* ht = tr.h.data() + t * d * n;
    const double* hprev = t > 0 ? tr.h.data() + (t - 1) * d * n : nullptr;
    for (std::int64_t i = 0; i < d; ++i) {
      g.x.at(t, i) += gy[i] * params.d_skip[i];
      double gd = 0.0, gx = 0.0;
      for (std::int64_t j = 0; j < n; ++j) {
        const std::size_t k = static_cast<std::size_t>(i * n + j);
        g_c.at(t, j) += gy[i] * ht[k];
        gh[k] += ct[j] * gy[i];
        const double abar = std::exp(dt[i] * a[k]);
        const double prev = hprev ? hprev[k] : 0.0;
        const double g_abar = gh[k] * prev;
        gd += gh[k] * bt[j] * xt[i] + g_abar * abar * a[k];
        g_a[k] += g_abar * abar * dt[i];
        g_b.at(t, j) += gh[k] * dt[i] * xt[i];
        gx += gh[k] * dt[i] * bt[j];
        gh[k] *= abar;  // carry to h_{t-1}
      }
      g_delta.at(t, i) = gd;
      g.x.at(t, i) += gx;
    }
  }
  for (std::size_t k = 0; k < g_a.size(); ++k) g.params.log_a[k] = g_a[k] * a[k];
  for (std::int64_t t = 0; t < len; ++t)
    for (std::int64_t i = 0; i < d; ++i) g.params.d_skip[i] += grad_out.at(t, i) * x.at(t, i);

  // Back through delta = softplus(x W_delta + bias), B = x W_B, C = x W_C.
  Tensor g_pre = Tensor::zeros_like(g_delta);
  for (std::size_t k = 0; k < g_pre.size(); ++k) g_pre[k] = g_delta[k] * sigmoid(tr.delta_pre[k]);
  const LinearGrads via_delta = linear_backward(x, params.w_delta, g_pre);
  const LinearGrads via_b = linear_backward(x, params.w_b, g_b);
  const LinearGrads via_c = linear_backward(x, params.w_c, g_c);
  g.x += via_delta.input;
  g.x += via_b.input;
  g.x += via_c.input;
  g.params.w_delta = via_delta.weight;
  g.params.delta_bias = via_delta.bias;
  g.params.w_b = via_b.weight;
  g.params.w_c = via_c.weight;
  return g;
}

}  // namespace remotedet
