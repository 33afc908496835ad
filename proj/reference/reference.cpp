#include "reference.hpp"

namespace remotedet::reference {

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  const auto c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const auto c_out = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const auto oh = (h + 2 * padding - kh) / stride + 1, ow = (w + 2 * padding - kw) / stride + 1;
  Tensor out({c_out, oh, ow});
  for (std::int64_t co = 0; co < c_out; ++co)
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t x = 0; x < ow; ++x) {
        double acc = bias[co];
        for (std::int64_t ci = 0; ci < c_in; ++ci)
          for (std::int64_t i = 0; i < kh; ++i)
            for (std::int64_t j = 0; j < kw; ++j) {
              const auto iy = y * stride - padding + i, ix = x * stride - padding + j;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += weight[((co * c_in + ci) * kh + i) * kw + j] * input.at(ci, iy, ix);
            }
        out.at(co, y, x) = acc;
      }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      out.at(i, j) = acc;
    }
  return out;
}

Tensor depthwise_via_grouped(const Tensor& input, const Tensor& weight, const Tensor& bias, int padding) {
  const auto c = weight.dim(0), k = weight.dim(1);
  Tensor dense({c, c, k, k});
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < k * k; ++i) dense[(ch * c + ch) * k * k + i] = weight[ch * k * k + i];
  return conv2d(input, dense, bias, 1, padding);
}

long double erf_series(long double x) {
  // erf(x) = 2/sqrt(pi) * sum_n (-1)^n x^(2n+1) / (n! (2n+1))
  const long double two_over_sqrt_pi = 1.128379167095512573896158903121545172L;
  long double term = x, sum = x;
  for (int n = 1; n < 200; ++n) {
    term *= -x * x / n;
    const long double add = term / (2 * n + 1);
    sum += add;
    if (add == 0.0L) break;
  }
  return two_over_sqrt_pi * sum;
}

}  // namespace remotedet::reference
