#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "remotedet/tensor.hpp"

namespace remotedet {

using ParamVisitor = std::function<void(const std::string& name, Tensor& value)>;

/// Seeded generator with platform-independent uniform and normal draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Integer in [lo, hi] inclusive.
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(uniform() * static_cast<double>(hi - lo + 1));
  }
  bool bernoulli(double p) { return uniform() < p; }
  double normal();
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

void fill_uniform(Tensor& t, Rng& rng, double bound);
Tensor random_tensor(Shape shape, Rng& rng, double bound = 1.0);

/// Copies of every parameter tensor of a weight struct, zero-filled.
template <class Module>
Module zeros_like_params(const Module& module) {
  Module out = module;
  out.for_each_param("", [](const std::string&, Tensor& t) { t.fill(0.0); });
  return out;
}

template <class Module>
std::vector<Tensor*> param_list(Module& module) {
  std::vector<Tensor*> out;
  module.for_each_param("", [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

template <class Module>
std::int64_t param_count(const Module& module) {
  std::int64_t n = 0;
  const_cast<Module&>(module).for_each_param("", [&](const std::string&, Tensor& t) {
    n += static_cast<std::int64_t>(t.size());
  });
  return n;
}

/// dst += scale * src over matching parameter lists.
template <class Module>
void accumulate_params(Module& dst, const Module& src, double scale = 1.0) {
  auto d = param_list(dst);
  auto s = param_list(const_cast<Module&>(src));
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d[i]->size(); ++j) (*d[i])[j] += scale * (*s[i])[j];
}

}  // namespace remotedet
