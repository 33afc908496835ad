#include "remotedet/params.hpp"

#include <cmath>
#include <numbers>

namespace remotedet {

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void fill_uniform(Tensor& t, Rng& rng, double bound) {
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
}

Tensor random_tensor(Shape shape, Rng& rng, double bound) {
  Tensor t(std::move(shape));
  fill_uniform(t, rng, bound);
  return t;
}

}  // namespace remotedet
