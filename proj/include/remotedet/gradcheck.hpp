#pragma once

#include <functional>
#include <stdexcept>

#include "remotedet/tensor.hpp"

namespace remotedet {

/// Raised when a function under finite differencing returns a non-finite value.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ScalarFn = std::function<double(const Tensor&)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every element of x.
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double h = 1e-5);

/// |a - b| / max(|a|, |b|, floor); the floor keeps near-zero entries from dominating.
double relative_error(double a, double b, double floor = 1e-6);
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-6);

}  // namespace remotedet
