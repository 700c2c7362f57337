#pragma once

#include "avsd/nn/tensor.hpp"

#include <functional>
#include <span>

namespace avsd::nn {

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
/// gradient is ~0 from dominating through round-off.
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Central finite difference of `loss` w.r.t. entry `index` of `param`.
/// The entry is restored afterwards.
double finite_difference(Matrix& param, Eigen::Index index, const std::function<double()>& loss, double step = 1e-5);

/// Max relative error between `analytic` and central differences over the
/// given flat indices (all entries when `indices` is empty).
double check_gradient(Matrix& param, const Matrix& analytic, const std::function<double()>& loss,
                      std::span<const Eigen::Index> indices = {}, double step = 1e-5);

}  // namespace avsd::nn
