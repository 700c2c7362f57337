#include "avsd/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace avsd::nn {

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

double finite_difference(Matrix& param, Eigen::Index index, const std::function<double()>& loss, double step) {
    double& slot = param.data()[index];
    const double saved = slot;
    slot = saved + step;
    const double plus = loss();
    slot = saved - step;
    const double minus = loss();
    slot = saved;
    return (plus - minus) / (2.0 * step);
}

double check_gradient(Matrix& param, const Matrix& analytic, const std::function<double()>& loss,
                      std::span<const Eigen::Index> indices, double step) {
    double worst = 0.0;
    auto visit = [&](Eigen::Index i) {
        const double numeric = finite_difference(param, i, loss, step);
        worst = std::max(worst, relative_error(analytic.data()[i], numeric));
    };
    if (indices.empty()) {
        for (Eigen::Index i = 0; i < param.size(); ++i) {
            visit(i);
        }
    } else {
        for (Eigen::Index i : indices) {
            visit(i);
        }
    }
    return worst;
}

}  // namespace avsd::nn
