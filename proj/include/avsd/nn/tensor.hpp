#pragma once

#include <Eigen/Dense>

#include <string_view>

namespace avsd::nn {

/// Row-major dense matrix; the storage type for every parameter tensor.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Throws NumericError naming `what` when any entry is NaN or infinite.
void check_finite(const Matrix& m, std::string_view what);
void check_finite(const Vector& v, std::string_view what);

/// Throws UsageError naming `what` unless `m` is rows x cols.
void check_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, std::string_view what);

}  // namespace avsd::nn
