#include "avsd/nn/tensor.hpp"

#include "avsd/error.hpp"

#include <string>

namespace avsd::nn {

void check_finite(const Matrix& m, std::string_view what) {
    if (!m.allFinite()) {
        throw NumericError("non-finite value in " + std::string(what));
    }
}

void check_finite(const Vector& v, std::string_view what) {
    if (!v.allFinite()) {
        throw NumericError("non-finite value in " + std::string(what));
    }
}

void check_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, std::string_view what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw UsageError("shape mismatch for " + std::string(what) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
    }
}

}  // namespace avsd::nn
