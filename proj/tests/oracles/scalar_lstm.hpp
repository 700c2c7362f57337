#pragma once

// Scalar LSTM step written with plain loops over std::vector, gate order
// input, forget, candidate, output.

#include <cmath>
#include <vector>

namespace oracle {

struct ScalarLstm {
    std::vector<std::vector<double>> w_input;   // 4H x D
    std::vector<std::vector<double>> w_hidden;  // 4H x H
    std::vector<double> bias;                   // 4H
};

struct ScalarStep {
    std::vector<double> h;
    std::vector<double> c;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline ScalarStep lstm_step(const ScalarLstm& p, const std::vector<double>& x, const std::vector<double>& h_prev,
                            const std::vector<double>& c_prev) {
    const std::size_t hidden = h_prev.size();
    std::vector<double> pre(4 * hidden, 0.0);
    for (std::size_t r = 0; r < 4 * hidden; ++r) {
        double s = p.bias[r];
        for (std::size_t k = 0; k < x.size(); ++k) s += p.w_input[r][k] * x[k];
        for (std::size_t k = 0; k < hidden; ++k) s += p.w_hidden[r][k] * h_prev[k];
        pre[r] = s;
    }
    ScalarStep out{std::vector<double>(hidden), std::vector<double>(hidden)};
    for (std::size_t j = 0; j < hidden; ++j) {
        const double i = sigmoid(pre[j]);
        const double f = sigmoid(pre[hidden + j]);
        const double g = std::tanh(pre[2 * hidden + j]);
        const double o = sigmoid(pre[3 * hidden + j]);
        out.c[j] = f * c_prev[j] + i * g;
        out.h[j] = o * std::tanh(out.c[j]);
    }
    return out;
}

}  // namespace oracle
