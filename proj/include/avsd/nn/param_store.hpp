#pragma once

#include "avsd/nn/tensor.hpp"
#include "avsd/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace avsd::nn {

struct Param {
    std::string name;
    Matrix value;
    Matrix grad;
    Matrix moment1;
    Matrix moment2;
};

/// Named parameters with paired gradients and Adam state. Iteration order is
/// insertion order, which fixes checkpoint layout and update order.
class ParamStore {
public:
    /// Registers a zero-initialised parameter. Names must be unique.
    Matrix& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    Param& get(const std::string& name);
    const Param& get(const std::string& name) const;
    Matrix& value(const std::string& name) { return get(name).value; }
    const Matrix& value(const std::string& name) const { return get(name).value; }
    Matrix& grad(const std::string& name) { return get(name).grad; }

    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }

    void zero_grad();
    double grad_norm() const;
    /// Rescales all gradients so their global L2 norm is at most max_norm.
    /// Returns the pre-clip norm.
    double clip_grad_norm(double max_norm);

    std::uint64_t step() const { return step_; }
    void set_step(std::uint64_t s) { step_ = s; }

    /// Total scalar parameter count.
    std::size_t scalar_count() const;

    /// Throws NumericError naming the first parameter holding NaN/Inf.
    void check_finite_values() const;

private:
    friend void adam_step(ParamStore&, const struct AdamConfig&);

    std::vector<Param> params_;
    std::map<std::string, std::size_t> index_;
    std::uint64_t step_ = 0;
};

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam update over every parameter; increments the step
/// counter. Rejects non-finite gradients before touching any value.
void adam_step(ParamStore& store, const AdamConfig& config);

/// Fills `m` with Uniform(-scale, scale).
void init_uniform(Matrix& m, double scale, Rng& rng);

// Parameter section of the checkpoint container:
//
//   params <count> step <n> optimizer <0|1>
//   param <name> <rows> <cols>
//   <rows lines of cols values>            (value)
//   [<rows lines>] [<rows lines>]          (moment1, moment2 when optimizer=1)
//
// Values use shortest round-trip decimal so reloads are bit-exact.

void write_params(std::ostream& out, const ParamStore& store, bool with_optimizer_state);

/// Reads a section written by write_params into a store whose parameters are
/// already registered with matching names and shapes.
void read_params(std::istream& in, ParamStore& store);

/// Shortest decimal that parses back to exactly `v`.
std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace avsd::nn
