#include "avsd/nn/param_store.hpp"

#include "avsd/error.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace avsd::nn {

Matrix& ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (contains(name)) {
        throw UsageError("duplicate parameter name: " + name);
    }
    index_[name] = params_.size();
    params_.push_back(Param{name, Matrix::Zero(rows, cols), Matrix::Zero(rows, cols), Matrix::Zero(rows, cols),
                            Matrix::Zero(rows, cols)});
    return params_.back().value;
}

Param& ParamStore::get(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) {
        throw UsageError("unknown parameter: " + name);
    }
    return params_[it->second];
}

const Param& ParamStore::get(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) {
        throw UsageError("unknown parameter: " + name);
    }
    return params_[it->second];
}

void ParamStore::zero_grad() {
    for (Param& p : params_) {
        p.grad.setZero();
    }
}

double ParamStore::grad_norm() const {
    double sq = 0.0;
    for (const Param& p : params_) {
        sq += p.grad.squaredNorm();
    }
    return std::sqrt(sq);
}

double ParamStore::clip_grad_norm(double max_norm) {
    const double norm = grad_norm();
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (Param& p : params_) {
            p.grad *= scale;
        }
    }
    return norm;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const Param& p : params_) {
        n += static_cast<std::size_t>(p.value.size());
    }
    return n;
}

void ParamStore::check_finite_values() const {
    for (const Param& p : params_) {
        check_finite(p.value, "parameter " + p.name);
    }
}

void adam_step(ParamStore& store, const AdamConfig& config) {
    for (const Param& p : store.params_) {
        if (!p.grad.allFinite()) {
            throw NumericError("non-finite gradient in parameter " + p.name);
        }
    }
    store.step_ += 1;
    const double t = static_cast<double>(store.step_);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);
    for (Param& p : store.params_) {
        p.moment1 = config.beta1 * p.moment1 + (1.0 - config.beta1) * p.grad;
        p.moment2 = config.beta2 * p.moment2 + (1.0 - config.beta2) * p.grad.cwiseAbs2();
        p.value.array() -= config.learning_rate * (p.moment1.array() / correction1) /
                           ((p.moment2.array() / correction2).sqrt() + config.epsilon);
    }
    store.check_finite_values();
}

void init_uniform(Matrix& m, double scale, Rng& rng) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = rng.uniform(-scale, scale);
    }
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw DataError("invalid number: '" + std::string(text) + "'");
    }
    return v;
}

namespace {

void write_matrix(std::ostream& out, const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c != 0) {
                out << ' ';
            }
            out << format_double(m(r, c));
        }
        out << '\n';
    }
}

void read_matrix(std::istream& in, Matrix& m, const std::string& what) {
    std::string token;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        if (!(in >> token)) {
            throw DataError("checkpoint truncated while reading " + what);
        }
        m.data()[i] = parse_double(token);
    }
}

}  // namespace

void write_params(std::ostream& out, const ParamStore& store, bool with_optimizer_state) {
    out << "params " << store.params().size() << " step " << store.step() << " optimizer "
        << (with_optimizer_state ? 1 : 0) << '\n';
    for (const Param& p : store.params()) {
        out << "param " << p.name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
        write_matrix(out, p.value);
        if (with_optimizer_state) {
            write_matrix(out, p.moment1);
            write_matrix(out, p.moment2);
        }
    }
}

void read_params(std::istream& in, ParamStore& store) {
    std::string tag;
    std::size_t count = 0;
    std::string step_tag;
    std::uint64_t step = 0;
    std::string opt_tag;
    int with_opt = 0;
    if (!(in >> tag >> count >> step_tag >> step >> opt_tag >> with_opt) || tag != "params" || step_tag != "step" ||
        opt_tag != "optimizer") {
        throw DataError("checkpoint: malformed params header");
    }
    if (count != store.params().size()) {
        throw DataError("checkpoint: expected " + std::to_string(store.params().size()) + " parameters, found " +
                        std::to_string(count));
    }
    for (std::size_t i = 0; i < count; ++i) {
        std::string name;
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;
        if (!(in >> tag >> name >> rows >> cols) || tag != "param") {
            throw DataError("checkpoint: malformed param header at index " + std::to_string(i));
        }
        Param& p = store.get(name);
        if (p.value.rows() != rows || p.value.cols() != cols) {
            throw DataError("checkpoint: shape mismatch for " + name);
        }
        read_matrix(in, p.value, name);
        if (with_opt != 0) {
            read_matrix(in, p.moment1, name + " moment1");
            read_matrix(in, p.moment2, name + " moment2");
        } else {
            p.moment1.setZero();
            p.moment2.setZero();
        }
        p.grad.setZero();
    }
    store.set_step(with_opt != 0 ? step : 0);
}

}  // namespace avsd::nn
