#include "avsd/nn/layers.hpp"

#include "avsd/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace avsd::nn {

namespace {

Vector sigmoid(const Vector& z) {
    return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

Vector tanh_vec(const Vector& z) {
    return z.array().tanh().matrix();
}

void require(bool ok, const std::string& message) {
    if (!ok) {
        throw UsageError(message);
    }
}

}  // namespace

Vector affine(const Matrix& weight, const Matrix& bias, const Vector& x) {
    require(weight.cols() == x.size(), "affine: input width " + std::to_string(x.size()) + " != weight cols " +
                                           std::to_string(weight.cols()));
    return weight * x + bias.col(0);
}

void affine_backward(const Matrix& weight, const Vector& x, const Vector& dy, Matrix& d_weight, Matrix& d_bias,
                     Vector* dx) {
    d_weight.noalias() += dy * x.transpose();
    d_bias.col(0) += dy;
    if (dx != nullptr) {
        *dx = weight.transpose() * dy;
    }
}

// --------------------------------------------------------------------------- embedding

Vector embedding_lookup(const Matrix& table, Eigen::Index id) {
    require(id >= 0 && id < table.rows(), "embedding: index " + std::to_string(id) + " outside table of " +
                                              std::to_string(table.rows()) + " rows");
    return table.row(id).transpose();
}

void embedding_backward(Eigen::Index id, const Vector& dy, Matrix& d_table) { d_table.row(id) += dy.transpose(); }

Vector topic_projection(const Matrix& weight, const Vector& topic) {
    require(weight.rows() == topic.size(), "topic projection: topic width " + std::to_string(topic.size()) +
                                               " != weight rows " + std::to_string(weight.rows()));
    return weight.transpose() * topic;
}

void topic_projection_backward(const Matrix& weight, const Vector& topic, const Vector& dy, Matrix& d_weight,
                               Vector* d_topic) {
    d_weight.noalias() += topic * dy.transpose();
    if (d_topic != nullptr) *d_topic = weight * dy;
}

// --------------------------------------------------------------------------- LSTM

LstmCellParams LstmCellParams::init(Eigen::Index input_dim, Eigen::Index hidden_dim, Rng& rng, double scale) {
    LstmCellParams p;
    p.w_input.resize(4 * hidden_dim, input_dim);
    p.w_hidden.resize(4 * hidden_dim, hidden_dim);
    for (auto* m : {&p.w_input, &p.w_hidden}) {
        for (Eigen::Index i = 0; i < m->size(); ++i) {
            m->data()[i] = rng.uniform(-scale, scale);
        }
    }
    p.bias = Matrix::Zero(4 * hidden_dim, 1);
    p.bias.block(hidden_dim, 0, hidden_dim, 1).setOnes();
    return p;
}

LstmParamGrads LstmParamGrads::zeros_like(const LstmWeights& w) {
    return {Matrix::Zero(w.w_input.rows(), w.w_input.cols()), Matrix::Zero(w.w_hidden.rows(), w.w_hidden.cols()),
            Matrix::Zero(w.bias.rows(), 1)};
}

LstmStepCache lstm_step(const LstmWeights& w, const Vector& x, const Vector& h_prev, const Vector& c_prev) {
    const Eigen::Index hd = w.hidden_dim();
    require(w.w_input.rows() == 4 * hd, "lstm: w_input must have 4H rows");
    require(w.bias.rows() == 4 * hd && w.bias.cols() == 1, "lstm: bias must be 4H x 1");
    require(x.size() == w.input_dim(), "lstm: input width " + std::to_string(x.size()) + " != w_input cols " +
                                           std::to_string(w.input_dim()));
    require(h_prev.size() == hd, "lstm: h0 width mismatch");
    require(c_prev.size() == hd, "lstm: c0 width mismatch");

    const Vector z = w.w_input * x + w.w_hidden * h_prev + w.bias.col(0);
    LstmStepCache s;
    s.input = x;
    s.h_prev = h_prev;
    s.c_prev = c_prev;
    s.gate_i = sigmoid(z.segment(0, hd));
    s.gate_f = sigmoid(z.segment(hd, hd));
    s.gate_g = tanh_vec(z.segment(2 * hd, hd));
    s.gate_o = sigmoid(z.segment(3 * hd, hd));
    s.cell = s.gate_f.cwiseProduct(c_prev) + s.gate_i.cwiseProduct(s.gate_g);
    s.cell_tanh = tanh_vec(s.cell);
    s.hidden = s.gate_o.cwiseProduct(s.cell_tanh);
    return s;
}

void lstm_step_backward(const LstmWeights& w, const LstmStepCache& s, const Vector& dh, const Vector& dc_in,
                        LstmGradRefs grads, Vector& dx, Vector& dh_prev, Vector& dc_prev) {
    const Eigen::Index hd = w.hidden_dim();
    const auto ones = Vector::Ones(hd).array();

    const Vector dc = dc_in + dh.cwiseProduct(s.gate_o).cwiseProduct((ones - s.cell_tanh.array().square()).matrix());
    Vector dz(4 * hd);
    dz.segment(0, hd) = (dc.array() * s.gate_g.array() * s.gate_i.array() * (ones - s.gate_i.array())).matrix();
    dz.segment(hd, hd) = (dc.array() * s.c_prev.array() * s.gate_f.array() * (ones - s.gate_f.array())).matrix();
    dz.segment(2 * hd, hd) = (dc.array() * s.gate_i.array() * (ones - s.gate_g.array().square())).matrix();
    dz.segment(3 * hd, hd) = (dh.array() * s.cell_tanh.array() * s.gate_o.array() * (ones - s.gate_o.array())).matrix();

    grads.w_input.noalias() += dz * s.input.transpose();
    grads.w_hidden.noalias() += dz * s.h_prev.transpose();
    grads.bias.col(0) += dz;

    dx = w.w_input.transpose() * dz;
    dh_prev = w.w_hidden.transpose() * dz;
    dc_prev = dc.cwiseProduct(s.gate_f);
}

LstmOutput lstm_forward(const LstmWeights& w, std::span<const Vector> inputs, const Vector& h0, const Vector& c0) {
    require(!inputs.empty(), "lstm: empty input sequence");
    LstmOutput out;
    out.tape.steps.reserve(inputs.size());
    out.hidden.reserve(inputs.size());
    Vector h = h0;
    Vector c = c0;
    for (const Vector& x : inputs) {
        LstmStepCache s = lstm_step(w, x, h, c);
        h = s.hidden;
        c = s.cell;
        out.hidden.push_back(h);
        out.tape.steps.push_back(std::move(s));
    }
    out.cell = c;
    return out;
}

LstmGradients lstm_backward(const LstmWeights& w, const LstmTape& tape, std::span<const Vector> output_grads) {
    LstmGradients g;
    g.params = LstmParamGrads::zeros_like(w);
    LstmInputGrads in = lstm_backward_into(w, tape, output_grads, g.params.refs());
    g.inputs = std::move(in.inputs);
    g.h0 = std::move(in.h0);
    g.c0 = std::move(in.c0);
    return g;
}

LstmInputGrads lstm_backward_into(const LstmWeights& w, const LstmTape& tape, std::span<const Vector> output_grads,
                                  LstmGradRefs grads) {
    if (output_grads.size() != tape.steps.size()) {
        throw UsageError("lstm_backward: " + std::to_string(output_grads.size()) + " output gradients for a tape of " +
                         std::to_string(tape.steps.size()) + " steps");
    }
    const Eigen::Index hd = w.hidden_dim();
    LstmInputGrads g;
    g.inputs.resize(tape.steps.size());
    Vector dh_next = Vector::Zero(hd);
    Vector dc_next = Vector::Zero(hd);
    Vector dh_prev;
    Vector dc_prev;
    for (std::size_t t = tape.steps.size(); t-- > 0;) {
        // An empty vector stands for a zero gradient.
        const Vector dh = output_grads[t].size() == 0 ? dh_next : Vector(output_grads[t] + dh_next);
        lstm_step_backward(w, tape.steps[t], dh, dc_next, grads, g.inputs[t], dh_prev, dc_prev);
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    g.h0 = dh_next;
    g.c0 = dc_next;
    return g;
}

// --------------------------------------------------------------------------- softmax

Vector log_softmax(const Vector& logits) {
    const double shift = logits.maxCoeff();
    const double lse = std::log((logits.array() - shift).exp().sum()) + shift;
    return (logits.array() - lse).matrix();
}

XentResult softmax_xent(const Vector& logits, Eigen::Index target) {
    require(logits.size() >= 2, "softmax_xent: need at least 2 classes");
    require(target >= 0 && target < logits.size(), "softmax_xent: target out of range");
    const Vector logp = log_softmax(logits);
    XentResult r{-logp(target), logp.array().exp().matrix()};
    r.grad(target) -= 1.0;
    return r;
}

// --------------------------------------------------------------------------- attention

Matrix project_memory(const AttentionParams& p, const Matrix& memory, AttentionScoring scoring) {
    if (scoring == AttentionScoring::scaled_dot) {
        return {};
    }
    require(memory.cols() == p.w_memory.cols(), "attention: memory width != w_memory cols");
    return memory * p.w_memory.transpose();
}

AttentionResult attention_forward(const AttentionParams& p, const Vector& query, const Matrix& memory,
                                  const Matrix& keys, std::span<const char> valid, AttentionScoring scoring) {
    const Eigen::Index n = memory.rows();
    require(static_cast<std::size_t>(n) == valid.size(), "attention: mask length != memory slots");
    bool any = false;
    for (char v : valid) {
        any = any || v != 0;
    }
    if (n == 0 || !any) {
        throw UsageError("attention: empty memory");
    }

    AttentionResult r;
    r.cache.query = query;
    Vector scores(n);
    if (scoring == AttentionScoring::additive) {
        require(query.size() == p.w_query.cols(), "attention: query width != w_query cols");
        const Vector qp = p.w_query * query;
        r.cache.activation = (keys.rowwise() + qp.transpose()).array().tanh().matrix();
        scores = r.cache.activation * p.score.col(0);
    } else {
        require(query.size() == memory.cols(), "attention: query width != memory width");
        scores = (memory * query) / std::sqrt(static_cast<double>(memory.cols()));
    }

    double shift = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
        if (valid[j] != 0) {
            shift = std::max(shift, scores(j));
        }
    }
    Vector weights = Vector::Zero(n);
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (valid[j] != 0) {
            weights(j) = std::exp(scores(j) - shift);
            total += weights(j);
        }
    }
    weights /= total;
    r.context = memory.transpose() * weights;
    r.weights = weights;
    r.cache.weights = weights;
    return r;
}

AttentionParamGrads AttentionParamGrads::zeros_like(const AttentionParams& p) {
    return {Matrix::Zero(p.w_query.rows(), p.w_query.cols()), Matrix::Zero(p.w_memory.rows(), p.w_memory.cols()),
            Matrix::Zero(p.score.rows(), 1)};
}

void attention_backward(const AttentionParams& p, const AttentionCache& cache, const Matrix& memory,
                        const Vector& d_context, AttentionScoring scoring, AttentionGradRefs grads,
                        Matrix& d_memory, Matrix& d_keys, Vector& d_query) {
    const Vector& a = cache.weights;
    const Vector da = memory * d_context;
    d_memory.noalias() += a * d_context.transpose();
    // Masked slots have a_j = 0 so their score gradient vanishes.
    const Vector ds = (a.array() * (da.array() - a.dot(da))).matrix();

    if (scoring == AttentionScoring::additive) {
        const Matrix& u = cache.activation;
        grads.score.col(0).noalias() += u.transpose() * ds;
        Matrix dz = (ds * p.score.col(0).transpose()).array() * (1.0 - u.array().square());
        d_keys += dz;
        const Vector dqp = dz.colwise().sum().transpose();
        grads.w_query.noalias() += dqp * cache.query.transpose();
        d_query = p.w_query.transpose() * dqp;
    } else {
        const double scale = 1.0 / std::sqrt(static_cast<double>(memory.cols()));
        d_memory.noalias() += scale * ds * cache.query.transpose();
        d_query = scale * (memory.transpose() * ds);
    }
}

void project_memory_backward(const AttentionParams& p, const Matrix& memory, const Matrix& d_keys,
                             AttentionGradRefs grads, Matrix& d_memory) {
    grads.w_memory.noalias() += d_keys.transpose() * memory;
    d_memory.noalias() += d_keys * p.w_memory;
}

// --------------------------------------------------------------------------- conv1d

Eigen::Index Conv1dShape::output_length(Eigen::Index input_length) const {
    if (input_length < kernel) {
        return 0;
    }
    return (input_length - kernel) / stride + 1;
}

Matrix conv1d_forward(const Conv1dShape& shape, const Matrix& weight, const Matrix& bias, const Matrix& input,
                      Conv1dCache* cache) {
    require(input.rows() == shape.in_channels, "conv1d: input channel count mismatch");
    check_shape(weight, shape.out_channels, shape.in_channels * shape.kernel, "conv1d weight");
    const Eigen::Index len_out = shape.output_length(input.cols());
    require(len_out > 0, "conv1d: input shorter than kernel");

    Matrix columns(shape.in_channels * shape.kernel, len_out);
    for (Eigen::Index c = 0; c < shape.in_channels; ++c) {
        for (Eigen::Index k = 0; k < shape.kernel; ++k) {
            auto row = columns.row(c * shape.kernel + k);
            for (Eigen::Index t = 0; t < len_out; ++t) {
                row(t) = input(c, t * shape.stride + k);
            }
        }
    }
    Matrix out = weight * columns;
    out.colwise() += bias.col(0);
    if (cache != nullptr) {
        cache->columns = std::move(columns);
        cache->input_length = input.cols();
    }
    return out;
}

void conv1d_backward(const Conv1dShape& shape, const Matrix& weight, const Conv1dCache& cache,
                     const Matrix& d_output, Matrix& d_weight, Matrix& d_bias, Matrix* d_input) {
    d_weight.noalias() += d_output * cache.columns.transpose();
    d_bias.col(0) += d_output.rowwise().sum();
    if (d_input == nullptr) {
        return;
    }
    const Matrix d_columns = weight.transpose() * d_output;
    *d_input = Matrix::Zero(shape.in_channels, cache.input_length);
    const Eigen::Index len_out = d_output.cols();
    for (Eigen::Index c = 0; c < shape.in_channels; ++c) {
        for (Eigen::Index k = 0; k < shape.kernel; ++k) {
            auto row = d_columns.row(c * shape.kernel + k);
            for (Eigen::Index t = 0; t < len_out; ++t) {
                (*d_input)(c, t * shape.stride + k) += row(t);
            }
        }
    }
}

}  // namespace avsd::nn
