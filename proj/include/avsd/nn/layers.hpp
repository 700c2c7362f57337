#pragma once

#include "avsd/nn/tensor.hpp"
#include "avsd/rng.hpp"

#include <span>
#include <vector>

namespace avsd::nn {

// ---------------------------------------------------------------------------
// Affine map y = W x + b. Bias tensors are stored as (rows x 1) matrices.

Vector affine(const Matrix& weight, const Matrix& bias, const Vector& x);

/// Accumulates dW and db; writes dx when requested.
void affine_backward(const Matrix& weight, const Vector& x, const Vector& dy, Matrix& d_weight, Matrix& d_bias,
                     Vector* dx);

// ---------------------------------------------------------------------------
// Embedding lookup: row `id` of a (V x E) table.

Vector embedding_lookup(const Matrix& table, Eigen::Index id);
/// Adds dy into row `id` of d_table.
void embedding_backward(Eigen::Index id, const Vector& dy, Matrix& d_table);

// ---------------------------------------------------------------------------
// Topic projection y = W^T t for a (K x E) matrix W.

Vector topic_projection(const Matrix& weight, const Vector& topic);
/// Accumulates dW; writes d_topic when requested.
void topic_projection_backward(const Matrix& weight, const Vector& topic, const Vector& dy, Matrix& d_weight,
                               Vector* d_topic);

// ---------------------------------------------------------------------------
// LSTM cell. Gate rows are laid out as [input, forget, candidate, output],
// each block H rows tall.

struct LstmWeights {
    const Matrix& w_input;   // 4H x D
    const Matrix& w_hidden;  // 4H x H
    const Matrix& bias;      // 4H x 1

    Eigen::Index input_dim() const { return w_input.cols(); }
    Eigen::Index hidden_dim() const { return w_hidden.cols(); }
};

/// Owning parameter set for a standalone cell.
struct LstmCellParams {
    Matrix w_input;
    Matrix w_hidden;
    Matrix bias;

    /// Uniform(-scale, scale) weights, zero bias except forget gate = 1.
    static LstmCellParams init(Eigen::Index input_dim, Eigen::Index hidden_dim, Rng& rng, double scale = 0.08);
    LstmWeights view() const { return {w_input, w_hidden, bias}; }
};

struct LstmStepCache {
    Vector input;
    Vector h_prev;
    Vector c_prev;
    Vector gate_i;
    Vector gate_f;
    Vector gate_g;
    Vector gate_o;
    Vector cell;
    Vector cell_tanh;
    Vector hidden;
};

struct LstmTape {
    std::vector<LstmStepCache> steps;
};

struct LstmOutput {
    std::vector<Vector> hidden;
    Vector cell;
    LstmTape tape;
};

/// Accumulation targets for LSTM parameter gradients.
struct LstmGradRefs {
    Matrix& w_input;
    Matrix& w_hidden;
    Matrix& bias;
};

/// Owning gradient buffers matching an LstmWeights shape.
struct LstmParamGrads {
    Matrix w_input;
    Matrix w_hidden;
    Matrix bias;

    static LstmParamGrads zeros_like(const LstmWeights& w);
    LstmGradRefs refs() { return {w_input, w_hidden, bias}; }
};

struct LstmInputGrads {
    std::vector<Vector> inputs;
    Vector h0;
    Vector c0;
};

struct LstmGradients {
    LstmParamGrads params;
    std::vector<Vector> inputs;
    Vector h0;
    Vector c0;
};

LstmStepCache lstm_step(const LstmWeights& w, const Vector& x, const Vector& h_prev, const Vector& c_prev);

/// Gradient of one step. `dh` and `dc` are the total upstream gradients on
/// this step's hidden and cell outputs. Parameter gradients accumulate into
/// `grads`; dx, dh_prev and dc_prev are overwritten.
void lstm_step_backward(const LstmWeights& w, const LstmStepCache& cache, const Vector& dh, const Vector& dc,
                        LstmGradRefs grads, Vector& dx, Vector& dh_prev, Vector& dc_prev);

LstmOutput lstm_forward(const LstmWeights& w, std::span<const Vector> inputs, const Vector& h0, const Vector& c0);

/// Backpropagates per-step hidden-output gradients through a forward tape.
LstmGradients lstm_backward(const LstmWeights& w, const LstmTape& tape, std::span<const Vector> output_grads);

/// As lstm_backward, accumulating parameter gradients into `grads`.
LstmInputGrads lstm_backward_into(const LstmWeights& w, const LstmTape& tape, std::span<const Vector> output_grads,
                                  LstmGradRefs grads);

// ---------------------------------------------------------------------------
// Softmax cross-entropy.

struct XentResult {
    double loss;
    Vector grad;  // softmax(logits) - onehot(target)
};

XentResult softmax_xent(const Vector& logits, Eigen::Index target);

/// Max-shifted log-softmax.
Vector log_softmax(const Vector& logits);

// ---------------------------------------------------------------------------
// Attention over a memory of N slots (rows of an N x H matrix).
//
// additive:    score_j = v . tanh(Wq q + Wm m_j)
// scaled_dot:  score_j = (q . m_j) / sqrt(H)

enum class AttentionScoring { additive, scaled_dot };

struct AttentionParams {
    const Matrix& w_query;   // A x Hq
    const Matrix& w_memory;  // A x H
    const Matrix& score;     // A x 1
};

/// Precomputed Wm m_j for every slot (N x A). Empty for scaled_dot.
Matrix project_memory(const AttentionParams& p, const Matrix& memory, AttentionScoring scoring);

struct AttentionCache {
    Vector query;
    Matrix activation;  // tanh(Wq q + Wm m_j), N x A (additive only)
    Vector weights;
};

struct AttentionResult {
    Vector context;
    Vector weights;
    AttentionCache cache;
};

/// `valid[j] == 0` masks slot j out of the softmax (its weight is exactly 0).
AttentionResult attention_forward(const AttentionParams& p, const Vector& query, const Matrix& memory,
                                  const Matrix& keys, std::span<const char> valid, AttentionScoring scoring);

struct AttentionGradRefs {
    Matrix& w_query;
    Matrix& w_memory;
    Matrix& score;
};

struct AttentionParamGrads {
    Matrix w_query;
    Matrix w_memory;
    Matrix score;

    static AttentionParamGrads zeros_like(const AttentionParams& p);
    AttentionGradRefs refs() { return {w_query, w_memory, score}; }
};

/// Accumulates into d_memory, d_keys and param grads; overwrites d_query.
void attention_backward(const AttentionParams& p, const AttentionCache& cache, const Matrix& memory,
                        const Vector& d_context, AttentionScoring scoring, AttentionGradRefs grads,
                        Matrix& d_memory, Matrix& d_keys, Vector& d_query);

/// Pushes accumulated key gradients back through the memory projection.
void project_memory_backward(const AttentionParams& p, const Matrix& memory, const Matrix& d_keys,
                             AttentionGradRefs grads, Matrix& d_memory);

// ---------------------------------------------------------------------------
// 1-D convolution over a (channels x length) signal, valid padding.

struct Conv1dShape {
    Eigen::Index in_channels;
    Eigen::Index out_channels;
    Eigen::Index kernel;
    Eigen::Index stride;

    Eigen::Index output_length(Eigen::Index input_length) const;
};

struct Conv1dCache {
    Matrix columns;  // (in_channels * kernel) x L_out
    Eigen::Index input_length = 0;
};

/// weight: out x (in * kernel), laid out channel-major then tap.
Matrix conv1d_forward(const Conv1dShape& shape, const Matrix& weight, const Matrix& bias, const Matrix& input,
                      Conv1dCache* cache);

/// Accumulates dW and db; writes d_input when requested.
void conv1d_backward(const Conv1dShape& shape, const Matrix& weight, const Conv1dCache& cache,
                     const Matrix& d_output, Matrix& d_weight, Matrix& d_bias, Matrix* d_input);

}  // namespace avsd::nn
