#pragma once

#include "avsd/audio.hpp"
#include "avsd/corpus.hpp"
#include "avsd/nn/layers.hpp"
#include "avsd/nn/param_store.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace avsd::model {

using nn::Matrix;
using nn::Vector;

/// Which memory the decoder attends over.
enum class AttentionMode {
    none,         // baseline: history enters only through the decoder's initial state
    word_all,     // every word-LSTM state of every history turn (sentence LSTM removed)
    word_last,    // last word-LSTM state of each turn
    sent_all,     // every sentence-LSTM state
    sent_all_av,  // sentence-LSTM states plus one slot per AV modality
};

enum class TopicMode {
    none,
    decoder_feature,  // raw topic distribution appended to every decoder input
    hlstm_feature,    // topic distribution appended to every sentence-LSTM input
    topic_embedding,  // learned projection of the distribution appended to decoder inputs
};

enum class AudioMode { none, fuse };

std::string_view to_string(AttentionMode m);
std::string_view to_string(TopicMode m);
std::string_view to_string(AudioMode m);
std::optional<AttentionMode> parse_attention_mode(std::string_view s);
std::optional<TopicMode> parse_topic_mode(std::string_view s);
std::optional<AudioMode> parse_audio_mode(std::string_view s);

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t embed_dim = 64;
    std::size_t hidden_dim = 128;
    int history_turns = -1;  // most recent QA turns consumed; -1 = all
    AttentionMode attention = AttentionMode::none;
    nn::AttentionScoring scoring = nn::AttentionScoring::additive;
    TopicMode topic_mode = TopicMode::none;
    std::size_t topic_dim = 0;
    AudioMode audio_mode = AudioMode::none;
    bool use_visual = false;
    std::size_t av_dim = 0;
    std::size_t beam_width = 1;
    std::size_t max_decode_len = 20;

    /// Throws UsageError on inconsistent settings.
    void validate() const;

    bool uses_audio() const { return audio_mode == AudioMode::fuse; }
    bool uses_av() const { return uses_audio() || use_visual; }
    bool has_sentence_lstm() const { return attention != AttentionMode::word_all; }

    std::size_t topic_feature_width() const;
    std::size_t decoder_input_width() const;
    std::size_t sentence_input_width() const;

    std::map<std::string, std::string> to_kv() const;
    /// Applies recognised keys; returns the keys it did not recognise.
    std::vector<std::string> apply_kv(const std::map<std::string, std::string>& kv);
};

/// Everything the model sees when answering one question. Token ids are
/// vocabulary indices; history turns are question+answer, oldest first.
struct DialogContext {
    std::vector<int> caption;
    std::vector<std::vector<int>> history;
    std::vector<int> question;
    std::shared_ptr<const audio::FeatureSequence> audio;
    std::shared_ptr<const audio::FeatureSequence> visual;
    std::vector<double> topic;
};

struct TrainingExample {
    DialogContext context;
    std::vector<int> answer;  // without BOS/EOS
};

struct EncodedContext {
    Vector question_code;
    std::vector<std::vector<Vector>> history_word_states;  // caption first
    std::vector<Vector> history_word_last;
    std::vector<Vector> history_sentence_states;
    std::optional<Vector> av_code;
    std::vector<Vector> av_slots;  // one per modality in use (audio, then visual)
};

struct AttentionOutput {
    Vector context;
    std::vector<double> weights;
};

struct DecoderState {
    Vector hidden;
    Vector cell;
};

struct StepOutput {
    Vector logits;
    DecoderState state;
    std::optional<std::vector<double>> attention;
};

/// Attention memory for a mode: slots as rows plus a validity mask (padding
/// rows of word_all are masked).
struct AttentionMemory {
    Matrix slots;
    std::vector<char> valid;
};

AttentionMemory build_memory(AttentionMode mode, const EncodedContext& ctx);

class DialogModel {
public:
    DialogModel(ModelConfig config, std::uint64_t rng_seed);

    const ModelConfig& config() const { return config_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    /// Overwrites embedding rows for tokens present in `vectors`.
    /// Returns the number of rows initialised.
    std::size_t load_embeddings(const corpus::Vocabulary& vocab,
                                const std::map<std::string, std::vector<double>>& vectors);

    /// History (with caption as turn 0) truncated to the configured turns.
    std::vector<std::vector<int>> consumed_turns(const DialogContext& ctx) const;

    EncodedContext encode(const DialogContext& ctx) const;
    DecoderState initial_state(const EncodedContext& enc) const;
    AttentionOutput attend(AttentionMode mode, const Vector& query, const EncodedContext& enc) const;
    StepOutput decode_step(int prev_token, const DecoderState& state, const EncodedContext& enc,
                           const std::vector<double>& topic) const;

    /// Mean token cross-entropy over the batch with teacher forcing; when
    /// `accumulate` is set the gradient of that mean is added to params().grad.
    double forward_loss(std::span<const TrainingExample> batch, bool accumulate = true);
    double evaluate_loss(std::span<const TrainingExample> batch) const;

    /// Greedy when beam_width == 1, beam search otherwise. Output excludes BOS/EOS.
    std::vector<int> generate(const DialogContext& ctx) const;
    std::vector<int> greedy_decode(const DialogContext& ctx) const;
    std::vector<int> beam_search(const DialogContext& ctx, std::size_t width) const;

private:
    struct ExampleTape;
    struct DecodeContext;

    EncodedContext encode_impl(const DialogContext& ctx, ExampleTape* tape) const;
    DecodeContext prepare_decode(const EncodedContext& enc, const std::vector<double>& topic) const;
    nn::AttentionParams attention_params() const;
    StepOutput step_impl(const DecodeContext& dc, int prev_token, const DecoderState& state,
                         nn::AttentionCache* att_cache, nn::LstmStepCache* step_cache) const;
    double run_example(const TrainingExample& ex, double scale, bool backward);
    nn::LstmWeights lstm(const std::string& prefix) const;
    nn::LstmGradRefs lstm_grads(const std::string& prefix);
    Vector embed(int token) const;
    Vector topic_feature(const std::vector<double>& topic) const;

    ModelConfig config_;
    nn::ParamStore params_;
};

/// Text word vectors: "token v1 ... vD" per line.
std::map<std::string, std::vector<double>> load_word_vectors(const std::filesystem::path& path);

// Checkpoint container (text, versioned):
//
//   avsd-checkpoint 1
//   config <n>            n lines "key = value"
//   meta <n>              n lines "key = value"
//   vocab <n>             n lines, one token each
//   params ...            see nn::write_params
struct Checkpoint {
    ModelConfig config;
    std::map<std::string, std::string> meta;
    corpus::Vocabulary vocab;
    std::unique_ptr<DialogModel> model;
};

void save_checkpoint(const std::filesystem::path& path, const DialogModel& model, const corpus::Vocabulary& vocab,
                     const std::map<std::string, std::string>& meta, bool with_optimizer_state = true);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace avsd::model
