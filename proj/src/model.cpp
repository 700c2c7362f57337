#include "avsd/model.hpp"

#include "avsd/error.hpp"
#include "avsd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace avsd::model {

// --------------------------------------------------------------------------- enums

std::string_view to_string(AttentionMode m) {
    switch (m) {
        case AttentionMode::none: return "none";
        case AttentionMode::word_all: return "word_all";
        case AttentionMode::word_last: return "word_last";
        case AttentionMode::sent_all: return "sent_all";
        case AttentionMode::sent_all_av: return "sent_all_av";
    }
    return "?";
}

std::string_view to_string(TopicMode m) {
    switch (m) {
        case TopicMode::none: return "none";
        case TopicMode::decoder_feature: return "decoder_feature";
        case TopicMode::hlstm_feature: return "hlstm_feature";
        case TopicMode::topic_embedding: return "topic_embedding";
    }
    return "?";
}

std::string_view to_string(AudioMode m) {
    return m == AudioMode::fuse ? "fuse" : "none";
}

std::optional<AttentionMode> parse_attention_mode(std::string_view s) {
    for (auto m : {AttentionMode::none, AttentionMode::word_all, AttentionMode::word_last, AttentionMode::sent_all,
                   AttentionMode::sent_all_av}) {
        if (to_string(m) == s) return m;
    }
    return std::nullopt;
}

std::optional<TopicMode> parse_topic_mode(std::string_view s) {
    for (auto m : {TopicMode::none, TopicMode::decoder_feature, TopicMode::hlstm_feature, TopicMode::topic_embedding}) {
        if (to_string(m) == s) return m;
    }
    return std::nullopt;
}

std::optional<AudioMode> parse_audio_mode(std::string_view s) {
    if (s == "none") return AudioMode::none;
    if (s == "fuse") return AudioMode::fuse;
    return std::nullopt;
}

// --------------------------------------------------------------------------- config

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw UsageError("invalid model config: " + msg); };
    if (vocab_size <= static_cast<std::size_t>(corpus::Vocabulary::reserved)) {
        fail("vocab_size must exceed the 4 reserved tokens");
    }
    if (embed_dim < 1 || hidden_dim < 1) fail("embed_dim and hidden_dim must be >= 1");
    if (history_turns < -1) fail("history_turns must be -1 (all) or >= 0");
    if (topic_mode != TopicMode::none && topic_dim == 0) fail("topic_mode requires topic_dim > 0");
    if (topic_mode == TopicMode::hlstm_feature && attention == AttentionMode::word_all) {
        fail("topic_mode=hlstm_feature needs the sentence LSTM, which attention_mode=word_all removes");
    }
    if (attention == AttentionMode::sent_all_av && !uses_av()) {
        fail("attention_mode=sent_all_av requires audio_mode=fuse or use_visual=true");
    }
    if (uses_av() && av_dim == 0) fail("AV features in use but av_dim = 0");
    if (beam_width < 1) fail("beam_width must be >= 1");
    if (max_decode_len < 1) fail("max_decode_len must be >= 1");
}

std::size_t ModelConfig::topic_feature_width() const {
    switch (topic_mode) {
        case TopicMode::decoder_feature: return topic_dim;
        case TopicMode::topic_embedding: return embed_dim;
        default: return 0;
    }
}

std::size_t ModelConfig::decoder_input_width() const {
    return embed_dim + (attention != AttentionMode::none ? hidden_dim : 0) + topic_feature_width();
}

std::size_t ModelConfig::sentence_input_width() const {
    return hidden_dim + (topic_mode == TopicMode::hlstm_feature ? topic_dim : 0);
}

std::map<std::string, std::string> ModelConfig::to_kv() const {
    return {
        {"vocab_size", std::to_string(vocab_size)},
        {"embed_dim", std::to_string(embed_dim)},
        {"hidden_dim", std::to_string(hidden_dim)},
        {"history_turns", history_turns < 0 ? "all" : std::to_string(history_turns)},
        {"attention_mode", std::string(to_string(attention))},
        {"attention_scoring", scoring == nn::AttentionScoring::additive ? "additive" : "scaled_dot"},
        {"topic_mode", std::string(to_string(topic_mode))},
        {"topic_dim", std::to_string(topic_dim)},
        {"audio_mode", std::string(to_string(audio_mode))},
        {"use_visual", use_visual ? "true" : "false"},
        {"av_dim", std::to_string(av_dim)},
        {"beam_width", std::to_string(beam_width)},
        {"max_decode_len", std::to_string(max_decode_len)},
    };
}

namespace {

std::size_t parse_count(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(value, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != value.size() || value[0] == '-') {
        throw UsageError("config key '" + key + "' expects a non-negative integer, got '" + value + "'");
    }
    return static_cast<std::size_t>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw UsageError("config key '" + key + "' expects true/false, got '" + value + "'");
}

}  // namespace

std::vector<std::string> ModelConfig::apply_kv(const std::map<std::string, std::string>& kv) {
    std::vector<std::string> unknown;
    for (const auto& [key, value] : kv) {
        if (key == "vocab_size") {
            vocab_size = parse_count(key, value);
        } else if (key == "embed_dim") {
            embed_dim = parse_count(key, value);
        } else if (key == "hidden_dim") {
            hidden_dim = parse_count(key, value);
        } else if (key == "history_turns") {
            history_turns = value == "all" ? -1 : static_cast<int>(parse_count(key, value));
        } else if (key == "attention_mode") {
            const auto m = parse_attention_mode(value);
            if (!m) throw UsageError("unknown attention_mode '" + value + "'");
            attention = *m;
        } else if (key == "attention_scoring") {
            if (value == "additive") {
                scoring = nn::AttentionScoring::additive;
            } else if (value == "scaled_dot") {
                scoring = nn::AttentionScoring::scaled_dot;
            } else {
                throw UsageError("unknown attention_scoring '" + value + "'");
            }
        } else if (key == "topic_mode") {
            const auto m = parse_topic_mode(value);
            if (!m) throw UsageError("unknown topic_mode '" + value + "'");
            topic_mode = *m;
        } else if (key == "topic_dim") {
            topic_dim = parse_count(key, value);
        } else if (key == "audio_mode") {
            const auto m = parse_audio_mode(value);
            if (!m) throw UsageError("unknown audio_mode '" + value + "'");
            audio_mode = *m;
        } else if (key == "use_visual") {
            use_visual = parse_bool(key, value);
        } else if (key == "av_dim") {
            av_dim = parse_count(key, value);
        } else if (key == "beam_width") {
            beam_width = parse_count(key, value);
        } else if (key == "max_decode_len") {
            max_decode_len = parse_count(key, value);
        } else {
            unknown.push_back(key);
        }
    }
    return unknown;
}

// --------------------------------------------------------------------------- memory

AttentionMemory build_memory(AttentionMode mode, const EncodedContext& ctx) {
    AttentionMemory mem;
    const Eigen::Index h = ctx.question_code.size();
    auto fill_rows = [&](const std::vector<Vector>& rows, Eigen::Index offset) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            mem.slots.row(offset + static_cast<Eigen::Index>(i)) = rows[i].transpose();
        }
    };
    switch (mode) {
        case AttentionMode::none:
            throw UsageError("attend: attention mode 'none' has no memory");
        case AttentionMode::word_all: {
            std::size_t max_len = 0;
            for (const auto& turn : ctx.history_word_states) max_len = std::max(max_len, turn.size());
            const std::size_t n = ctx.history_word_states.size() * max_len;
            mem.slots = Matrix::Zero(static_cast<Eigen::Index>(n), h);
            mem.valid.assign(n, 0);
            for (std::size_t t = 0; t < ctx.history_word_states.size(); ++t) {
                const auto& turn = ctx.history_word_states[t];
                for (std::size_t p = 0; p < turn.size(); ++p) {
                    const std::size_t row = t * max_len + p;
                    mem.slots.row(static_cast<Eigen::Index>(row)) = turn[p].transpose();
                    mem.valid[row] = 1;
                }
            }
            break;
        }
        case AttentionMode::word_last:
            mem.slots.resize(static_cast<Eigen::Index>(ctx.history_word_last.size()), h);
            fill_rows(ctx.history_word_last, 0);
            mem.valid.assign(ctx.history_word_last.size(), 1);
            break;
        case AttentionMode::sent_all:
        case AttentionMode::sent_all_av: {
            const std::size_t extra = mode == AttentionMode::sent_all_av ? ctx.av_slots.size() : 0;
            const std::size_t n = ctx.history_sentence_states.size() + extra;
            mem.slots.resize(static_cast<Eigen::Index>(n), h);
            fill_rows(ctx.history_sentence_states, 0);
            if (extra != 0) {
                fill_rows(ctx.av_slots, static_cast<Eigen::Index>(ctx.history_sentence_states.size()));
            }
            mem.valid.assign(n, 1);
            break;
        }
    }
    if (mem.slots.rows() == 0) {
        throw UsageError("attend: empty memory");
    }
    return mem;
}

// --------------------------------------------------------------------------- model

namespace {

const Matrix& empty_matrix() {
    static const Matrix m;
    return m;
}

Vector concat(std::initializer_list<const Vector*> parts) {
    Eigen::Index n = 0;
    for (const Vector* p : parts) n += p->size();
    Vector out(n);
    Eigen::Index off = 0;
    for (const Vector* p : parts) {
        out.segment(off, p->size()) = *p;
        off += p->size();
    }
    return out;
}

void add_lstm(nn::ParamStore& store, const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim,
              Rng& rng) {
    const auto d = static_cast<Eigen::Index>(input_dim);
    const auto h = static_cast<Eigen::Index>(hidden_dim);
    nn::init_uniform(store.add(prefix + ".w_input", 4 * h, d), 0.08, rng);
    nn::init_uniform(store.add(prefix + ".w_hidden", 4 * h, h), 0.08, rng);
    store.add(prefix + ".bias", 4 * h, 1).block(h, 0, h, 1).setOnes();
}

}  // namespace

DialogModel::DialogModel(ModelConfig config, std::uint64_t rng_seed) : config_(std::move(config)) {
    config_.validate();
    Rng rng(rng_seed);
    const auto v = static_cast<Eigen::Index>(config_.vocab_size);
    const auto e = static_cast<Eigen::Index>(config_.embed_dim);
    const auto h = static_cast<Eigen::Index>(config_.hidden_dim);

    nn::init_uniform(params_.add("embed", v, e), 0.08, rng);
    add_lstm(params_, "word_lstm", config_.embed_dim, config_.hidden_dim, rng);
    if (config_.has_sentence_lstm()) {
        add_lstm(params_, "sent_lstm", config_.sentence_input_width(), config_.hidden_dim, rng);
    }
    add_lstm(params_, "question_lstm", config_.embed_dim, config_.hidden_dim, rng);
    const auto av_dim = static_cast<Eigen::Index>(config_.av_dim);
    if (config_.uses_audio()) {
        nn::init_uniform(params_.add("av_audio.weight", h, av_dim), 0.08, rng);
        params_.add("av_audio.bias", h, 1);
    }
    if (config_.use_visual) {
        nn::init_uniform(params_.add("av_visual.weight", h, av_dim), 0.08, rng);
        params_.add("av_visual.bias", h, 1);
    }
    const Eigen::Index init_in = 2 * h + (config_.uses_av() ? h : 0);
    nn::init_uniform(params_.add("init.weight", h, init_in), 0.08, rng);
    params_.add("init.bias", h, 1);
    if (config_.attention != AttentionMode::none && config_.scoring == nn::AttentionScoring::additive) {
        nn::init_uniform(params_.add("att.w_query", h, h), 0.08, rng);
        nn::init_uniform(params_.add("att.w_memory", h, h), 0.08, rng);
        nn::init_uniform(params_.add("att.score", h, 1), 0.08, rng);
    }
    if (config_.topic_mode == TopicMode::topic_embedding) {
        nn::init_uniform(params_.add("topic_proj", static_cast<Eigen::Index>(config_.topic_dim), e), 0.08, rng);
    }
    add_lstm(params_, "dec_lstm", config_.decoder_input_width(), config_.hidden_dim, rng);
    if (params_.value("dec_lstm.w_input").cols() != static_cast<Eigen::Index>(config_.decoder_input_width())) {
        throw UsageError("decoder input width mismatch");
    }
    nn::init_uniform(params_.add("out.weight", v, h), 0.08, rng);
    params_.add("out.bias", v, 1);
}

std::size_t DialogModel::load_embeddings(const corpus::Vocabulary& vocab,
                                         const std::map<std::string, std::vector<double>>& vectors) {
    Matrix& table = params_.value("embed");
    std::size_t loaded = 0;
    for (std::size_t i = corpus::Vocabulary::reserved; i < vocab.size(); ++i) {
        const auto it = vectors.find(vocab.tokens()[i]);
        if (it == vectors.end()) continue;
        if (it->second.size() != config_.embed_dim) {
            throw UsageError("word vector width " + std::to_string(it->second.size()) + " != embed_dim " +
                             std::to_string(config_.embed_dim));
        }
        for (std::size_t j = 0; j < config_.embed_dim; ++j) {
            table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = it->second[j];
        }
        ++loaded;
    }
    return loaded;
}

nn::LstmWeights DialogModel::lstm(const std::string& prefix) const {
    return {params_.value(prefix + ".w_input"), params_.value(prefix + ".w_hidden"), params_.value(prefix + ".bias")};
}

Vector DialogModel::embed(int token) const {
    if (token < 0 || static_cast<std::size_t>(token) >= config_.vocab_size) {
        throw UsageError("unknown token index " + std::to_string(token));
    }
    return nn::embedding_lookup(params_.value("embed"), token);
}

Vector DialogModel::topic_feature(const std::vector<double>& topic) const {
    if (config_.topic_mode == TopicMode::none || config_.topic_mode == TopicMode::hlstm_feature) {
        return Vector();
    }
    if (topic.size() != config_.topic_dim) {
        throw UsageError("topic vector has width " + std::to_string(topic.size()) + ", config topic_dim is " +
                         std::to_string(config_.topic_dim));
    }
    const Vector t = Eigen::Map<const Vector>(topic.data(), static_cast<Eigen::Index>(topic.size()));
    if (config_.topic_mode == TopicMode::decoder_feature) return t;
    return nn::topic_projection(params_.value("topic_proj"), t);
}

std::vector<std::vector<int>> DialogModel::consumed_turns(const DialogContext& ctx) const {
    std::vector<std::vector<int>> turns;
    turns.push_back(ctx.caption);
    std::size_t first = 0;
    if (config_.history_turns >= 0 && ctx.history.size() > static_cast<std::size_t>(config_.history_turns)) {
        first = ctx.history.size() - static_cast<std::size_t>(config_.history_turns);
    }
    for (std::size_t i = first; i < ctx.history.size(); ++i) turns.push_back(ctx.history[i]);
    for (auto& t : turns) t.push_back(corpus::Vocabulary::eos);
    return turns;
}

struct DialogModel::ExampleTape {
    std::vector<std::vector<int>> turns;
    std::vector<nn::LstmTape> word_tapes;
    nn::LstmTape sentence_tape;
    std::vector<int> question;
    nn::LstmTape question_tape;
    std::vector<std::string> av_prefixes;
    std::vector<Vector> av_pooled;
};

EncodedContext DialogModel::encode(const DialogContext& ctx) const {
    return encode_impl(ctx, nullptr);
}

EncodedContext DialogModel::encode_impl(const DialogContext& ctx, ExampleTape* tape_out) const {
    ExampleTape local;
    ExampleTape& tape = tape_out ? *tape_out : local;
    EncodedContext enc;
    const auto h = static_cast<Eigen::Index>(config_.hidden_dim);
    const Vector zero = Vector::Zero(h);
    if (ctx.question.empty()) throw UsageError("encode: empty question");

    tape.turns = consumed_turns(ctx);
    for (const auto& turn : tape.turns) {
        std::vector<Vector> inputs;
        inputs.reserve(turn.size());
        for (int id : turn) inputs.push_back(embed(id));
        nn::LstmOutput out = nn::lstm_forward(lstm("word_lstm"), inputs, zero, zero);
        enc.history_word_last.push_back(out.hidden.back());
        enc.history_word_states.push_back(std::move(out.hidden));
        tape.word_tapes.push_back(std::move(out.tape));
    }

    if (config_.has_sentence_lstm()) {
        std::vector<Vector> inputs;
        Vector topic;
        if (config_.topic_mode == TopicMode::hlstm_feature) {
            if (ctx.topic.size() != config_.topic_dim) {
                throw UsageError("topic vector has width " + std::to_string(ctx.topic.size()) +
                                 ", config topic_dim is " + std::to_string(config_.topic_dim));
            }
            topic = Eigen::Map<const Vector>(ctx.topic.data(), static_cast<Eigen::Index>(ctx.topic.size()));
        }
        for (const auto& last : enc.history_word_last) inputs.push_back(concat({&last, &topic}));
        nn::LstmOutput out = nn::lstm_forward(lstm("sent_lstm"), inputs, zero, zero);
        enc.history_sentence_states = std::move(out.hidden);
        tape.sentence_tape = std::move(out.tape);
    }

    tape.question = ctx.question;
    tape.question.push_back(corpus::Vocabulary::eos);
    {
        std::vector<Vector> inputs;
        for (int id : tape.question) inputs.push_back(embed(id));
        nn::LstmOutput out = nn::lstm_forward(lstm("question_lstm"), inputs, zero, zero);
        enc.question_code = out.hidden.back();
        tape.question_tape = std::move(out.tape);
    }

    auto add_av = [&](const std::shared_ptr<const audio::FeatureSequence>& feat, const char* prefix,
                      const char* what) {
        if (!feat) throw DataError(std::string("model expects ") + what + " features but none were supplied");
        if (feat->width() != static_cast<Eigen::Index>(config_.av_dim)) {
            throw UsageError(std::string(what) + " feature width " + std::to_string(feat->width()) + " != av_dim " +
                             std::to_string(config_.av_dim));
        }
        const Vector pooled = feat->frames.colwise().mean().transpose();
        const Vector slot = nn::affine(params_.value(std::string(prefix) + ".weight"),
                                       params_.value(std::string(prefix) + ".bias"), pooled);
        enc.av_slots.push_back(slot);
        enc.av_code = enc.av_code ? Vector(*enc.av_code + slot) : slot;
        tape.av_prefixes.emplace_back(prefix);
        tape.av_pooled.push_back(pooled);
    };
    if (config_.uses_audio()) add_av(ctx.audio, "av_audio", "audio");
    if (config_.use_visual) add_av(ctx.visual, "av_visual", "visual");
    return enc;
}

DecoderState DialogModel::initial_state(const EncodedContext& enc) const {
    const Vector& history = config_.has_sentence_lstm() ? enc.history_sentence_states.back()
                                                        : enc.history_word_last.back();
    const Vector none;
    const Vector x = concat({&enc.question_code, &history, enc.av_code ? &*enc.av_code : &none});
    const Vector pre = nn::affine(params_.value("init.weight"), params_.value("init.bias"), x);
    return {pre.array().tanh().matrix(), Vector::Zero(static_cast<Eigen::Index>(config_.hidden_dim))};
}

nn::AttentionParams DialogModel::attention_params() const {
    const bool additive = config_.scoring == nn::AttentionScoring::additive && params_.contains("att.score");
    return {additive ? params_.value("att.w_query") : empty_matrix(),
            additive ? params_.value("att.w_memory") : empty_matrix(),
            additive ? params_.value("att.score") : empty_matrix()};
}

AttentionOutput DialogModel::attend(AttentionMode mode, const Vector& query, const EncodedContext& enc) const {
    if (config_.attention == AttentionMode::none) throw UsageError("attend: model has no attention parameters");
    const AttentionMemory mem = build_memory(mode, enc);
    const nn::AttentionParams p = attention_params();
    const Matrix keys = nn::project_memory(p, mem.slots, config_.scoring);
    nn::AttentionResult r = nn::attention_forward(p, query, mem.slots, keys, mem.valid, config_.scoring);
    return {std::move(r.context), std::vector<double>(r.weights.data(), r.weights.data() + r.weights.size())};
}

struct DialogModel::DecodeContext {
    AttentionMemory memory;
    Matrix keys;
    Vector topic_feature;
};

DialogModel::DecodeContext DialogModel::prepare_decode(const EncodedContext& enc,
                                                       const std::vector<double>& topic) const {
    DecodeContext dc;
    if (config_.attention != AttentionMode::none) {
        dc.memory = build_memory(config_.attention, enc);
        dc.keys = nn::project_memory(attention_params(), dc.memory.slots, config_.scoring);
    }
    dc.topic_feature = topic_feature(topic);
    return dc;
}

StepOutput DialogModel::step_impl(const DecodeContext& dc, int prev_token, const DecoderState& state,
                                  nn::AttentionCache* att_cache, nn::LstmStepCache* step_cache) const {
    StepOutput out;
    const Vector emb = embed(prev_token);
    Vector context;
    if (config_.attention != AttentionMode::none) {
        nn::AttentionResult r = nn::attention_forward(attention_params(), state.hidden, dc.memory.slots, dc.keys,
                                                      dc.memory.valid, config_.scoring);
        context = std::move(r.context);
        out.attention = std::vector<double>(r.weights.data(), r.weights.data() + r.weights.size());
        if (att_cache) *att_cache = std::move(r.cache);
    }
    const Vector x = concat({&emb, &context, &dc.topic_feature});
    nn::LstmStepCache s = nn::lstm_step(lstm("dec_lstm"), x, state.hidden, state.cell);
    out.logits = nn::affine(params_.value("out.weight"), params_.value("out.bias"), s.hidden);
    out.state = {s.hidden, s.cell};
    if (step_cache) *step_cache = std::move(s);
    return out;
}

StepOutput DialogModel::decode_step(int prev_token, const DecoderState& state, const EncodedContext& enc,
                                    const std::vector<double>& topic) const {
    return step_impl(prepare_decode(enc, topic), prev_token, state, nullptr, nullptr);
}

// --------------------------------------------------------------------------- training

double DialogModel::forward_loss(std::span<const TrainingExample> batch, bool accumulate) {
    if (batch.empty()) throw UsageError("forward_loss: empty batch");
    std::size_t tokens = 0;
    for (const auto& ex : batch) tokens += ex.answer.size() + 1;
    const double scale = 1.0 / static_cast<double>(tokens);
    double total = 0.0;
    for (const auto& ex : batch) total += run_example(ex, scale, accumulate);
    return total * scale;
}

double DialogModel::evaluate_loss(std::span<const TrainingExample> batch) const {
    return const_cast<DialogModel*>(this)->forward_loss(batch, false);
}

nn::LstmGradRefs DialogModel::lstm_grads(const std::string& prefix) {
    return {params_.grad(prefix + ".w_input"), params_.grad(prefix + ".w_hidden"), params_.grad(prefix + ".bias")};
}

double DialogModel::run_example(const TrainingExample& ex, double scale, bool backward) {
    ExampleTape tape;
    const EncodedContext enc = encode_impl(ex.context, &tape);
    const DecodeContext dc = prepare_decode(enc, ex.context.topic);
    const DecoderState init = initial_state(enc);

    std::vector<int> inputs{corpus::Vocabulary::bos};
    inputs.insert(inputs.end(), ex.answer.begin(), ex.answer.end());
    std::vector<int> targets = ex.answer;
    targets.push_back(corpus::Vocabulary::eos);

    const std::size_t steps = inputs.size();
    std::vector<nn::LstmStepCache> step_caches(steps);
    std::vector<nn::AttentionCache> att_caches(steps);
    std::vector<Vector> logit_grads(steps);
    DecoderState state = init;
    double loss = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
        if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= config_.vocab_size) {
            throw UsageError("target token index out of range: " + std::to_string(targets[t]));
        }
        StepOutput out = step_impl(dc, inputs[t], state, &att_caches[t], &step_caches[t]);
        nn::XentResult x = nn::softmax_xent(out.logits, targets[t]);
        loss += x.loss;
        logit_grads[t] = x.grad * scale;
        state = std::move(out.state);
    }
    if (!backward) return loss;

    const auto h = static_cast<Eigen::Index>(config_.hidden_dim);
    const auto e = static_cast<Eigen::Index>(config_.embed_dim);
    const bool attending = config_.attention != AttentionMode::none;
    const bool additive = attending && config_.scoring == nn::AttentionScoring::additive;
    const auto tw = static_cast<Eigen::Index>(config_.topic_feature_width());
    Matrix& d_embed = params_.grad("embed");

    // Decoder, newest step first.
    const nn::LstmWeights dec_w = lstm("dec_lstm");
    nn::LstmGradRefs dec_g = lstm_grads("dec_lstm");
    const nn::AttentionParams att_p = attention_params();
    Matrix dummy_q, dummy_m, dummy_s;
    nn::AttentionGradRefs att_g = additive
        ? nn::AttentionGradRefs{params_.grad("att.w_query"), params_.grad("att.w_memory"), params_.grad("att.score")}
        : nn::AttentionGradRefs{dummy_q, dummy_m, dummy_s};
    Matrix d_memory;
    Matrix d_keys;
    if (attending) {
        d_memory = Matrix::Zero(dc.memory.slots.rows(), h);
        if (additive) d_keys = Matrix::Zero(dc.keys.rows(), dc.keys.cols());
    }
    Vector d_topic_feature = Vector::Zero(tw);
    Vector dh = Vector::Zero(h);
    Vector dc_next = Vector::Zero(h);
    Vector dx, dh_prev, dc_prev, d_query;
    for (std::size_t t = steps; t-- > 0;) {
        Vector dh_total = dh;
        nn::affine_backward(params_.value("out.weight"), step_caches[t].hidden, logit_grads[t],
                            params_.grad("out.weight"), params_.grad("out.bias"), &dx);
        dh_total += dx;
        nn::lstm_step_backward(dec_w, step_caches[t], dh_total, dc_next, dec_g, dx, dh_prev, dc_prev);
        nn::embedding_backward(inputs[t], dx.head(e), d_embed);
        Eigen::Index off = e;
        if (attending) {
            const Vector d_context = dx.segment(off, h);
            nn::attention_backward(att_p, att_caches[t], dc.memory.slots, d_context, config_.scoring, att_g, d_memory,
                                   d_keys, d_query);
            dh_prev += d_query;
            off += h;
        }
        if (tw > 0) d_topic_feature += dx.segment(off, tw);
        dh = std::move(dh_prev);
        dc_next = std::move(dc_prev);
    }
    if (additive) nn::project_memory_backward(att_p, dc.memory.slots, d_keys, att_g, d_memory);
    if (config_.topic_mode == TopicMode::topic_embedding) {
        const Vector topic = Eigen::Map<const Vector>(ex.context.topic.data(),
                                                      static_cast<Eigen::Index>(ex.context.topic.size()));
        nn::topic_projection_backward(params_.value("topic_proj"), topic, d_topic_feature, params_.grad("topic_proj"),
                                      nullptr);
    }

    // Initial state h0 = tanh(W [q; history; av] + b).
    const Vector& history = config_.has_sentence_lstm() ? enc.history_sentence_states.back()
                                                        : enc.history_word_last.back();
    const Vector none;
    const Vector init_in = concat({&enc.question_code, &history, enc.av_code ? &*enc.av_code : &none});
    const Vector d_pre = dh.cwiseProduct((1.0 - init.hidden.array().square()).matrix());
    Vector d_init_in;
    nn::affine_backward(params_.value("init.weight"), init_in, d_pre, params_.grad("init.weight"),
                        params_.grad("init.bias"), &d_init_in);
    const Vector d_question_code = d_init_in.segment(0, h);
    const Vector d_history = d_init_in.segment(h, h);

    // Route memory and summary gradients to encoder outputs.
    const std::size_t n_turns = tape.turns.size();
    std::vector<std::vector<Vector>> d_word(n_turns);
    for (std::size_t i = 0; i < n_turns; ++i) d_word[i].assign(tape.turns[i].size(), Vector::Zero(h));
    std::vector<Vector> d_sent(config_.has_sentence_lstm() ? n_turns : 0, Vector::Zero(h));
    std::vector<Vector> d_av(tape.av_pooled.size(), Vector::Zero(h));
    if (attending) {
        switch (config_.attention) {
            case AttentionMode::word_all: {
                std::size_t max_len = 0;
                for (const auto& turn : tape.turns) max_len = std::max(max_len, turn.size());
                for (std::size_t i = 0; i < n_turns; ++i) {
                    for (std::size_t p = 0; p < tape.turns[i].size(); ++p) {
                        d_word[i][p] += d_memory.row(static_cast<Eigen::Index>(i * max_len + p)).transpose();
                    }
                }
                break;
            }
            case AttentionMode::word_last:
                for (std::size_t i = 0; i < n_turns; ++i) {
                    d_word[i].back() += d_memory.row(static_cast<Eigen::Index>(i)).transpose();
                }
                break;
            case AttentionMode::sent_all:
            case AttentionMode::sent_all_av:
                for (std::size_t i = 0; i < n_turns; ++i) {
                    d_sent[i] += d_memory.row(static_cast<Eigen::Index>(i)).transpose();
                }
                if (config_.attention == AttentionMode::sent_all_av) {
                    for (std::size_t j = 0; j < d_av.size(); ++j) {
                        d_av[j] += d_memory.row(static_cast<Eigen::Index>(n_turns + j)).transpose();
                    }
                }
                break;
            case AttentionMode::none:
                break;
        }
    }
    if (config_.has_sentence_lstm()) {
        d_sent.back() += d_history;
    } else {
        d_word.back().back() += d_history;
    }
    if (config_.uses_av()) {
        const Vector d_av_code = d_init_in.segment(2 * h, h);
        for (auto& d : d_av) d += d_av_code;
    }
    for (std::size_t j = 0; j < d_av.size(); ++j) {
        const std::string& prefix = tape.av_prefixes[j];
        nn::affine_backward(params_.value(prefix + ".weight"), tape.av_pooled[j], d_av[j],
                            params_.grad(prefix + ".weight"), params_.grad(prefix + ".bias"), nullptr);
    }

    if (config_.has_sentence_lstm()) {
        const nn::LstmInputGrads g =
            nn::lstm_backward_into(lstm("sent_lstm"), tape.sentence_tape, d_sent, lstm_grads("sent_lstm"));
        for (std::size_t i = 0; i < n_turns; ++i) d_word[i].back() += g.inputs[i].head(h);
    }
    const nn::LstmWeights word_w = lstm("word_lstm");
    nn::LstmGradRefs word_g = lstm_grads("word_lstm");
    for (std::size_t i = 0; i < n_turns; ++i) {
        const nn::LstmInputGrads g = nn::lstm_backward_into(word_w, tape.word_tapes[i], d_word[i], word_g);
        for (std::size_t p = 0; p < tape.turns[i].size(); ++p) {
            nn::embedding_backward(tape.turns[i][p], g.inputs[p], d_embed);
        }
    }
    {
        std::vector<Vector> d_q(tape.question.size(), Vector::Zero(h));
        d_q.back() = d_question_code;
        const nn::LstmInputGrads g =
            nn::lstm_backward_into(lstm("question_lstm"), tape.question_tape, d_q, lstm_grads("question_lstm"));
        for (std::size_t p = 0; p < tape.question.size(); ++p) {
            nn::embedding_backward(tape.question[p], g.inputs[p], d_embed);
        }
    }
    return loss;
}

// --------------------------------------------------------------------------- decoding

std::vector<int> DialogModel::generate(const DialogContext& ctx) const {
    return config_.beam_width <= 1 ? greedy_decode(ctx) : beam_search(ctx, config_.beam_width);
}

namespace {

int argmax(const Vector& v) {
    Eigen::Index best = 0;
    v.maxCoeff(&best);
    return static_cast<int>(best);
}

}  // namespace

std::vector<int> DialogModel::greedy_decode(const DialogContext& ctx) const {
    const EncodedContext enc = encode(ctx);
    const DecodeContext dc = prepare_decode(enc, ctx.topic);
    DecoderState state = initial_state(enc);
    std::vector<int> out;
    int token = corpus::Vocabulary::bos;
    for (std::size_t t = 0; t < config_.max_decode_len; ++t) {
        StepOutput s = step_impl(dc, token, state, nullptr, nullptr);
        token = argmax(s.logits);
        if (token == corpus::Vocabulary::eos) break;
        out.push_back(token);
        state = std::move(s.state);
    }
    return out;
}

std::vector<int> DialogModel::beam_search(const DialogContext& ctx, std::size_t width) const {
    if (width == 0) throw UsageError("beam width must be >= 1");
    const EncodedContext enc = encode(ctx);
    const DecodeContext dc = prepare_decode(enc, ctx.topic);

    struct Hyp {
        std::vector<int> tokens;
        double log_prob = 0.0;
        DecoderState state;
    };
    struct Candidate {
        std::size_t hyp;
        int token;
        double log_prob;
    };
    struct Finished {
        std::vector<int> tokens;
        double score;
    };

    std::vector<Hyp> live{{{}, 0.0, initial_state(enc)}};
    std::vector<Finished> finished;
    const std::size_t v = config_.vocab_size;
    const std::size_t per_hyp = std::min(width, v);
    for (std::size_t step = 0; step < config_.max_decode_len && !live.empty(); ++step) {
        std::vector<Candidate> candidates;
        std::vector<DecoderState> next_states;
        for (std::size_t i = 0; i < live.size(); ++i) {
            const int prev = live[i].tokens.empty() ? corpus::Vocabulary::bos : live[i].tokens.back();
            StepOutput s = step_impl(dc, prev, live[i].state, nullptr, nullptr);
            const Vector lp = nn::log_softmax(s.logits);
            std::vector<int> order(v);
            std::iota(order.begin(), order.end(), 0);
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(per_hyp), order.end(),
                              [&](int a, int b) { return lp(a) > lp(b) || (lp(a) == lp(b) && a < b); });
            for (std::size_t k = 0; k < per_hyp; ++k) {
                candidates.push_back({i, order[k], live[i].log_prob + lp(order[k])});
            }
            next_states.push_back(std::move(s.state));
        }
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const Candidate& a, const Candidate& b) { return a.log_prob > b.log_prob; });
        std::vector<Hyp> next;
        const bool last_step = step + 1 == config_.max_decode_len;
        for (const Candidate& c : candidates) {
            if (next.size() >= width) break;
            const Hyp& parent = live[c.hyp];
            if (c.token == corpus::Vocabulary::eos) {
                finished.push_back({parent.tokens, c.log_prob / static_cast<double>(parent.tokens.size() + 1)});
                continue;
            }
            Hyp h{parent.tokens, c.log_prob, next_states[c.hyp]};
            h.tokens.push_back(c.token);
            if (last_step) {
                finished.push_back({h.tokens, h.log_prob / static_cast<double>(h.tokens.size())});
            } else {
                next.push_back(std::move(h));
            }
        }
        live = std::move(next);
    }
    const Finished* best = nullptr;
    for (const auto& f : finished) {
        if (!best || f.score > best->score) best = &f;
    }
    return best ? best->tokens : std::vector<int>{};
}

// --------------------------------------------------------------------------- files

std::map<std::string, std::vector<double>> load_word_vectors(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open word vectors: " + path.string());
    std::map<std::string, std::vector<double>> out;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string token;
        if (!(ss >> token)) continue;
        std::vector<double> values;
        std::string field;
        while (ss >> field) {
            try {
                values.push_back(nn::parse_double(field));
            } catch (const DataError&) {
                throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + field + "'");
            }
        }
        if (values.empty()) throw DataError(path.string() + ":" + std::to_string(line_no) + ": no values");
        if (width == 0) width = values.size();
        if (values.size() != width) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                            " values, got " + std::to_string(values.size()));
        }
        out[token] = std::move(values);
    }
    return out;
}

namespace {

constexpr const char* kCheckpointMagic = "avsd-checkpoint";
constexpr int kCheckpointVersion = 1;

void write_kv_section(std::ostream& out, const char* name, const std::map<std::string, std::string>& kv) {
    out << name << ' ' << kv.size() << '\n';
    for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
}

std::map<std::string, std::string> read_kv_section(std::istream& in, const char* name, const std::string& where) {
    std::string line;
    if (!std::getline(in, line)) throw DataError(where + ": missing '" + name + "' section");
    std::istringstream head(line);
    std::string tag;
    std::size_t n = 0;
    if (!(head >> tag >> n) || tag != name) throw DataError(where + ": expected '" + name + "' section");
    std::map<std::string, std::string> kv;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw DataError(where + ": truncated '" + name + "' section");
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) throw DataError(where + ": malformed entry '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return kv;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DialogModel& model, const corpus::Vocabulary& vocab,
                     const std::map<std::string, std::string>& meta, bool with_optimizer_state) {
    if (vocab.size() != model.config().vocab_size) {
        throw UsageError("checkpoint vocabulary size does not match the model");
    }
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw DataError("cannot write checkpoint: " + path.string());
        out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
        write_kv_section(out, "config", model.config().to_kv());
        write_kv_section(out, "meta", meta);
        out << "vocab " << vocab.size() << '\n';
        for (const auto& tok : vocab.tokens()) out << tok << '\n';
        nn::write_params(out, model.params(), with_optimizer_state);
        if (!out) throw DataError("failed writing checkpoint: " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path.string());
    const std::string where = path.string();
    std::string line;
    std::getline(in, line);
    std::istringstream head(line);
    std::string magic;
    int version = 0;
    if (!(head >> magic >> version) || magic != kCheckpointMagic) throw DataError(where + ": not a checkpoint");
    if (version != kCheckpointVersion) {
        throw DataError(where + ": unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ck;
    const auto unknown = ck.config.apply_kv(read_kv_section(in, "config", where));
    if (!unknown.empty()) throw DataError(where + ": unknown config key '" + unknown.front() + "'");
    ck.meta = read_kv_section(in, "meta", where);
    std::getline(in, line);
    std::istringstream vh(line);
    std::string tag;
    std::size_t n = 0;
    if (!(vh >> tag >> n) || tag != "vocab") throw DataError(where + ": expected 'vocab' section");
    std::vector<std::string> tokens(n);
    for (auto& t : tokens) {
        if (!std::getline(in, t)) throw DataError(where + ": truncated vocab");
    }
    ck.vocab = corpus::Vocabulary::from_tokens(tokens);
    ck.model = std::make_unique<DialogModel>(ck.config, 0);
    try {
        nn::read_params(in, ck.model->params());
    } catch (const DataError& e) {
        throw DataError(where + ": " + e.what());
    }
    return ck;
}

}  // namespace avsd::model
