#include "doctest.h"

#include "avsd/error.hpp"
#include "avsd/model.hpp"
#include "avsd/nn/gradcheck.hpp"
#include "oracles/scalar_lstm.hpp"
#include "support/gradient_suite.hpp"
#include "support/model_fixtures.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace avsd;
using namespace avsd::model;
using avsd::testing::random_example;
using avsd::testing::small_config;

namespace {

double max_model_grad_error(ModelConfig cfg, std::uint64_t seed, std::size_t samples) {
    DialogModel m(cfg, seed);
    Rng rng(seed + 100);
    std::vector<TrainingExample> batch{random_example(rng, cfg, 2), random_example(rng, cfg, 0)};
    m.params().zero_grad();
    m.forward_loss(batch, true);
    std::vector<std::pair<std::string, Eigen::Index>> picks;
    std::vector<std::string> names;
    for (const auto& p : m.params().params()) names.push_back(p.name);
    double worst = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        const std::string& name = names[rng.index(names.size())];
        nn::Param& p = m.params().get(name);
        const auto idx = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(p.value.size())));
        const double analytic = p.grad.data()[idx];
        const double numeric =
            nn::finite_difference(p.value, idx, [&] { return m.evaluate_loss(batch); });
        worst = std::max(worst, nn::relative_error(analytic, numeric));
    }
    return worst;
}

}  // namespace

TEST_CASE("full model gradient spot-check across modes") {
    const AttentionMode atts[] = {AttentionMode::none, AttentionMode::word_all, AttentionMode::word_last,
                                  AttentionMode::sent_all, AttentionMode::sent_all_av};
    const TopicMode topics[] = {TopicMode::none, TopicMode::decoder_feature, TopicMode::hlstm_feature,
                                TopicMode::topic_embedding};
    std::uint64_t seed = 1;
    for (auto att : atts) {
        for (auto topic : topics) {
            if (topic == TopicMode::hlstm_feature && att == AttentionMode::word_all) continue;
            const AudioMode audio = att == AttentionMode::sent_all_av ? AudioMode::fuse : AudioMode::none;
            ModelConfig cfg = small_config(att, topic, audio);
            if (att == AttentionMode::sent_all_av) cfg.use_visual = true;
            CAPTURE(to_string(att));
            CAPTURE(to_string(topic));
            const double err = max_model_grad_error(cfg, seed++, 50);
            MESSAGE(err);
            CHECK(err < 1e-3);
        }
    }
}

TEST_CASE("embedding and topic projection gradients through the model") {
    Rng rng(77);
    const auto cfg = small_config(AttentionMode::sent_all, TopicMode::topic_embedding, AudioMode::none);
    double worst_embed = 0.0, worst_topic = 0.0;
    for (int i = 0; i < 10; ++i) {
        worst_embed = std::max(worst_embed, avsd::testing::check_model_param(rng, cfg, "embed"));
        worst_topic = std::max(worst_topic, avsd::testing::check_model_param(rng, cfg, "topic_proj"));
    }
    MESSAGE("embed " << worst_embed << " topic_proj " << worst_topic);
    CHECK(worst_embed < 1e-3);
    CHECK(worst_topic < 1e-3);
}

namespace {

using Vec = std::vector<double>;

oracle::ScalarLstm scalar_lstm(const DialogModel& m, const std::string& prefix) {
    auto rows = [](const nn::Matrix& w) {
        std::vector<Vec> out(static_cast<std::size_t>(w.rows()));
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) out[static_cast<std::size_t>(r)].push_back(w(r, c));
        }
        return out;
    };
    const auto& b = m.params().value(prefix + ".bias");
    return {rows(m.params().value(prefix + ".w_input")), rows(m.params().value(prefix + ".w_hidden")),
            Vec(b.data(), b.data() + b.size())};
}

Vec embedding_row(const DialogModel& m, int id) {
    const auto& e = m.params().value("embed");
    Vec out;
    for (Eigen::Index c = 0; c < e.cols(); ++c) out.push_back(e(id, c));
    return out;
}

std::vector<Vec> run_scalar(const oracle::ScalarLstm& p, const std::vector<Vec>& xs, std::size_t h) {
    Vec hs(h, 0.0), cs(h, 0.0);
    std::vector<Vec> out;
    for (const auto& x : xs) {
        auto s = oracle::lstm_step(p, x, hs, cs);
        hs = s.h;
        cs = s.c;
        out.push_back(hs);
    }
    return out;
}

Vec cat(Vec a, const Vec& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

Vec to_vec(const nn::Vector& v) { return Vec(v.data(), v.data() + v.size()); }

double max_diff(const Vec& a, const nn::Vector& b) {
    REQUIRE(a.size() == static_cast<std::size_t>(b.size()));
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b(static_cast<Eigen::Index>(i))));
    return d;
}

Vec affine_scalar(const nn::Matrix& w, const nn::Matrix& b, const Vec& x) {
    Vec y(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
        double s = b(r, 0);
        for (Eigen::Index c = 0; c < w.cols(); ++c) s += w(r, c) * x[static_cast<std::size_t>(c)];
        y[static_cast<std::size_t>(r)] = s;
    }
    return y;
}

DialogContext fixture_context(Rng& rng, const ModelConfig& cfg, std::size_t turns) {
    return random_example(rng, cfg, turns).context;
}

}  // namespace

TEST_CASE("zero history keeps the caption as the only turn") {
    Rng rng(1);
    auto cfg = small_config(AttentionMode::sent_all, TopicMode::none, AudioMode::none);
    DialogModel m(cfg, 1);
    const auto enc = m.encode(fixture_context(rng, cfg, 0));
    CHECK(enc.history_sentence_states.size() == 1);
    CHECK(enc.history_word_last.size() == 1);
    CHECK(enc.history_word_states.size() == 1);
}

TEST_CASE("history truncation keeps the most recent turns") {
    Rng rng(2);
    auto cfg = small_config(AttentionMode::sent_all, TopicMode::none, AudioMode::none);
    cfg.history_turns = 3;
    DialogModel m(cfg, 1);
    const auto ctx = fixture_context(rng, cfg, 10);
    const auto turns = m.consumed_turns(ctx);
    REQUIRE(turns.size() == 4);
    auto with_eos = [](std::vector<int> t) {
        t.push_back(corpus::Vocabulary::eos);
        return t;
    };
    CHECK(turns[0] == with_eos(ctx.caption));
    CHECK(turns[1] == with_eos(ctx.history[7]));
    CHECK(turns[2] == with_eos(ctx.history[8]));
    CHECK(turns[3] == with_eos(ctx.history[9]));
    const auto enc = m.encode(ctx);
    CHECK(enc.history_sentence_states.size() == 4);
    CHECK(enc.history_word_states.size() == 4);

    cfg.history_turns = 0;
    CHECK(DialogModel(cfg, 1).consumed_turns(ctx).size() == 1);
}

TEST_CASE("encode equals a scalar composition of LSTM steps") {
    Rng rng(3);
    auto cfg = small_config(AttentionMode::sent_all_av, TopicMode::hlstm_feature, AudioMode::fuse);
    cfg.use_visual = true;
    DialogModel m(cfg, 5);
    const auto ctx = fixture_context(rng, cfg, 3);
    const auto enc = m.encode(ctx);
    const std::size_t h = cfg.hidden_dim;

    const auto word = scalar_lstm(m, "word_lstm");
    std::vector<std::vector<int>> turns{ctx.caption};
    turns.insert(turns.end(), ctx.history.begin(), ctx.history.end());
    std::vector<Vec> sentence_inputs;
    double worst = 0.0;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        auto ids = turns[i];
        ids.push_back(corpus::Vocabulary::eos);
        std::vector<Vec> xs;
        for (int id : ids) xs.push_back(embedding_row(m, id));
        const auto states = run_scalar(word, xs, h);
        REQUIRE(enc.history_word_states[i].size() == states.size());
        for (std::size_t t = 0; t < states.size(); ++t) {
            worst = std::max(worst, max_diff(states[t], enc.history_word_states[i][t]));
        }
        worst = std::max(worst, max_diff(states.back(), enc.history_word_last[i]));
        sentence_inputs.push_back(cat(states.back(), ctx.topic));
    }
    const auto sent = run_scalar(scalar_lstm(m, "sent_lstm"), sentence_inputs, h);
    for (std::size_t i = 0; i < sent.size(); ++i) worst = std::max(worst, max_diff(sent[i], enc.history_sentence_states[i]));

    auto q = ctx.question;
    q.push_back(corpus::Vocabulary::eos);
    std::vector<Vec> qx;
    for (int id : q) qx.push_back(embedding_row(m, id));
    worst = std::max(worst, max_diff(run_scalar(scalar_lstm(m, "question_lstm"), qx, h).back(), enc.question_code));

    auto pooled = [](const audio::FeatureSequence& f) {
        Vec mean(static_cast<std::size_t>(f.frames.cols()), 0.0);
        for (Eigen::Index r = 0; r < f.frames.rows(); ++r) {
            for (Eigen::Index c = 0; c < f.frames.cols(); ++c) {
                mean[static_cast<std::size_t>(c)] += f.frames(r, c) / static_cast<double>(f.frames.rows());
            }
        }
        return mean;
    };
    const Vec a = affine_scalar(m.params().value("av_audio.weight"), m.params().value("av_audio.bias"),
                                pooled(*ctx.audio));
    const Vec v = affine_scalar(m.params().value("av_visual.weight"), m.params().value("av_visual.bias"),
                                pooled(*ctx.visual));
    Vec sum(h);
    for (std::size_t i = 0; i < h; ++i) sum[i] = a[i] + v[i];
    REQUIRE(enc.av_code.has_value());
    REQUIRE(enc.av_slots.size() == 2);
    worst = std::max({worst, max_diff(sum, *enc.av_code), max_diff(a, enc.av_slots[0]), max_diff(v, enc.av_slots[1])});
    CHECK(worst < 1e-12);
}

TEST_CASE("decode step equals a scalar composition") {
    Rng rng(4);
    for (auto att : {AttentionMode::none, AttentionMode::sent_all}) {
        auto cfg = small_config(att, TopicMode::decoder_feature, AudioMode::none);
        DialogModel m(cfg, 6);
        const auto ctx = fixture_context(rng, cfg, 2);
        const auto enc = m.encode(ctx);
        const auto st = m.initial_state(enc);
        const int prev = 7;
        const auto out = m.decode_step(prev, st, enc, ctx.topic);

        Vec x = embedding_row(m, prev);
        if (att != AttentionMode::none) x = cat(x, to_vec(m.attend(att, st.hidden, enc).context));
        x = cat(x, ctx.topic);
        const auto s = oracle::lstm_step(scalar_lstm(m, "dec_lstm"), x, to_vec(st.hidden), to_vec(st.cell));
        const Vec logits = affine_scalar(m.params().value("out.weight"), m.params().value("out.bias"), s.h);
        CHECK(max_diff(logits, out.logits) < 1e-12);
        CHECK(max_diff(s.c, out.state.cell) < 1e-12);
        CHECK(out.attention.has_value() == (att != AttentionMode::none));
    }
}

TEST_CASE("decoder input widths") {
    ModelConfig cfg;
    cfg.vocab_size = 20;
    cfg.embed_dim = 7;
    cfg.hidden_dim = 5;
    CHECK(cfg.decoder_input_width() == 7);
    cfg.attention = AttentionMode::sent_all;
    cfg.topic_mode = TopicMode::decoder_feature;
    cfg.topic_dim = 9;
    CHECK(cfg.decoder_input_width() == 7 + 5 + 9);
    cfg.topic_mode = TopicMode::topic_embedding;
    CHECK(cfg.decoder_input_width() == 7 + 5 + 7);
    DialogModel m(cfg, 1);
    CHECK(m.params().value("dec_lstm.w_input").cols() == 19);
    CHECK(m.params().value("topic_proj").rows() == 9);
    CHECK(m.params().value("topic_proj").cols() == 7);
}

TEST_CASE("config validation") {
    auto base = small_config(AttentionMode::none, TopicMode::none, AudioMode::none);
    auto bad = base;
    bad.topic_mode = TopicMode::decoder_feature;
    bad.topic_dim = 0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = base;
    bad.attention = AttentionMode::sent_all_av;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = base;
    bad.hidden_dim = 0;
    CHECK_THROWS_AS(DialogModel(bad, 1), UsageError);
    bad = small_config(AttentionMode::word_all, TopicMode::hlstm_feature, AudioMode::none);
    CHECK_THROWS_AS(bad.validate(), UsageError);

    auto cfg = small_config(AttentionMode::sent_all_av, TopicMode::topic_embedding, AudioMode::fuse);
    cfg.history_turns = 4;
    cfg.beam_width = 3;
    ModelConfig back;
    CHECK(back.apply_kv(cfg.to_kv()).empty());
    CHECK(back.to_kv() == cfg.to_kv());
    CHECK(back.apply_kv({{"bogus", "1"}}) == std::vector<std::string>{"bogus"});
}

TEST_CASE("attention on built memories") {
    Rng rng(5);
    auto cfg = small_config(AttentionMode::sent_all_av, TopicMode::none, AudioMode::fuse);
    DialogModel m(cfg, 2);
    const auto ctx = fixture_context(rng, cfg, 2);
    const auto enc = m.encode(ctx);
    for (auto mode : {AttentionMode::word_all, AttentionMode::word_last, AttentionMode::sent_all,
                      AttentionMode::sent_all_av}) {
        const auto mem = build_memory(mode, enc);
        const auto out = m.attend(mode, enc.question_code, enc);
        CHECK(out.weights.size() == static_cast<std::size_t>(mem.slots.rows()));
        double sum = 0.0;
        for (std::size_t j = 0; j < out.weights.size(); ++j) {
            CHECK(out.weights[j] >= 0.0);
            if (!mem.valid[j]) CHECK(out.weights[j] == 0.0);
            sum += out.weights[j];
        }
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
    CHECK(build_memory(AttentionMode::word_last, enc).slots.rows() == 3);
    CHECK(build_memory(AttentionMode::sent_all_av, enc).slots.rows() == 4);
    std::size_t words = 0;
    for (const auto& t : enc.history_word_states) words += t.size();
    const auto wa = build_memory(AttentionMode::word_all, enc);
    CHECK(static_cast<std::size_t>(std::count(wa.valid.begin(), wa.valid.end(), 1)) == words);
}

TEST_CASE("attention singleton, identical slots and hand computation") {
    nn::Matrix wq(2, 2), wm(2, 2), v(2, 1);
    wq << 0.5, -0.25, 0.1, 0.3;
    wm << -0.2, 0.4, 0.7, 0.05;
    v << 1.5, -0.8;
    const nn::AttentionParams p{wq, wm, v};
    nn::Vector q(2);
    q << 0.3, -0.6;
    const auto scoring = nn::AttentionScoring::additive;

    nn::Matrix one(1, 2);
    one << 0.9, -0.1;
    const std::vector<char> v1{1};
    auto r1 = nn::attention_forward(p, q, one, nn::project_memory(p, one, scoring), v1, scoring);
    CHECK(r1.weights(0) == 1.0);
    CHECK((r1.context - one.row(0).transpose()).norm() < 1e-15);

    nn::Matrix same(3, 2);
    same << 0.2, 0.4, 0.2, 0.4, 0.2, 0.4;
    const std::vector<char> v3{1, 1, 1};
    auto r3 = nn::attention_forward(p, q, same, nn::project_memory(p, same, scoring), v3, scoring);
    for (int j = 0; j < 3; ++j) CHECK(r3.weights(j) == doctest::Approx(1.0 / 3).epsilon(1e-14));
    CHECK((r3.context - same.row(0).transpose()).norm() < 1e-14);

    nn::Matrix two(2, 2);
    two << 1.0, 0.0, -0.5, 2.0;
    const std::vector<char> v2{1, 1};
    auto r2 = nn::attention_forward(p, q, two, nn::project_memory(p, two, scoring), v2, scoring);
    double s[2];
    for (int j = 0; j < 2; ++j) {
        const double a0 = std::tanh(0.5 * 0.3 - 0.25 * -0.6 + (-0.2 * two(j, 0) + 0.4 * two(j, 1)));
        const double a1 = std::tanh(0.1 * 0.3 + 0.3 * -0.6 + (0.7 * two(j, 0) + 0.05 * two(j, 1)));
        s[j] = 1.5 * a0 - 0.8 * a1;
    }
    const double w0 = 1.0 / (1.0 + std::exp(s[1] - s[0]));
    CHECK(std::abs(r2.weights(0) - w0) < 1e-12);
    CHECK(std::abs(r2.weights(1) - (1.0 - w0)) < 1e-12);
}

TEST_CASE("attention permutation equivariance and duplicate mass") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Index h = 3, n = 2 + static_cast<Eigen::Index>(rng.index(5));
        const nn::Matrix wq = avsd::testing::random_matrix(rng, h, h), wm = avsd::testing::random_matrix(rng, h, h);
        const nn::Matrix v = avsd::testing::random_matrix(rng, h, 1);
        const nn::AttentionParams p{wq, wm, v};
        const nn::Matrix mem = avsd::testing::random_matrix(rng, n, h);
        const nn::Vector q = avsd::testing::random_vector(rng, h);
        for (auto scoring : {nn::AttentionScoring::additive, nn::AttentionScoring::scaled_dot}) {
            const std::vector<char> valid(static_cast<std::size_t>(n), 1);
            const auto base = nn::attention_forward(p, q, mem, nn::project_memory(p, mem, scoring), valid, scoring);

            std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
            for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
            rng.shuffle(perm);
            nn::Matrix pm(n, h);
            for (Eigen::Index i = 0; i < n; ++i) pm.row(i) = mem.row(perm[static_cast<std::size_t>(i)]);
            const auto pr = nn::attention_forward(p, q, pm, nn::project_memory(p, pm, scoring), valid, scoring);
            for (Eigen::Index i = 0; i < n; ++i) {
                CHECK(std::abs(pr.weights(i) - base.weights(perm[static_cast<std::size_t>(i)])) < 1e-12);
            }

            const auto dup = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
            nn::Matrix dm(n + 1, h);
            dm.topRows(n) = mem;
            dm.row(n) = mem.row(dup);
            const std::vector<char> valid2(static_cast<std::size_t>(n + 1), 1);
            const auto dr = nn::attention_forward(p, q, dm, nn::project_memory(p, dm, scoring), valid2, scoring);
            CHECK(dr.weights(dup) + dr.weights(n) >= base.weights(dup) - 1e-12);
        }
    }
}

TEST_CASE("untrained model loss is close to ln V") {
    Rng rng(7);
    auto cfg = small_config(AttentionMode::sent_all, TopicMode::none, AudioMode::none);
    cfg.vocab_size = 60;
    DialogModel m(cfg, 3);
    std::vector<TrainingExample> batch;
    for (int i = 0; i < 8; ++i) batch.push_back(random_example(rng, cfg, 2));
    CHECK(std::abs(m.evaluate_loss(batch) - std::log(60.0)) < 0.05);
}

TEST_CASE("batch loss is the token-weighted mean of example losses") {
    Rng rng(8);
    auto cfg = small_config(AttentionMode::word_last, TopicMode::decoder_feature, AudioMode::none);
    DialogModel m(cfg, 4);
    std::vector<TrainingExample> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(random_example(rng, cfg, static_cast<std::size_t>(i)));
    double weighted = 0.0, tokens = 0.0;
    for (const auto& ex : batch) {
        const double t = static_cast<double>(ex.answer.size() + 1);
        weighted += t * m.evaluate_loss(std::span(&ex, 1));
        tokens += t;
    }
    CHECK(m.evaluate_loss(batch) == doctest::Approx(weighted / tokens).epsilon(1e-12));
    CHECK_THROWS_AS(m.forward_loss(std::span<const TrainingExample>{}), UsageError);
}

TEST_CASE("input errors") {
    Rng rng(9);
    auto cfg = small_config(AttentionMode::none, TopicMode::none, AudioMode::fuse);
    DialogModel m(cfg, 1);
    auto ctx = fixture_context(rng, cfg, 1);
    ctx.audio = avsd::testing::random_features(rng, audio::Modality::audio, 3, cfg.av_dim + 1);
    CHECK_THROWS_AS(m.encode(ctx), UsageError);
    ctx = fixture_context(rng, cfg, 1);
    CHECK_THROWS_AS(m.decode_step(99, m.initial_state(m.encode(ctx)), m.encode(ctx), {}), UsageError);
    ctx.question.clear();
    CHECK_THROWS_AS(m.encode(ctx), UsageError);
}

TEST_CASE("beam width 1 matches an argmax reference decoder") {
    Rng rng(10);
    auto cfg = small_config(AttentionMode::sent_all, TopicMode::topic_embedding, AudioMode::none);
    cfg.max_decode_len = 8;
    DialogModel m(cfg, 11);
    for (int i = 0; i < 20; ++i) {
        const auto ctx = fixture_context(rng, cfg, rng.index(3));
        const auto enc = m.encode(ctx);
        auto state = m.initial_state(enc);
        std::vector<int> ref;
        int tok = corpus::Vocabulary::bos;
        for (std::size_t t = 0; t < cfg.max_decode_len; ++t) {
            const auto s = m.decode_step(tok, state, enc, ctx.topic);
            Eigen::Index best = 0;
            s.logits.maxCoeff(&best);
            tok = static_cast<int>(best);
            if (tok == corpus::Vocabulary::eos) break;
            ref.push_back(tok);
            state = s.state;
        }
        CHECK(m.beam_search(ctx, 1) == ref);
        CHECK(m.generate(ctx) == ref);
    }
}

TEST_CASE("max_decode_len caps output") {
    Rng rng(12);
    auto cfg = small_config(AttentionMode::none, TopicMode::none, AudioMode::none);
    cfg.max_decode_len = 1;
    for (std::size_t beam : {1u, 3u}) {
        cfg.beam_width = beam;
        DialogModel m(cfg, 13);
        for (int i = 0; i < 10; ++i) CHECK(m.generate(fixture_context(rng, cfg, 1)).size() <= 1);
    }
}

TEST_CASE("overfit one pair then generate it") {
    Rng rng(14);
    for (std::size_t beam : {1u, 3u}) {
        auto cfg = small_config(AttentionMode::sent_all, TopicMode::none, AudioMode::none);
        cfg.embed_dim = 8;
        cfg.hidden_dim = 12;
        cfg.beam_width = beam;
        DialogModel m(cfg, 15);
        std::vector<TrainingExample> one{random_example(rng, cfg, 1)};
        one[0].answer = {5, 9, 6, 11};
        nn::AdamConfig adam;
        adam.learning_rate = 0.02;
        double loss = 0.0;
        for (int step = 0; step < 300; ++step) {
            m.params().zero_grad();
            loss = m.forward_loss(one, true);
            m.params().clip_grad_norm(5.0);
            nn::adam_step(m.params(), adam);
        }
        MESSAGE("final loss " << loss);
        CHECK(m.generate(one[0].context) == one[0].answer);
    }
}

TEST_CASE("same seed gives identical parameters, losses and outputs") {
    Rng r1(16), r2(16);
    auto cfg = small_config(AttentionMode::sent_all_av, TopicMode::topic_embedding, AudioMode::fuse);
    cfg.beam_width = 2;
    DialogModel a(cfg, 17), b(cfg, 17);
    const auto ea = random_example(r1, cfg, 2), eb = random_example(r2, cfg, 2);
    for (std::size_t i = 0; i < a.params().params().size(); ++i) {
        CHECK((a.params().params()[i].value.array() == b.params().params()[i].value.array()).all());
    }
    CHECK(a.evaluate_loss(std::span(&ea, 1)) == b.evaluate_loss(std::span(&eb, 1)));
    CHECK(a.generate(ea.context) == b.generate(eb.context));
    DialogModel c(cfg, 18);
    CHECK(!(a.params().value("embed").array() == c.params().value("embed").array()).all());
}

TEST_CASE("checkpoint round-trip") {
    namespace fs = std::filesystem;
    Rng rng(19);
    auto cfg = small_config(AttentionMode::word_all, TopicMode::topic_embedding, AudioMode::none);
    cfg.vocab_size = 12;
    DialogModel m(cfg, 20);
    std::vector<TrainingExample> batch{random_example(rng, cfg, 1)};
    for (int i = 0; i < 3; ++i) {
        m.params().zero_grad();
        m.forward_loss(batch, true);
        nn::adam_step(m.params(), {});
    }
    std::vector<std::string> words;
    for (int i = 0; i < 8; ++i) words.push_back("w" + std::to_string(i));
    const auto vocab = corpus::Vocabulary::from_tokens(
        [&] {
            std::vector<std::string> t = corpus::Vocabulary().tokens();
            t.insert(t.end(), words.begin(), words.end());
            return t;
        }());
    const fs::path dir = fs::temp_directory_path() / "avsd_test_ckpt";
    fs::create_directories(dir);
    const fs::path path = dir / "m.ckpt";
    save_checkpoint(path, m, vocab, {{"note", "x"}});
    const auto ck = load_checkpoint(path);
    CHECK(ck.meta.at("note") == "x");
    CHECK(ck.vocab.tokens() == vocab.tokens());
    CHECK(ck.config.to_kv() == cfg.to_kv());
    CHECK(ck.model->params().step() == 3);
    for (std::size_t i = 0; i < m.params().params().size(); ++i) {
        const auto& a = m.params().params()[i];
        const auto& b = ck.model->params().params()[i];
        CHECK(a.name == b.name);
        CHECK((a.value.array() == b.value.array()).all());
        CHECK((a.moment2.array() == b.moment2.array()).all());
    }
    CHECK(ck.model->generate(batch[0].context) == m.generate(batch[0].context));

    {
        std::ofstream bad(dir / "bad.ckpt");
        bad << "avsd-checkpoint 99\n";
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), DataError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), DataError);
    fs::remove_all(dir);
}
