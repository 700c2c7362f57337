#include "doctest.h"

#include "avsd/error.hpp"
#include "avsd/topics.hpp"
#include "support/planted_topics.hpp"

#include <filesystem>
#include <numeric>
#include <set>

using namespace avsd;
using namespace avsd::topics;
using avsd::testing::planted_corpus;

namespace {

const std::string kFixtures = AVSD_FIXTURES;

void check_rows_are_distributions(const TopicModel& m) {
    for (std::size_t k = 0; k < m.num_topics; ++k) {
        double sum = 0.0;
        for (std::size_t w = 0; w < m.vocab_size(); ++w) {
            CHECK(m.prob(k, w) >= 0.0);
            sum += m.prob(k, w);
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

void check_distribution(const std::vector<double>& theta) {
    for (double t : theta) CHECK(t >= 0.0);
    CHECK(std::abs(std::accumulate(theta.begin(), theta.end(), 0.0) - 1.0) < 1e-9);
}

LdaOptions two_topics(std::uint64_t seed = 1) {
    LdaOptions o;
    o.num_topics = 2;
    o.rng_seed = seed;
    return o;
}

}  // namespace

TEST_CASE("degenerate single-word corpus") {
    auto o = two_topics();
    o.iterations = 20;
    const auto m = train_lda({{"a", "a", "a"}}, o);
    CHECK(m.vocab_size() == 5);
    const auto a = static_cast<std::size_t>(m.vocab.index_of("a"));
    for (std::size_t k = 0; k < 2; ++k) {
        CHECK(m.top_words(k, 5) == std::vector<std::string>{"a"});
        CHECK(m.prob(k, a) == doctest::Approx(1.0).epsilon(1e-12));
        for (std::size_t w = 0; w < m.vocab_size(); ++w) {
            if (w != a) CHECK(m.prob(k, w) == 0.0);
        }
    }
    check_rows_are_distributions(m);
}

TEST_CASE("training errors") {
    auto o = two_topics();
    o.num_topics = 1;
    CHECK_THROWS_AS(train_lda({{"a"}}, o), UsageError);
    CHECK_THROWS_AS(train_lda({{}, {}}, two_topics()), DataError);
    o = two_topics();
    o.iterations = 0;
    CHECK_THROWS_AS(train_lda({{"a"}}, o), UsageError);
}

TEST_CASE("standard LDA recovers the planted topics") {
    const auto pc = planted_corpus(1);
    TrainTrace trace;
    const auto m = train_lda(pc.docs, two_topics(), &trace);
    const auto tv = avsd::testing::matched_tv(m, pc);
    MESSAGE("tv " << tv[0] << " " << tv[1]);
    CHECK(tv[0] < 0.1);
    CHECK(tv[1] < 0.1);
    check_rows_are_distributions(m);
    CHECK(trace.log_likelihood.size() == 500);
    CHECK(trace.inconsistent_sweeps == 0);
}

TEST_CASE("same seed gives bitwise identical phi") {
    const auto pc = planted_corpus(2, 60, 20);
    auto o = two_topics(9);
    o.iterations = 50;
    const auto a = train_lda(pc.docs, o), b = train_lda(pc.docs, o);
    CHECK(a.phi == b.phi);
    o.rng_seed = 10;
    CHECK(train_lda(pc.docs, o).phi != a.phi);
}

// At stationarity consecutive window means are exchangeable, so this only
// holds while the chain is still burning in.
TEST_CASE("log-likelihood window means rise over the first five windows" * doctest::may_fail()) {
    const auto pc = planted_corpus(1);
    TrainTrace trace;
    auto o = two_topics();
    o.iterations = 50;
    train_lda(pc.docs, o, &trace);
    const auto w = avsd::testing::window_means(trace.log_likelihood);
    REQUIRE(w.size() == 5);
    for (std::size_t i = 1; i < 5; ++i) {
        CAPTURE(i);
        CHECK(w[i] >= w[i - 1]);
    }
}

TEST_CASE("log-likelihood rises during burn-in") {
    const auto pc = planted_corpus(1);
    TrainTrace trace;
    auto o = two_topics();
    o.iterations = 30;
    train_lda(pc.docs, o, &trace);
    const auto w = avsd::testing::window_means(trace.log_likelihood);
    CHECK(w[1] > w[0]);
    CHECK(w[2] > w[1]);
}

TEST_CASE("guided LDA recovers topics in seeded positions") {
    const auto pc = planted_corpus(1);
    const auto seeds = avsd::testing::planted_seeds(pc);
    const auto g = train_guided_lda(pc.docs, seeds, two_topics());
    CHECK(g.warnings.empty());
    const double tv0 = avsd::testing::tv_distance(g.model, 0, pc, 0);
    const double tv1 = avsd::testing::tv_distance(g.model, 1, pc, 1);
    MESSAGE("tv " << tv0 << " " << tv1);
    CHECK(tv0 < 0.1);
    CHECK(tv1 < 0.1);
    const auto mass = avsd::testing::seed_mass(g.model, seeds);
    CHECK(mass.inside > mass.outside);
    check_rows_are_distributions(g.model);
}

TEST_CASE("guided LDA with full confidence on a seed-only corpus") {
    SeedSet seeds;
    seeds.num_topics = 3;
    seeds.seed_confidence = 1.0;
    seeds.topic_names = {"x", "y", "z"};
    seeds.seeds = {{"sofa", "tv"}, {"stove", "oven"}, {"bed", "pillow"}};
    std::vector<corpus::Tokens> docs;
    Rng rng(4);
    for (int d = 0; d < 40; ++d) {
        corpus::Tokens doc;
        for (int i = 0; i < 12; ++i) {
            const auto& group = seeds.seeds[rng.index(3)];
            doc.push_back(group[rng.index(group.size())]);
        }
        docs.push_back(doc);
    }
    auto o = two_topics();
    o.iterations = 100;
    const auto g = train_guided_lda(docs, seeds, o);
    for (std::size_t t = 0; t < 3; ++t) {
        for (const auto& w : seeds.seeds[t]) {
            const auto id = static_cast<std::size_t>(g.model.vocab.index_of(w));
            std::size_t best = 0;
            for (std::size_t k = 1; k < 3; ++k) {
                if (g.model.prob(k, id) > g.model.prob(best, id)) best = k;
            }
            CAPTURE(w);
            CHECK(best == t);
        }
    }
}

TEST_CASE("guided LDA seed problems") {
    const auto pc = planted_corpus(3, 20, 10);
    auto seeds = avsd::testing::planted_seeds(pc);
    seeds.seeds[0].push_back("absent");
    const auto g = train_guided_lda(pc.docs, seeds, two_topics());
    REQUIRE(g.warnings.size() == 1);
    CHECK(g.warnings[0].find("absent") != std::string::npos);
    seeds.seeds[1] = {"nothing", "here"};
    CHECK_THROWS_AS(train_guided_lda(pc.docs, seeds, two_topics()), DataError);
}

TEST_CASE("seed file with the nine printed topics") {
    const auto r = load_seed_file(kFixtures + "/seed_words.txt");
    CHECK(r.seeds.num_topics == 9);
    CHECK(r.seeds.topic_names ==
          std::vector<std::string>{"Entertainment/LivingRoom", "Cooking/Kitchen", "Eating/Dining", "Cleaning/Bath",
                                   "Dressing/Closet", "Laundry", "Rest/Bedroom", "Work/Study", "Sports/Exercise"});
    CHECK(r.seeds.seeds[0].front() == "living");
    CHECK(r.seeds.seeds[8].back() == "exercise");
    // "room" is printed under five topics and stays with the first
    const auto& dining = r.seeds.seeds[2];
    CHECK(std::find(dining.begin(), dining.end(), "room") == dining.end());
    CHECK_FALSE(r.warnings.empty());
    std::set<std::string> seen;
    for (const auto& list : r.seeds.seeds) {
        for (const auto& w : list) CHECK(seen.insert(w).second);
    }
    CHECK(parse_seed_text("A: x, y\nB: z\n", 5).seeds.num_topics == 5);
    CHECK_THROWS_AS(parse_seed_text("A: x\nB: y\n", 1), UsageError);
    CHECK_THROWS_AS(parse_seed_text("no colon here\n"), DataError);
}

TEST_CASE("inference") {
    const auto pc = planted_corpus(1);
    const auto m = train_lda(pc.docs, two_topics());
    const auto uniform = std::vector<double>{0.5, 0.5};
    CHECK(infer_topics(m, {}).theta == uniform);
    CHECK(infer_topics(m, {"zzz", "qqq"}).theta == uniform);
    const auto t = infer_topics(m, pc.docs[0]);
    check_distribution(t.theta);
    CHECK(infer_topics(m, pc.docs[0], 50, 7).theta == infer_topics(m, pc.docs[0], 50, 7).theta);
}

TEST_CASE("seed words of one topic infer to that topic") {
    const auto seeds = load_seed_file(kFixtures + "/seed_words.txt").seeds;
    Rng rng(5);
    std::vector<corpus::Tokens> docs;
    for (int d = 0; d < 270; ++d) {
        const auto& words = seeds.seeds[static_cast<std::size_t>(d % 9)];
        corpus::Tokens doc;
        for (int i = 0; i < 20; ++i) doc.push_back(words[rng.index(words.size())]);
        docs.push_back(doc);
    }
    LdaOptions o;
    o.iterations = 200;
    const auto g = train_guided_lda(docs, seeds, o);
    for (std::size_t topic = 0; topic < 9; ++topic) {
        const auto theta = infer_topics(g.model, seeds.seeds[topic], 50, 3).theta;
        const auto best = static_cast<std::size_t>(std::max_element(theta.begin(), theta.end()) - theta.begin());
        CAPTURE(topic);
        CHECK(best == topic);
    }
}

TEST_CASE("topic feature vectors concatenate in source order") {
    const auto pc = planted_corpus(6, 40, 15);
    std::vector<TopicModel> models;
    for (SourceTag tag : kAllSources) {
        LdaOptions o;
        o.iterations = 30;
        o.source = tag;
        o.rng_seed = static_cast<std::uint64_t>(tag) + 1;
        models.push_back(train_lda(pc.docs, o));
    }
    std::map<SourceTag, corpus::Tokens> docs;
    for (SourceTag tag : kAllSources) docs[tag] = pc.docs[static_cast<std::size_t>(tag)];

    CHECK(topic_feature_vector({&models[2]}, docs).size() == 9);

    std::vector<const TopicModel*> shuffled{&models[4], &models[0], &models[5], &models[1], &models[3], &models[2]};
    const auto v = topic_feature_vector(shuffled, docs, 50, 11);
    REQUIRE(v.size() == 54);
    std::vector<double> manual;
    for (SourceTag tag : kAllSources) {
        const auto theta = infer_topics(models[static_cast<std::size_t>(tag)], docs[tag], 50, 11).theta;
        manual.insert(manual.end(), theta.begin(), theta.end());
    }
    CHECK(v == manual);
    for (std::size_t s = 0; s < 6; ++s) {
        check_distribution({v.begin() + static_cast<long>(9 * s), v.begin() + static_cast<long>(9 * s + 9)});
    }

    CHECK_THROWS_AS(topic_feature_vector({&models[0], &models[0]}, docs), UsageError);
}

TEST_CASE("example documents only use material before the answer") {
    corpus::Dialog d{"v", {"cap"}, {{{"q0"}, {"a0"}}, {{"q1"}, {"a1"}}, {{"q2"}, {"a2"}}}};
    const auto docs = example_documents(d, 2);
    CHECK(docs.at(SourceTag::Q) == corpus::Tokens{"q2"});
    CHECK(docs.at(SourceTag::A) == corpus::Tokens{"a0", "a1"});
    CHECK(docs.at(SourceTag::QA) == corpus::Tokens{"q1", "a1"});
    CHECK(docs.at(SourceTag::C) == corpus::Tokens{"cap"});
    CHECK(docs.at(SourceTag::H) == corpus::Tokens{"q0", "a0", "q1", "a1"});
    CHECK(docs.at(SourceTag::HC) == corpus::Tokens{"cap", "q0", "a0", "q1", "a1"});
    CHECK(example_documents(d, 0).at(SourceTag::QA).empty());
    CHECK_THROWS_AS(example_documents(d, 3), UsageError);
    CHECK(documents_for(SourceTag::Q, {d}).size() == 3);
    CHECK(documents_for(SourceTag::HC, {d}).size() == 1);
}

TEST_CASE("topic model file round-trip") {
    const auto pc = planted_corpus(7, 30, 10);
    auto o = two_topics();
    o.iterations = 20;
    o.source = SourceTag::HC;
    const auto m = train_lda(pc.docs, o);
    const auto path = std::filesystem::temp_directory_path() / "avsd_topic_roundtrip.txt";
    save_model(m, path);
    const auto back = load_model(path);
    CHECK(back.phi == m.phi);
    CHECK(back.alpha == m.alpha);
    CHECK(back.beta == m.beta);
    CHECK(back.source == SourceTag::HC);
    CHECK(back.vocab.tokens() == m.vocab.tokens());
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_model(path), DataError);
}
