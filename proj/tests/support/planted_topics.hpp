#pragma once

// Synthetic corpus drawn from two known topics over disjoint ten-word
// vocabularies, plus helpers comparing recovered phi rows with the truth.

#include "avsd/rng.hpp"
#include "avsd/topics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace avsd::testing {

struct PlantedCorpus {
    std::vector<std::vector<std::string>> topic_words;  // per topic, 10 words
    std::vector<std::vector<double>> topic_probs;       // per topic, over its own words
    std::vector<corpus::Tokens> docs;
};

inline PlantedCorpus planted_corpus(std::uint64_t seed, std::size_t num_docs = 200, std::size_t doc_len = 30) {
    PlantedCorpus pc;
    const char* prefixes[] = {"kit", "gym"};
    for (std::size_t t = 0; t < 2; ++t) {
        std::vector<std::string> words;
        std::vector<double> probs;
        double sum = 0.0;
        for (std::size_t w = 0; w < 10; ++w) {
            words.push_back(std::string(prefixes[t]) + std::to_string(w));
            probs.push_back(1.0 / std::sqrt(static_cast<double>(w + 1)));
            sum += probs.back();
        }
        for (auto& p : probs) p /= sum;
        pc.topic_words.push_back(words);
        pc.topic_probs.push_back(probs);
    }
    Rng rng(seed);
    for (std::size_t d = 0; d < num_docs; ++d) {
        const double share = rng.uniform() < 0.5 ? rng.uniform(0.0, 0.2) : rng.uniform(0.8, 1.0);
        corpus::Tokens doc;
        for (std::size_t i = 0; i < doc_len; ++i) {
            const std::size_t t = rng.uniform() < share ? 0 : 1;
            doc.push_back(pc.topic_words[t][rng.categorical(pc.topic_probs[t])]);
        }
        pc.docs.push_back(std::move(doc));
    }
    return pc;
}

/// Total-variation distance between a model row and a planted topic, both
/// viewed as distributions over the model vocabulary.
inline double tv_distance(const topics::TopicModel& m, std::size_t row, const PlantedCorpus& pc, std::size_t topic) {
    std::vector<double> truth(m.vocab_size(), 0.0);
    for (std::size_t w = 0; w < pc.topic_words[topic].size(); ++w) {
        const int id = m.vocab.index_of(pc.topic_words[topic][w]);
        truth[static_cast<std::size_t>(id)] = pc.topic_probs[topic][w];
    }
    double tv = 0.0;
    for (std::size_t w = 0; w < m.vocab_size(); ++w) tv += std::abs(m.prob(row, w) - truth[w]);
    return tv / 2.0;
}

/// Per-planted-topic TV after choosing the row assignment with the larger
/// total word overlap.
inline std::vector<double> matched_tv(const topics::TopicModel& m, const PlantedCorpus& pc) {
    auto overlap = [&](std::size_t row, std::size_t topic) {
        double s = 0.0;
        for (const auto& w : pc.topic_words[topic]) s += m.prob(row, static_cast<std::size_t>(m.vocab.index_of(w)));
        return s;
    };
    const bool swap = overlap(0, 1) + overlap(1, 0) > overlap(0, 0) + overlap(1, 1);
    return {tv_distance(m, swap ? 1 : 0, pc, 0), tv_distance(m, swap ? 0 : 1, pc, 1)};
}

/// Three most probable planted words of each topic.
inline topics::SeedSet planted_seeds(const PlantedCorpus& pc, double confidence = 0.85) {
    topics::SeedSet s;
    s.num_topics = 2;
    s.seed_confidence = confidence;
    for (std::size_t t = 0; t < 2; ++t) {
        s.topic_names.push_back("planted" + std::to_string(t));
        s.seeds.emplace_back(pc.topic_words[t].begin(), pc.topic_words[t].begin() + 3);
    }
    return s;
}

struct SeedMass {
    double inside = 0.0;   // mean phi of seed words in their seeded topic
    double outside = 0.0;  // mean phi of seed words in every other topic
};

inline SeedMass seed_mass(const topics::TopicModel& m, const topics::SeedSet& seeds) {
    SeedMass r;
    std::size_t n_in = 0, n_out = 0;
    for (std::size_t t = 0; t < seeds.seeded_topics(); ++t) {
        for (const auto& w : seeds.seeds[t]) {
            if (!m.vocab.contains(w)) continue;
            const auto id = static_cast<std::size_t>(m.vocab.index_of(w));
            for (std::size_t k = 0; k < m.num_topics; ++k) {
                if (k == t) r.inside += m.prob(k, id), ++n_in;
                else r.outside += m.prob(k, id), ++n_out;
            }
        }
    }
    r.inside /= static_cast<double>(std::max<std::size_t>(n_in, 1));
    r.outside /= static_cast<double>(std::max<std::size_t>(n_out, 1));
    return r;
}

/// Means of consecutive 10-sweep windows.
inline std::vector<double> window_means(const std::vector<double>& ll, std::size_t window = 10) {
    std::vector<double> out;
    for (std::size_t s = 0; s + window <= ll.size(); s += window) {
        double sum = 0.0;
        for (std::size_t i = s; i < s + window; ++i) sum += ll[i];
        out.push_back(sum / static_cast<double>(window));
    }
    return out;
}

}  // namespace avsd::testing
