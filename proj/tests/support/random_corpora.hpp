#pragma once

#include "avsd/metrics.hpp"
#include "avsd/rng.hpp"
#include "oracles/metric_oracles.hpp"

#include <string>
#include <vector>

namespace avsd::testing {

/// Word families with shared stems so the stem stage gets exercised.
inline const std::vector<std::vector<std::string>>& word_families() {
    static const std::vector<std::vector<std::string>> f{
        {"the"}, {"a"}, {"man", "men"}, {"cat", "cats"}, {"sit", "sits", "sitting"}, {"walk", "walks", "walked"},
        {"on"}, {"mat", "mats"}, {"is"}, {"he"}, {"dish", "dishes"}, {"wash", "washed", "washing"},
        {"yes"}, {"no"}};
    return f;
}

inline std::string random_word(Rng& rng) {
    const auto& fam = word_families()[rng.index(word_families().size())];
    return fam[rng.index(fam.size())];
}

inline std::string variant_of(Rng& rng, const std::string& w) {
    for (const auto& fam : word_families()) {
        for (const auto& x : fam) {
            if (x == w) return fam[rng.index(fam.size())];
        }
    }
    return w;
}

/// Hypothesis made by editing a reference: keep, substitute, swap in a
/// morphological variant, delete or insert.
inline corpus::Tokens perturb(Rng& rng, const corpus::Tokens& ref) {
    corpus::Tokens out;
    for (const auto& w : ref) {
        const double u = rng.uniform();
        if (u < 0.6) {
            out.push_back(w);
        } else if (u < 0.75) {
            out.push_back(random_word(rng));
        } else if (u < 0.85) {
            out.push_back(variant_of(rng, w));
        } else if (u < 0.95) {
            continue;
        } else {
            out.push_back(w);
            out.push_back(random_word(rng));
        }
    }
    if (out.empty()) out.push_back(random_word(rng));
    return out;
}

inline corpus::Tokens random_sentence(Rng& rng, std::size_t min_len, std::size_t max_len) {
    corpus::Tokens s(min_len + rng.index(max_len - min_len + 1));
    for (auto& w : s) w = random_word(rng);
    return s;
}

/// Small random corpus of 2..10 pairs with 1..3 references of 3..7 tokens.
inline std::vector<metrics::EvalPair> random_corpus(Rng& rng) {
    std::vector<metrics::EvalPair> pairs(2 + rng.index(9));
    for (auto& p : pairs) {
        const std::size_t nrefs = 1 + rng.index(3);
        for (std::size_t r = 0; r < nrefs; ++r) p.references.push_back(random_sentence(rng, 3, 7));
        p.hypothesis = perturb(rng, p.references[rng.index(nrefs)]);
        if (p.hypothesis.size() > 7) p.hypothesis.resize(7);
    }
    return pairs;
}

inline std::vector<oracle::Pair> to_oracle(const std::vector<metrics::EvalPair>& pairs) {
    std::vector<oracle::Pair> out;
    for (const auto& p : pairs) out.push_back({p.hypothesis, p.references});
    return out;
}

}  // namespace avsd::testing
