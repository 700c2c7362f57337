#pragma once

// Brute-force reference implementations of the caption metrics. They share
// no code with the library: n-grams are compared by linear scans, LCS by
// subsequence enumeration, METEOR by enumerating every alignment.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace oracle {

using Sentence = std::vector<std::string>;

struct Pair {
    Sentence hyp;
    std::vector<Sentence> refs;
};

inline std::vector<Sentence> ngram_list(const Sentence& s, std::size_t n) {
    std::vector<Sentence> out;
    for (std::size_t i = 0; i + n <= s.size(); ++i) out.emplace_back(s.begin() + i, s.begin() + i + n);
    return out;
}

inline std::size_t count_of(const std::vector<Sentence>& list, const Sentence& g) {
    return static_cast<std::size_t>(std::count(list.begin(), list.end(), g));
}

/// Textbook corpus BLEU: clipped counts, closest reference length (shorter on
/// ties), BP = exp(1 - r/c) when c < r, geometric mean of p_1..p_n.
inline std::vector<double> bleu(const std::vector<Pair>& pairs) {
    double c = 0, r = 0;
    std::vector<double> match(4, 0), total(4, 0);
    for (const auto& p : pairs) {
        c += static_cast<double>(p.hyp.size());
        long best = -1;
        for (const auto& ref : p.refs) {
            const long len = static_cast<long>(ref.size());
            const long diff = std::labs(len - static_cast<long>(p.hyp.size()));
            const long best_diff = std::labs(best - static_cast<long>(p.hyp.size()));
            if (best < 0 || diff < best_diff || (diff == best_diff && len < best)) best = len;
        }
        r += static_cast<double>(best);
        for (std::size_t n = 1; n <= 4; ++n) {
            const auto hyp_grams = ngram_list(p.hyp, n);
            total[n - 1] += static_cast<double>(hyp_grams.size());
            std::vector<Sentence> done;
            for (const auto& g : hyp_grams) {
                if (std::find(done.begin(), done.end(), g) != done.end()) continue;
                done.push_back(g);
                std::size_t max_ref = 0;
                for (const auto& ref : p.refs) max_ref = std::max(max_ref, count_of(ngram_list(ref, n), g));
                match[n - 1] += static_cast<double>(std::min(count_of(hyp_grams, g), max_ref));
            }
        }
    }
    const double bp = c == 0 ? 0.0 : (c >= r ? 1.0 : std::exp(1.0 - r / c));
    std::vector<double> out(4, 0.0);
    for (std::size_t n = 1; n <= 4; ++n) {
        double prod = 1.0;
        bool zero = false;
        for (std::size_t k = 0; k < n; ++k) {
            if (total[k] == 0 || match[k] == 0) zero = true;
            else prod *= match[k] / total[k];
        }
        out[n - 1] = zero ? 0.0 : bp * std::pow(prod, 1.0 / static_cast<double>(n));
    }
    return out;
}

inline bool is_subsequence(const Sentence& sub, const Sentence& s) {
    std::size_t j = 0;
    for (std::size_t i = 0; i < s.size() && j < sub.size(); ++i) {
        if (s[i] == sub[j]) ++j;
    }
    return j == sub.size();
}

/// LCS by enumerating every subsequence of the shorter sentence.
inline std::size_t lcs_exhaustive(const Sentence& a, const Sentence& b) {
    const Sentence& small = a.size() <= b.size() ? a : b;
    const Sentence& large = a.size() <= b.size() ? b : a;
    std::size_t best = 0;
    const std::size_t n = small.size();
    for (unsigned long mask = 0; mask < (1UL << n); ++mask) {
        Sentence sub;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (1UL << i)) sub.push_back(small[i]);
        }
        if (sub.size() > best && is_subsequence(sub, large)) best = sub.size();
    }
    return best;
}

inline double rouge_l(const std::vector<Pair>& pairs, double beta = 1.2) {
    double sum = 0.0;
    for (const auto& p : pairs) {
        double best = 0.0;
        for (const auto& ref : p.refs) {
            if (p.hyp.empty() || ref.empty()) continue;
            const double l = static_cast<double>(lcs_exhaustive(p.hyp, ref));
            if (l == 0) continue;
            const double prec = l / static_cast<double>(p.hyp.size());
            const double rec = l / static_cast<double>(ref.size());
            best = std::max(best, (1 + beta * beta) * prec * rec / (rec + beta * beta * prec));
        }
        sum += best;
    }
    return sum / static_cast<double>(pairs.size());
}

/// CIDEr-D with dense vectors over an explicitly enumerated n-gram universe.
inline double cider_d(const std::vector<Pair>& pairs, double sigma = 6.0) {
    const double big_n = static_cast<double>(pairs.size());
    double total = 0.0;
    for (const auto& p : pairs) {
        double pair_sum = 0.0;
        for (const auto& ref : p.refs) {
            double per_n_sum = 0.0;
            for (std::size_t n = 1; n <= 4; ++n) {
                std::vector<Sentence> universe;
                for (const auto& g : ngram_list(p.hyp, n)) {
                    if (std::find(universe.begin(), universe.end(), g) == universe.end()) universe.push_back(g);
                }
                for (const auto& g : ngram_list(ref, n)) {
                    if (std::find(universe.begin(), universe.end(), g) == universe.end()) universe.push_back(g);
                }
                std::vector<double> vh, vr;
                for (const auto& g : universe) {
                    double df = 0;
                    for (const auto& q : pairs) {
                        bool present = false;
                        for (const auto& rr : q.refs) present = present || count_of(ngram_list(rr, n), g) > 0;
                        df += present ? 1 : 0;
                    }
                    const double idf = std::log(big_n) - std::log(std::max(1.0, df));
                    vh.push_back(static_cast<double>(count_of(ngram_list(p.hyp, n), g)) * idf);
                    vr.push_back(static_cast<double>(count_of(ngram_list(ref, n), g)) * idf);
                }
                double dot = 0, nh = 0, nr = 0;
                for (std::size_t k = 0; k < universe.size(); ++k) {
                    if (vh[k] != 0.0) dot += std::min(vh[k], vr[k]) * vr[k];
                    nh += vh[k] * vh[k];
                    nr += vr[k] * vr[k];
                }
                double val = dot;
                if (nh != 0 && nr != 0) val /= std::sqrt(nh) * std::sqrt(nr);
                const double delta = static_cast<double>(p.hyp.size()) - static_cast<double>(ref.size());
                val *= std::exp(-delta * delta / (2 * sigma * sigma));
                per_n_sum += val;
            }
            pair_sum += per_n_sum / 4.0;
        }
        total += pair_sum / static_cast<double>(p.refs.size()) * 10.0;
    }
    return total / big_n;
}

inline std::string stem(std::string w) {
    auto ends = [&](const std::string& s) { return w.size() >= s.size() && w.substr(w.size() - s.size()) == s; };
    if (ends("sses")) w = w.substr(0, w.size() - 2);
    else if (ends("ies") && w.size() > 4) w = w.substr(0, w.size() - 2);
    else if (ends("s") && !ends("ss") && w.size() > 3) w = w.substr(0, w.size() - 1);
    if (ends("ing") && w.size() >= 6) w = w.substr(0, w.size() - 3);
    else if (ends("ed") && w.size() >= 5) w = w.substr(0, w.size() - 2);
    if (ends("e") && w.size() > 3) w = w.substr(0, w.size() - 1);
    return w;
}

struct Alignment {
    std::vector<std::pair<std::size_t, std::size_t>> links;  // (hyp, ref), hyp ascending
    std::size_t exact = 0;
};

inline void enumerate_alignments(const Sentence& h, const Sentence& r, std::size_t i, std::vector<char>& used,
                                 Alignment& cur, std::vector<Alignment>& out) {
    if (i == h.size()) {
        out.push_back(cur);
        return;
    }
    enumerate_alignments(h, r, i + 1, used, cur, out);
    for (std::size_t j = 0; j < r.size(); ++j) {
        if (used[j]) continue;
        const bool exact = h[i] == r[j];
        if (!exact && stem(h[i]) != stem(r[j])) continue;
        used[j] = 1;
        cur.links.emplace_back(i, j);
        cur.exact += exact ? 1 : 0;
        enumerate_alignments(h, r, i + 1, used, cur, out);
        cur.exact -= exact ? 1 : 0;
        cur.links.pop_back();
        used[j] = 0;
    }
}

/// Every alignment is listed; the scored one has the most exact links, then
/// the most links, then the fewest chunks.
inline double meteor_single(const Sentence& h, const Sentence& r) {
    if (h.empty() || r.empty()) return 0.0;
    std::vector<Alignment> all;
    std::vector<char> used(r.size(), 0);
    Alignment cur;
    enumerate_alignments(h, r, 0, used, cur, all);
    std::size_t best_exact = 0, best_total = 0;
    for (const auto& a : all) best_exact = std::max(best_exact, a.exact);
    for (const auto& a : all) {
        if (a.exact == best_exact) best_total = std::max(best_total, a.links.size());
    }
    if (best_total == 0) return 0.0;
    std::size_t best_chunks = static_cast<std::size_t>(-1);
    for (const auto& a : all) {
        if (a.exact != best_exact || a.links.size() != best_total) continue;
        std::size_t chunks = 0;
        for (std::size_t k = 0; k < a.links.size(); ++k) {
            const bool cont = k > 0 && a.links[k].first == a.links[k - 1].first + 1 &&
                              a.links[k].second == a.links[k - 1].second + 1;
            if (!cont) ++chunks;
        }
        best_chunks = std::min(best_chunks, chunks);
    }
    const double m = static_cast<double>(best_total);
    const double prec = m / static_cast<double>(h.size());
    const double rec = m / static_cast<double>(r.size());
    const double fmean = 10 * prec * rec / (rec + 9 * prec);
    const double frag = static_cast<double>(best_chunks) / m;
    return fmean * (1 - 0.5 * frag * frag * frag);
}

inline double meteor(const std::vector<Pair>& pairs) {
    double sum = 0.0;
    for (const auto& p : pairs) {
        double best = 0.0;
        for (const auto& ref : p.refs) best = std::max(best, meteor_single(p.hyp, ref));
        sum += best;
    }
    return sum / static_cast<double>(pairs.size());
}

}  // namespace oracle
