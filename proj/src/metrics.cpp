#include "avsd/metrics.hpp"

#include "avsd/error.hpp"
#include "avsd/nn/param_store.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace avsd::metrics {

namespace {

using NgramCounts = std::map<std::string, std::size_t>;

NgramCounts ngrams(const Tokens& tokens, std::size_t n) {
    NgramCounts out;
    if (tokens.size() < n) return out;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t k = 1; k < n; ++k) key += ' ' + tokens[i + k];
        ++out[key];
    }
    return out;
}

std::size_t clipped_matches(const NgramCounts& hyp, const std::vector<NgramCounts>& refs) {
    std::size_t m = 0;
    for (const auto& [g, c] : hyp) {
        std::size_t best = 0;
        for (const auto& r : refs) {
            const auto it = r.find(g);
            if (it != r.end()) best = std::max(best, it->second);
        }
        m += std::min(c, best);
    }
    return m;
}

std::size_t closest_length(std::size_t hyp_len, const std::vector<Tokens>& refs) {
    std::size_t best = refs.front().size();
    for (const auto& r : refs) {
        const auto d = [&](std::size_t x) { return x > hyp_len ? x - hyp_len : hyp_len - x; };
        if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    return best;
}

void require_references(const EvalPair& p) {
    if (p.references.empty()) throw UsageError("evaluation pair without references");
}

}  // namespace

// --------------------------------------------------------------------------- BLEU

BleuResult bleu(std::span<const EvalPair> pairs, int max_n) {
    if (pairs.empty()) throw UsageError("bleu: no pairs");
    if (max_n < 1 || max_n > 4) throw UsageError("bleu: max_n must be in 1..4");
    BleuResult r;
    for (const auto& p : pairs) {
        require_references(p);
        r.hypothesis_length += p.hypothesis.size();
        r.reference_length += closest_length(p.hypothesis.size(), p.references);
        for (int n = 1; n <= max_n; ++n) {
            const auto un = static_cast<std::size_t>(n);
            std::vector<NgramCounts> refs;
            for (const auto& ref : p.references) refs.push_back(ngrams(ref, un));
            r.matches[un - 1] += clipped_matches(ngrams(p.hypothesis, un), refs);
            r.totals[un - 1] += p.hypothesis.size() >= un ? p.hypothesis.size() - un + 1 : 0;
        }
    }
    if (r.hypothesis_length == 0) {
        r.brevity_penalty = 0.0;
    } else if (r.hypothesis_length >= r.reference_length) {
        r.brevity_penalty = 1.0;
    } else {
        r.brevity_penalty =
            std::exp(1.0 - static_cast<double>(r.reference_length) / static_cast<double>(r.hypothesis_length));
    }
    double log_sum = 0.0;
    bool zero = false;
    for (int n = 1; n <= max_n; ++n) {
        const auto i = static_cast<std::size_t>(n - 1);
        if (r.totals[i] == 0 || r.matches[i] == 0) {
            zero = true;
        } else {
            r.precision[i] = static_cast<double>(r.matches[i]) / static_cast<double>(r.totals[i]);
            log_sum += std::log(r.precision[i]);
        }
        r.score[i] = zero ? 0.0 : r.brevity_penalty * std::exp(log_sum / n);
    }
    return r;
}

std::array<double, 4> sentence_bleu(const Tokens& hypothesis, const std::vector<Tokens>& references) {
    if (references.empty()) throw UsageError("sentence_bleu: no references");
    std::array<double, 4> out{};
    const std::size_t c = hypothesis.size();
    if (c == 0) return out;
    const std::size_t ref_len = closest_length(c, references);
    const double bp = c >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(c));
    double log_sum = 0.0;
    bool zero = false;
    for (std::size_t n = 1; n <= 4; ++n) {
        std::vector<NgramCounts> refs;
        for (const auto& ref : references) refs.push_back(ngrams(ref, n));
        double m = static_cast<double>(clipped_matches(ngrams(hypothesis, n), refs));
        double t = static_cast<double>(c >= n ? c - n + 1 : 0);
        if (n >= 2) {
            m += 1.0;
            t += 1.0;
        }
        if (m == 0.0 || t == 0.0) zero = true;
        if (!zero) log_sum += std::log(m / t);
        out[n - 1] = zero ? 0.0 : bp * std::exp(log_sum / static_cast<double>(n));
    }
    return out;
}

// --------------------------------------------------------------------------- ROUGE-L

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l_pair(const Tokens& hypothesis, const std::vector<Tokens>& references) {
    double best = 0.0;
    for (const auto& ref : references) {
        if (hypothesis.empty() || ref.empty()) continue;
        const auto lcs = static_cast<double>(lcs_length(hypothesis, ref));
        if (lcs == 0.0) continue;
        const double p = lcs / static_cast<double>(hypothesis.size());
        const double r = lcs / static_cast<double>(ref.size());
        const double b2 = kRougeBeta * kRougeBeta;
        best = std::max(best, (1.0 + b2) * p * r / (r + b2 * p));
    }
    return best;
}

double rouge_l(std::span<const EvalPair> pairs) {
    if (pairs.empty()) throw UsageError("rouge_l: no pairs");
    double sum = 0.0;
    for (const auto& p : pairs) {
        require_references(p);
        sum += rouge_l_pair(p.hypothesis, p.references);
    }
    return sum / static_cast<double>(pairs.size());
}

// --------------------------------------------------------------------------- CIDEr-D

CiderResult cider_d(std::span<const EvalPair> pairs) {
    if (pairs.empty()) throw UsageError("cider: no pairs");
    CiderResult result;
    if (pairs.size() == 1) result.warnings.push_back("cider: single pair, document frequencies are degenerate");
    constexpr std::size_t kMaxN = 4;

    // Document frequency: number of pairs whose reference set contains the n-gram.
    std::map<std::string, double> df;
    for (const auto& p : pairs) {
        require_references(p);
        std::set<std::string> seen;
        for (const auto& ref : p.references) {
            for (std::size_t n = 1; n <= kMaxN; ++n) {
                for (const auto& [g, c] : ngrams(ref, n)) seen.insert(g);
            }
        }
        for (const auto& g : seen) df[g] += 1.0;
    }
    const double log_n = std::log(static_cast<double>(pairs.size()));

    struct Vec {
        std::array<std::map<std::string, double>, kMaxN> weights;
        std::array<double, kMaxN> norm{};
        std::size_t length = 0;
    };
    auto vectorize = [&](const Tokens& tokens) {
        Vec v;
        v.length = tokens.size();
        for (std::size_t n = 1; n <= kMaxN; ++n) {
            for (const auto& [g, c] : ngrams(tokens, n)) {
                const auto it = df.find(g);
                const double d = it == df.end() ? 0.0 : it->second;
                const double w = static_cast<double>(c) * (log_n - std::log(std::max(1.0, d)));
                v.weights[n - 1][g] = w;
                v.norm[n - 1] += w * w;
            }
            v.norm[n - 1] = std::sqrt(v.norm[n - 1]);
        }
        return v;
    };

    double total = 0.0;
    for (const auto& p : pairs) {
        const Vec hyp = vectorize(p.hypothesis);
        double pair_score = 0.0;
        for (const auto& ref_tokens : p.references) {
            const Vec ref = vectorize(ref_tokens);
            const double delta = static_cast<double>(hyp.length) - static_cast<double>(ref.length);
            const double penalty = std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));
            double sim = 0.0;
            for (std::size_t n = 0; n < kMaxN; ++n) {
                double dot = 0.0;
                for (const auto& [g, w] : hyp.weights[n]) {
                    const auto it = ref.weights[n].find(g);
                    if (it != ref.weights[n].end()) dot += std::min(w, it->second) * it->second;
                }
                if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) dot /= hyp.norm[n] * ref.norm[n];
                sim += dot * penalty;
            }
            pair_score += sim / static_cast<double>(kMaxN);
        }
        pair_score = pair_score / static_cast<double>(p.references.size()) * 10.0;
        result.per_pair.push_back(pair_score);
        total += pair_score;
    }
    result.score = total / static_cast<double>(pairs.size());
    return result;
}

// --------------------------------------------------------------------------- METEOR-lite

std::string stem(const std::string& word) {
    std::string w = word;
    auto ends_with = [&](std::string_view suffix) {
        return w.size() >= suffix.size() && w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with("sses")) {
        w.resize(w.size() - 2);
    } else if (ends_with("ies") && w.size() > 4) {
        w.resize(w.size() - 2);
    } else if (ends_with("s") && !ends_with("ss") && w.size() > 3) {
        w.resize(w.size() - 1);
    }
    if (ends_with("ing") && w.size() >= 6) {
        w.resize(w.size() - 3);
    } else if (ends_with("ed") && w.size() >= 5) {
        w.resize(w.size() - 2);
    }
    if (ends_with("e") && w.size() > 3) w.resize(w.size() - 1);
    return w;
}

namespace {

class MeteorAligner {
public:
    MeteorAligner(const Tokens& hyp, const Tokens& ref) : hyp_(hyp), ref_(ref) {
        for (const auto& t : hyp) hyp_stems_.push_back(stem(t));
        for (const auto& t : ref) ref_stems_.push_back(stem(t));
        std::map<std::string, std::size_t> hc, rc;
        for (const auto& t : hyp) ++hc[t];
        for (const auto& t : ref) ++rc[t];
        for (const auto& [w, c] : hc) {
            const auto it = rc.find(w);
            if (it != rc.end()) exact_quota_[w] = std::min(c, it->second);
        }
        // Stem stage runs on the tokens the exact stage leaves over.
        std::map<std::string, std::size_t> hs, rs;
        for (const auto& [w, c] : hc) {
            const auto q = exact_quota_.count(w) ? exact_quota_[w] : 0;
            leftover_hyp_[w] = c - q;
            hs[stem(w)] += c - q;
        }
        for (const auto& [w, c] : rc) {
            const auto q = exact_quota_.count(w) ? exact_quota_[w] : 0;
            leftover_ref_[w] = c - q;
            rs[stem(w)] += c - q;
        }
        target_ = 0;
        for (const auto& [w, q] : exact_quota_) target_ += q;
        for (const auto& [s, c] : hs) {
            const auto it = rs.find(s);
            if (it != rs.end()) target_ += std::min(c, it->second);
        }
        for (const auto& [w, q] : exact_quota_) exact_used_[w] = 0;
    }

    MeteorDetail run() {
        MeteorDetail d;
        d.matches = target_;
        if (target_ == 0) return d;
        used_.assign(ref_.size(), 0);
        best_chunks_ = target_ + 1;
        search(0, 0, 0, -2, -2);
        d.chunks = best_chunks_;
        const auto m = static_cast<double>(d.matches);
        d.precision = m / static_cast<double>(hyp_.size());
        d.recall = m / static_cast<double>(ref_.size());
        d.fmean = 10.0 * d.precision * d.recall / (d.recall + 9.0 * d.precision);
        d.penalty = 0.5 * std::pow(static_cast<double>(d.chunks) / m, 3.0);
        d.score = d.fmean * (1.0 - d.penalty);
        return d;
    }

private:
    static constexpr std::size_t kNodeBudget = 2'000'000;

    void search(std::size_t i, std::size_t matched, std::size_t chunks, long last_i, long last_j) {
        if (++nodes_ > kNodeBudget && best_chunks_ <= target_) return;
        if (chunks >= best_chunks_) return;
        if (matched == target_) {
            best_chunks_ = chunks;
            return;
        }
        if (i == hyp_.size()) return;
        if (hyp_.size() - i < target_ - matched) return;
        for (std::size_t j = 0; j < ref_.size(); ++j) {
            if (used_[j]) continue;
            const bool exact = hyp_[i] == ref_[j];
            if (exact) {
                auto& used = exact_used_[hyp_[i]];
                if (used >= exact_quota_[hyp_[i]]) continue;
                ++used;
            } else {
                if (hyp_stems_[i] != ref_stems_[j]) continue;
                // Stem pairs only draw on tokens a maximal exact matching leaves over.
                if (stem_used_hyp_[hyp_[i]] >= leftover_hyp_[hyp_[i]]) continue;
                if (stem_used_ref_[ref_[j]] >= leftover_ref_[ref_[j]]) continue;
                ++stem_used_hyp_[hyp_[i]];
                ++stem_used_ref_[ref_[j]];
            }
            used_[j] = 1;
            const bool extends = last_i == static_cast<long>(i) - 1 && last_j == static_cast<long>(j) - 1;
            search(i + 1, matched + 1, chunks + (extends ? 0 : 1), static_cast<long>(i), static_cast<long>(j));
            used_[j] = 0;
            if (exact) {
                --exact_used_[hyp_[i]];
            } else {
                --stem_used_hyp_[hyp_[i]];
                --stem_used_ref_[ref_[j]];
            }
        }
        search(i + 1, matched, chunks, last_i, last_j);
    }

    const Tokens& hyp_;
    const Tokens& ref_;
    std::vector<std::string> hyp_stems_;
    std::vector<std::string> ref_stems_;
    std::map<std::string, std::size_t> exact_quota_;
    std::map<std::string, std::size_t> exact_used_;
    std::map<std::string, std::size_t> leftover_hyp_;
    std::map<std::string, std::size_t> leftover_ref_;
    std::map<std::string, std::size_t> stem_used_hyp_;
    std::map<std::string, std::size_t> stem_used_ref_;
    std::vector<char> used_;
    std::size_t target_ = 0;
    std::size_t best_chunks_ = 0;
    std::size_t nodes_ = 0;
};

}  // namespace

MeteorDetail meteor_align(const Tokens& hypothesis, const Tokens& reference) {
    if (hypothesis.empty() || reference.empty()) return {};
    return MeteorAligner(hypothesis, reference).run();
}

double meteor_pair(const Tokens& hypothesis, const std::vector<Tokens>& references) {
    double best = 0.0;
    for (const auto& ref : references) best = std::max(best, meteor_align(hypothesis, ref).score);
    return best;
}

double meteor_lite(std::span<const EvalPair> pairs) {
    if (pairs.empty()) throw UsageError("meteor: no pairs");
    double sum = 0.0;
    for (const auto& p : pairs) {
        require_references(p);
        sum += meteor_pair(p.hypothesis, p.references);
    }
    return sum / static_cast<double>(pairs.size());
}

// --------------------------------------------------------------------------- binary answers

BinaryPrf binary_prf(std::span<const EvalPair> pairs) {
    BinaryPrf out;
    std::size_t tp_yes = 0, tp_no = 0;
    for (const auto& p : pairs) {
        if (!p.labels.binary) continue;
        ++out.count;
        const corpus::Polarity ref = p.labels.polarity;
        const corpus::Polarity hyp = corpus::answer_polarity(p.hypothesis);
        if (ref == corpus::Polarity::yes) ++out.yes.support;
        if (ref == corpus::Polarity::no) ++out.no.support;
        if (hyp == corpus::Polarity::yes) ++out.yes.predicted;
        if (hyp == corpus::Polarity::no) ++out.no.predicted;
        if (hyp == ref && ref == corpus::Polarity::yes) ++tp_yes;
        if (hyp == ref && ref == corpus::Polarity::no) ++tp_no;
    }
    if (out.count == 0) throw UsageError("binary_prf: no binary pairs");
    auto fill = [](Prf& prf, std::size_t tp) {
        prf.precision = prf.predicted ? static_cast<double>(tp) / static_cast<double>(prf.predicted) : 0.0;
        prf.recall = prf.support ? static_cast<double>(tp) / static_cast<double>(prf.support) : 0.0;
        const double s = prf.precision + prf.recall;
        prf.f1 = s > 0.0 ? 2.0 * prf.precision * prf.recall / s : 0.0;
    };
    fill(out.yes, tp_yes);
    fill(out.no, tp_no);
    std::size_t active = 0;
    for (const Prf* p : {&out.yes, &out.no}) {
        if (p->support == 0 && p->predicted == 0) continue;
        ++active;
        out.macro.precision += p->precision;
        out.macro.recall += p->recall;
        out.macro.f1 += p->f1;
    }
    if (active > 0) {
        out.macro.precision /= static_cast<double>(active);
        out.macro.recall /= static_cast<double>(active);
        out.macro.f1 /= static_cast<double>(active);
    }
    out.macro.support = out.yes.support + out.no.support;
    out.macro.predicted = out.yes.predicted + out.no.predicted;
    return out;
}

// --------------------------------------------------------------------------- reports

MetricScores score_all(std::span<const EvalPair> pairs) {
    MetricScores s;
    s.pairs = pairs.size();
    if (pairs.empty()) return s;
    s.bleu = bleu(pairs).score;
    s.meteor = meteor_lite(pairs);
    s.rouge_l = rouge_l(pairs);
    CiderResult c = cider_d(pairs);
    s.cider = c.score;
    s.warnings = std::move(c.warnings);
    if (std::any_of(pairs.begin(), pairs.end(), [](const EvalPair& p) { return p.labels.binary; })) {
        s.binary = binary_prf(pairs);
    }
    return s;
}

double metric_value(const MetricScores& s, const std::string& name) {
    if (name == "BLEU_1") return s.bleu[0];
    if (name == "BLEU_2") return s.bleu[1];
    if (name == "BLEU_3") return s.bleu[2];
    if (name == "BLEU_4") return s.bleu[3];
    if (name == "METEOR") return s.meteor;
    if (name == "ROUGE_L") return s.rouge_l;
    if (name == "CIDEr") return s.cider;
    throw UsageError("unknown metric '" + name + "'");
}

std::vector<std::string> all_subsets() {
    return {"overall", "binary", "non_binary", "coreference", "audio_related"};
}

bool in_subset(const EvalPair& pair, const std::string& subset) {
    if (subset == "overall") return true;
    const auto kind = corpus::parse_subset(subset);
    if (!kind) throw UsageError("unknown subset '" + subset + "'");
    return pair.labels.in(*kind);
}

EvalReport evaluate(const std::vector<Variant>& variants, const std::vector<std::string>& subsets) {
    EvalReport report;
    report.subsets = subsets;
    for (const auto& s : subsets) {
        if (s != "overall" && !corpus::parse_subset(s)) throw UsageError("unknown subset '" + s + "'");
    }
    for (const auto& v : variants) {
        VariantReport vr;
        vr.name = v.name;
        for (const auto& s : subsets) {
            std::vector<EvalPair> selected;
            for (const auto& p : v.pairs) {
                if (in_subset(p, s)) selected.push_back(p);
            }
            vr.subsets.push_back({s, score_all(selected)});
        }
        report.variants.push_back(std::move(vr));
    }
    return report;
}

namespace {

nlohmann::ordered_json prf_json(const Prf& p) {
    return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}, {"support", p.support},
            {"predicted", p.predicted}};
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

}  // namespace

std::string report_json(const EvalReport& report) {
    nlohmann::ordered_json root;
    root["subset_rule_version"] = std::string(corpus::kSubsetRuleVersion);
    root["subsets"] = report.subsets;
    root["variants"] = nlohmann::ordered_json::array();
    for (const auto& v : report.variants) {
        nlohmann::ordered_json jv;
        jv["name"] = v.name;
        nlohmann::ordered_json js = nlohmann::ordered_json::object();
        for (const auto& s : v.subsets) {
            nlohmann::ordered_json entry;
            entry["pairs"] = s.scores.pairs;
            for (const auto& m : metric_names()) {
                if (s.scores.pairs == 0) {
                    entry[m] = nullptr;
                } else {
                    entry[m] = metric_value(s.scores, m);
                }
            }
            if (s.scores.binary) {
                entry["binary"] = {{"count", s.scores.binary->count},
                                   {"yes", prf_json(s.scores.binary->yes)},
                                   {"no", prf_json(s.scores.binary->no)},
                                   {"macro", prf_json(s.scores.binary->macro)}};
            }
            if (!s.scores.warnings.empty()) entry["warnings"] = s.scores.warnings;
            js[s.subset] = std::move(entry);
        }
        jv["subsets"] = std::move(js);
        root["variants"].push_back(std::move(jv));
    }
    return root.dump(2) + "\n";
}

std::string report_text(const EvalReport& report) {
    std::vector<std::string> header{"variant"};
    for (const auto& m : metric_names()) header.push_back(m);
    header.insert(header.end(), {"bin_P", "bin_R", "bin_F1", "pairs"});
    std::ostringstream os;
    for (std::size_t si = 0; si < report.subsets.size(); ++si) {
        std::vector<std::vector<std::string>> rows{header};
        for (const auto& v : report.variants) {
            const MetricScores& s = v.subsets[si].scores;
            std::vector<std::string> row{v.name};
            for (const auto& m : metric_names()) row.push_back(s.pairs ? fixed(metric_value(s, m)) : "-");
            if (s.binary) {
                row.push_back(fixed(s.binary->macro.precision));
                row.push_back(fixed(s.binary->macro.recall));
                row.push_back(fixed(s.binary->macro.f1));
            } else {
                row.insert(row.end(), {"-", "-", "-"});
            }
            row.push_back(std::to_string(s.pairs));
            rows.push_back(std::move(row));
        }
        std::vector<std::size_t> width(header.size(), 0);
        for (const auto& r : rows) {
            for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
        }
        if (si > 0) os << '\n';
        os << "[" << report.subsets[si] << "]\n";
        for (const auto& r : rows) {
            for (std::size_t c = 0; c < r.size(); ++c) {
                if (c == 0) {
                    os << std::left << std::setw(static_cast<int>(width[c])) << r[c];
                } else {
                    os << "  " << std::right << std::setw(static_cast<int>(width[c])) << r[c];
                }
            }
            os << '\n';
        }
    }
    return os.str();
}

std::string report_csv(const EvalReport& report) {
    std::ostringstream os;
    os << "subset,variant,metric,value\n";
    for (std::size_t si = 0; si < report.subsets.size(); ++si) {
        for (const auto& v : report.variants) {
            const MetricScores& s = v.subsets[si].scores;
            const std::string prefix = report.subsets[si] + "," + v.name + ",";
            os << prefix << "pairs," << s.pairs << '\n';
            if (s.pairs == 0) continue;
            for (const auto& m : metric_names()) os << prefix << m << ',' << nn::format_double(metric_value(s, m)) << '\n';
            if (s.binary) {
                const std::pair<const char*, const Prf*> parts[] = {
                    {"yes", &s.binary->yes}, {"no", &s.binary->no}, {"macro", &s.binary->macro}};
                for (const auto& [name, prf] : parts) {
                    os << prefix << "binary_" << name << "_precision," << nn::format_double(prf->precision) << '\n';
                    os << prefix << "binary_" << name << "_recall," << nn::format_double(prf->recall) << '\n';
                    os << prefix << "binary_" << name << "_f1," << nn::format_double(prf->f1) << '\n';
                }
            }
        }
    }
    return os.str();
}

// --------------------------------------------------------------------------- hypothesis files

std::vector<Hypothesis> parse_hypotheses(std::string_view text, std::string_view source) {
    std::vector<Hypothesis> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        Hypothesis h;
        std::string turn;
        if (!(ls >> h.video_id >> turn)) {
            throw DataError(std::string(source) + ":" + std::to_string(line_no) +
                            ": expected 'video_id turn_index text'");
        }
        try {
            std::size_t pos = 0;
            h.turn_index = std::stoul(turn, &pos);
            if (pos != turn.size()) throw std::invalid_argument(turn);
        } catch (const std::exception&) {
            throw DataError(std::string(source) + ":" + std::to_string(line_no) + ": bad turn index '" + turn + "'");
        }
        std::string rest;
        std::getline(ls, rest);
        h.text = corpus::tokenize(rest);
        out.push_back(std::move(h));
    }
    return out;
}

std::vector<Hypothesis> load_hypotheses(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open hypothesis file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_hypotheses(ss.str(), path.string());
}

std::string format_hypotheses(const std::vector<Hypothesis>& hyps) {
    std::string out;
    for (const auto& h : hyps) out += h.video_id + " " + std::to_string(h.turn_index) + " " + corpus::join(h.text) + "\n";
    return out;
}

}  // namespace avsd::metrics
