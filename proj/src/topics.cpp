#include "avsd/topics.hpp"

#include "avsd/error.hpp"
#include "avsd/nn/param_store.hpp"
#include "avsd/rng.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace avsd::topics {

using corpus::Tokens;

std::string_view tag_name(SourceTag tag) {
    switch (tag) {
        case SourceTag::Q: return "Q";
        case SourceTag::A: return "A";
        case SourceTag::QA: return "QA";
        case SourceTag::C: return "C";
        case SourceTag::H: return "H";
        case SourceTag::HC: return "HC";
    }
    return "?";
}

std::optional<SourceTag> parse_tag(std::string_view name) {
    for (SourceTag t : kAllSources) {
        if (tag_name(t) == name) {
            return t;
        }
    }
    return std::nullopt;
}

std::vector<Tokens> documents_for(SourceTag tag, const std::vector<corpus::Dialog>& dialogs) {
    std::vector<Tokens> docs;
    auto append = [](Tokens& dst, const Tokens& src) { dst.insert(dst.end(), src.begin(), src.end()); };
    for (const auto& d : dialogs) {
        switch (tag) {
            case SourceTag::Q:
                for (const auto& t : d.turns) docs.push_back(t.question);
                break;
            case SourceTag::A:
                for (const auto& t : d.turns) docs.push_back(t.answer);
                break;
            case SourceTag::QA:
                for (const auto& t : d.turns) {
                    Tokens doc = t.question;
                    append(doc, t.answer);
                    docs.push_back(std::move(doc));
                }
                break;
            case SourceTag::C:
                docs.push_back(d.caption);
                break;
            case SourceTag::H:
            case SourceTag::HC: {
                Tokens doc;
                if (tag == SourceTag::HC) append(doc, d.caption);
                for (const auto& t : d.turns) {
                    append(doc, t.question);
                    append(doc, t.answer);
                }
                docs.push_back(std::move(doc));
                break;
            }
        }
    }
    return docs;
}

std::map<SourceTag, Tokens> example_documents(const corpus::Dialog& dialog, std::size_t turn) {
    if (turn >= dialog.turns.size()) throw UsageError("example_documents: turn index out of range");
    auto append = [](Tokens& dst, const Tokens& src) { dst.insert(dst.end(), src.begin(), src.end()); };
    std::map<SourceTag, Tokens> docs;
    docs[SourceTag::Q] = dialog.turns[turn].question;
    docs[SourceTag::C] = dialog.caption;
    Tokens& answers = docs[SourceTag::A];
    Tokens& previous = docs[SourceTag::QA];
    Tokens& history = docs[SourceTag::H];
    for (std::size_t i = 0; i < turn; ++i) {
        append(answers, dialog.turns[i].answer);
        append(history, dialog.turns[i].question);
        append(history, dialog.turns[i].answer);
    }
    if (turn > 0) {
        append(previous, dialog.turns[turn - 1].question);
        append(previous, dialog.turns[turn - 1].answer);
    }
    Tokens hc = dialog.caption;
    append(hc, history);
    docs[SourceTag::HC] = std::move(hc);
    return docs;
}

// --------------------------------------------------------------------------- seeds

SeedLoadResult parse_seed_text(std::string_view text, std::size_t num_topics) {
    SeedLoadResult r;
    std::set<std::string> claimed;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') {
            continue;
        }
        const auto colon = line.find(':');
        if (colon == std::string::npos) {
            throw DataError("seed file line " + std::to_string(line_no) + ": expected 'TopicName: word, ...'");
        }
        std::string name = line.substr(0, colon);
        name.erase(0, name.find_first_not_of(" \t"));
        name.erase(name.find_last_not_of(" \t") + 1);
        std::vector<std::string> words;
        std::istringstream list(line.substr(colon + 1));
        std::string item;
        while (std::getline(list, item, ',')) {
            for (const auto& w : corpus::tokenize(item)) {
                if (w == "..." || w == "." ) {
                    continue;
                }
                if (!claimed.insert(w).second) {
                    r.warnings.push_back("seed word '" + w + "' in topic '" + name +
                                         "' already assigned to an earlier topic; ignored");
                    continue;
                }
                words.push_back(w);
            }
        }
        r.seeds.topic_names.push_back(name);
        r.seeds.seeds.push_back(std::move(words));
    }
    if (r.seeds.seeds.empty()) {
        throw DataError("seed file has no topics");
    }
    r.seeds.num_topics = num_topics == 0 ? r.seeds.seeds.size() : num_topics;
    if (r.seeds.num_topics < r.seeds.seeds.size()) {
        throw UsageError("num_topics " + std::to_string(num_topics) + " is smaller than the " +
                         std::to_string(r.seeds.seeds.size()) + " seeded topics");
    }
    return r;
}

SeedLoadResult load_seed_file(const std::filesystem::path& path, std::size_t num_topics) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open seed file: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_seed_text(buf.str(), num_topics);
}

// --------------------------------------------------------------------------- training

std::vector<std::string> TopicModel::top_words(std::size_t topic, std::size_t n) const {
    std::vector<std::size_t> idx;
    for (std::size_t w = corpus::Vocabulary::reserved; w < vocab_size(); ++w) {
        idx.push_back(w);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return prob(topic, a) > prob(topic, b); });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(n, idx.size()); ++i) {
        out.push_back(vocab.token(static_cast<int>(idx[i])));
    }
    return out;
}

double LdaOptions::effective_alpha() const {
    return alpha > 0.0 ? alpha : 50.0 / static_cast<double>(num_topics);
}

namespace {

/// Count state of a collapsed Gibbs sampler with a per-(topic, word) prior.
class GibbsState {
public:
    GibbsState(std::vector<std::vector<int>> docs, std::size_t k, std::size_t v, double alpha,
               std::vector<double> beta_kw)
        : docs_(std::move(docs)), k_(k), v_(v), alpha_(alpha), beta_kw_(std::move(beta_kw)),
          beta_sum_(k, 0.0), n_dk_(docs_.size() * k, 0), n_kw_(k * v, 0), n_k_(k, 0), z_(docs_.size()),
          weights_(k) {
        for (std::size_t t = 0; t < k_; ++t) {
            for (std::size_t w = 0; w < v_; ++w) {
                beta_sum_[t] += beta_kw_[t * v_ + w];
            }
        }
    }

    const std::vector<std::vector<int>>& docs() const { return docs_; }

    void assign(std::size_t d, std::size_t i, std::size_t topic) {
        if (z_[d].size() <= i) z_[d].resize(docs_[d].size());
        z_[d][i] = static_cast<int>(topic);
        add(d, static_cast<std::size_t>(docs_[d][i]), topic, 1);
    }

    void sweep(Rng& rng) {
        for (std::size_t d = 0; d < docs_.size(); ++d) {
            for (std::size_t i = 0; i < docs_[d].size(); ++i) {
                const auto w = static_cast<std::size_t>(docs_[d][i]);
                const auto old = static_cast<std::size_t>(z_[d][i]);
                add(d, w, old, -1);
                for (std::size_t t = 0; t < k_; ++t) {
                    weights_[t] = (static_cast<double>(n_dk_[d * k_ + t]) + alpha_) *
                                  (static_cast<double>(n_kw_[t * v_ + w]) + beta_kw_[t * v_ + w]) /
                                  (static_cast<double>(n_k_[t]) + beta_sum_[t]);
                }
                const std::size_t fresh = rng.categorical(weights_);
                z_[d][i] = static_cast<int>(fresh);
                add(d, w, fresh, 1);
            }
        }
        assert(consistent());
    }

    bool consistent() const {
        long total = 0;
        for (auto c : n_kw_) total += c;
        long tokens = 0;
        for (const auto& d : docs_) tokens += static_cast<long>(d.size());
        return total == tokens && std::accumulate(n_k_.begin(), n_k_.end(), 0L) == tokens;
    }

    double log_likelihood() const {
        double ll = 0.0;
        for (std::size_t t = 0; t < k_; ++t) {
            ll += std::lgamma(beta_sum_[t]) - std::lgamma(static_cast<double>(n_k_[t]) + beta_sum_[t]);
            for (std::size_t w = 0; w < v_; ++w) {
                const double b = beta_kw_[t * v_ + w];
                if (b == 0.0) continue;
                ll += std::lgamma(static_cast<double>(n_kw_[t * v_ + w]) + b) - std::lgamma(b);
            }
        }
        const double ka = static_cast<double>(k_) * alpha_;
        for (std::size_t d = 0; d < docs_.size(); ++d) {
            ll += std::lgamma(ka) - std::lgamma(static_cast<double>(docs_[d].size()) + ka);
            for (std::size_t t = 0; t < k_; ++t) {
                ll += std::lgamma(static_cast<double>(n_dk_[d * k_ + t]) + alpha_) - std::lgamma(alpha_);
            }
        }
        return ll;
    }

    std::vector<double> phi() const {
        std::vector<double> out(k_ * v_);
        for (std::size_t t = 0; t < k_; ++t) {
            const double denom = static_cast<double>(n_k_[t]) + beta_sum_[t];
            for (std::size_t w = 0; w < v_; ++w) {
                out[t * v_ + w] = (static_cast<double>(n_kw_[t * v_ + w]) + beta_kw_[t * v_ + w]) / denom;
            }
        }
        return out;
    }

private:
    void add(std::size_t d, std::size_t w, std::size_t t, int delta) {
        n_dk_[d * k_ + t] += delta;
        n_kw_[t * v_ + w] += delta;
        n_k_[t] += delta;
    }

    std::vector<std::vector<int>> docs_;
    std::size_t k_;
    std::size_t v_;
    double alpha_;
    std::vector<double> beta_kw_;
    std::vector<double> beta_sum_;
    std::vector<int> n_dk_;
    std::vector<int> n_kw_;
    std::vector<long> n_k_;
    std::vector<std::vector<int>> z_;
    std::vector<double> weights_;
};

corpus::Vocabulary vocab_from_docs(const std::vector<Tokens>& docs) {
    std::map<std::string, std::size_t> counts;
    for (const auto& d : docs) {
        for (const auto& t : d) counts[t]++;
    }
    return corpus::Vocabulary::from_counts(counts, 1);
}

std::vector<std::vector<int>> encode_docs(const std::vector<Tokens>& docs, const corpus::Vocabulary& vocab) {
    std::vector<std::vector<int>> out;
    for (const auto& d : docs) {
        std::vector<int> ids;
        for (const auto& t : d) {
            const int id = vocab.index_of(t);
            if (id >= corpus::Vocabulary::reserved) ids.push_back(id);
        }
        if (!ids.empty()) out.push_back(std::move(ids));
    }
    if (out.empty()) {
        throw DataError("topic model training: every document is empty");
    }
    return out;
}

/// Symmetric topic-word prior; reserved tokens get none so phi rows cover
/// real words only.
std::vector<double> word_prior(std::size_t k, std::size_t v, double beta) {
    std::vector<double> prior(k * v, beta);
    for (std::size_t t = 0; t < k; ++t) {
        for (std::size_t w = 0; w < static_cast<std::size_t>(corpus::Vocabulary::reserved); ++w) prior[t * v + w] = 0.0;
    }
    return prior;
}

void validate_options(const LdaOptions& o) {
    if (o.num_topics < 2) throw UsageError("topic model needs K >= 2, got " + std::to_string(o.num_topics));
    if (o.iterations < 1) throw UsageError("topic model needs at least one iteration");
    if (!(o.beta > 0.0)) throw UsageError("beta must be positive");
}

TopicModel run_sampler(GibbsState& state, const LdaOptions& o, corpus::Vocabulary vocab, Rng& rng,
                       TrainTrace* trace) {
    for (std::size_t it = 0; it < o.iterations; ++it) {
        state.sweep(rng);
        if (trace != nullptr) {
            trace->log_likelihood.push_back(state.log_likelihood());
            if (!state.consistent()) ++trace->inconsistent_sweeps;
        }
    }
    TopicModel m;
    m.num_topics = o.num_topics;
    m.alpha = o.effective_alpha();
    m.beta = o.beta;
    m.source = o.source;
    m.vocab = std::move(vocab);
    m.phi = state.phi();
    return m;
}

}  // namespace

TopicModel train_lda(const std::vector<Tokens>& docs, const LdaOptions& options, TrainTrace* trace) {
    validate_options(options);
    corpus::Vocabulary vocab = vocab_from_docs(docs);
    auto encoded = encode_docs(docs, vocab);
    const std::size_t k = options.num_topics;
    const std::size_t v = vocab.size();
    GibbsState state(std::move(encoded), k, v, options.effective_alpha(), word_prior(k, v, options.beta));
    Rng rng(options.rng_seed);
    for (std::size_t d = 0; d < state.docs().size(); ++d) {
        for (std::size_t i = 0; i < state.docs()[d].size(); ++i) {
            state.assign(d, i, rng.index(k));
        }
    }
    return run_sampler(state, options, std::move(vocab), rng, trace);
}

GuidedResult train_guided_lda(const std::vector<Tokens>& docs, const SeedSet& seeds, const LdaOptions& options,
                              TrainTrace* trace) {
    LdaOptions o = options;
    o.num_topics = seeds.num_topics;
    validate_options(o);
    if (!(seeds.seed_confidence > 0.0 && seeds.seed_confidence <= 1.0)) {
        throw UsageError("seed_confidence must lie in (0, 1]");
    }
    if (seeds.seeded_topics() > o.num_topics) {
        throw UsageError("more seeded topics than num_topics");
    }

    GuidedResult result;
    corpus::Vocabulary vocab = vocab_from_docs(docs);
    const std::size_t k = o.num_topics;
    const std::size_t v = vocab.size();

    std::vector<int> seed_topic(v, -1);
    std::vector<double> beta_kw = word_prior(k, v, o.beta);
    for (std::size_t t = 0; t < seeds.seeded_topics(); ++t) {
        std::size_t usable = 0;
        for (const auto& w : seeds.seeds[t]) {
            if (!vocab.contains(w)) {
                result.warnings.push_back("seed word '" + w + "' (topic " + std::to_string(t) +
                                          ") not in vocabulary");
                continue;
            }
            const auto id = static_cast<std::size_t>(vocab.index_of(w));
            if (seed_topic[id] >= 0) {
                result.warnings.push_back("seed word '" + w + "' already seeds topic " +
                                          std::to_string(seed_topic[id]));
                continue;
            }
            seed_topic[id] = static_cast<int>(t);
            beta_kw[t * v + id] = o.beta * seeds.beta_boost;
            ++usable;
        }
        if (usable == 0) {
            const std::string name = t < seeds.topic_names.size() ? seeds.topic_names[t] : std::to_string(t);
            throw DataError("seeded topic '" + name + "' has no seed word in the vocabulary");
        }
    }

    auto encoded = encode_docs(docs, vocab);
    GibbsState state(std::move(encoded), k, v, o.effective_alpha(), std::move(beta_kw));
    Rng rng(o.rng_seed);
    for (std::size_t d = 0; d < state.docs().size(); ++d) {
        for (std::size_t i = 0; i < state.docs()[d].size(); ++i) {
            const int st = seed_topic[static_cast<std::size_t>(state.docs()[d][i])];
            if (st >= 0 && rng.uniform() < seeds.seed_confidence) {
                state.assign(d, i, static_cast<std::size_t>(st));
            } else {
                state.assign(d, i, rng.index(k));
            }
        }
    }
    result.model = run_sampler(state, o, std::move(vocab), rng, trace);
    return result;
}

// --------------------------------------------------------------------------- inference

DocumentTopics infer_topics(const TopicModel& model, const Tokens& doc, std::size_t iterations,
                            std::uint64_t rng_seed) {
    const std::size_t k = model.num_topics;
    DocumentTopics out{std::vector<double>(k, 1.0 / static_cast<double>(k))};
    std::vector<std::size_t> words;
    for (const auto& t : doc) {
        const int id = model.vocab.index_of(t);
        if (id >= corpus::Vocabulary::reserved) words.push_back(static_cast<std::size_t>(id));
    }
    if (words.empty()) {
        return out;
    }

    Rng rng(rng_seed);
    std::vector<int> z(words.size());
    std::vector<double> n_k(k, 0.0);
    for (std::size_t i = 0; i < words.size(); ++i) {
        z[i] = static_cast<int>(rng.index(k));
        n_k[static_cast<std::size_t>(z[i])] += 1.0;
    }
    std::vector<double> weights(k);
    for (std::size_t it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < words.size(); ++i) {
            n_k[static_cast<std::size_t>(z[i])] -= 1.0;
            for (std::size_t t = 0; t < k; ++t) {
                weights[t] = (n_k[t] + model.alpha) * model.prob(t, words[i]);
            }
            z[i] = static_cast<int>(rng.categorical(weights));
            n_k[static_cast<std::size_t>(z[i])] += 1.0;
        }
    }
    const double denom = static_cast<double>(words.size()) + static_cast<double>(k) * model.alpha;
    for (std::size_t t = 0; t < k; ++t) {
        out.theta[t] = (n_k[t] + model.alpha) / denom;
    }
    return out;
}

std::vector<double> topic_feature_vector(const std::vector<const TopicModel*>& models,
                                         const std::map<SourceTag, Tokens>& doc_by_source, std::size_t iterations,
                                         std::uint64_t rng_seed) {
    std::vector<const TopicModel*> ordered = models;
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const TopicModel* a, const TopicModel* b) { return a->source < b->source; });
    for (std::size_t i = 1; i < ordered.size(); ++i) {
        if (ordered[i]->source == ordered[i - 1]->source) {
            throw UsageError("duplicate topic model source tag " + std::string(tag_name(ordered[i]->source)));
        }
    }
    std::vector<double> out;
    for (const TopicModel* m : ordered) {
        const auto it = doc_by_source.find(m->source);
        if (it == doc_by_source.end()) {
            throw UsageError("no document supplied for topic source " + std::string(tag_name(m->source)));
        }
        const auto theta = infer_topics(*m, it->second, iterations, rng_seed).theta;
        out.insert(out.end(), theta.begin(), theta.end());
    }
    return out;
}

// --------------------------------------------------------------------------- persistence

void save_model(const TopicModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write topic model: " + path.string());
    }
    const std::size_t v = model.vocab_size();
    out << model.num_topics << ' ' << v << ' ' << nn::format_double(model.alpha) << ' '
        << nn::format_double(model.beta) << '\n';
    for (std::size_t t = 0; t < model.num_topics; ++t) {
        for (std::size_t w = 0; w < v; ++w) {
            if (w != 0) out << ' ';
            out << nn::format_double(model.prob(t, w));
        }
        out << '\n';
    }
    out << "source " << tag_name(model.source) << '\n' << "vocab\n";
    for (const auto& tok : model.vocab.tokens()) {
        out << tok << '\n';
    }
}

TopicModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open topic model: " + path.string());
    }
    TopicModel m;
    std::size_t v = 0;
    std::string alpha;
    std::string beta;
    if (!(in >> m.num_topics >> v >> alpha >> beta)) {
        throw DataError(path.string() + ": malformed header, expected 'K V alpha beta'");
    }
    m.alpha = nn::parse_double(alpha);
    m.beta = nn::parse_double(beta);
    if (m.num_topics < 2 || v < 2) {
        throw DataError(path.string() + ": K and V must both be >= 2");
    }
    m.phi.resize(m.num_topics * v);
    std::string tok;
    for (std::size_t i = 0; i < m.phi.size(); ++i) {
        if (!(in >> tok)) {
            throw DataError(path.string() + ": truncated probability table");
        }
        m.phi[i] = nn::parse_double(tok);
    }
    std::string key;
    std::string tag;
    if (!(in >> key >> tag) || key != "source" || !parse_tag(tag)) {
        throw DataError(path.string() + ": missing 'source <tag>' line");
    }
    m.source = *parse_tag(tag);
    if (!(in >> key) || key != "vocab") {
        throw DataError(path.string() + ": missing vocab section");
    }
    std::vector<std::string> tokens;
    while (in >> tok) tokens.push_back(tok);
    if (tokens.size() != v) {
        throw DataError(path.string() + ": vocab has " + std::to_string(tokens.size()) + " entries, header says " +
                        std::to_string(v));
    }
    m.vocab = corpus::Vocabulary::from_tokens(std::move(tokens));
    return m;
}

}  // namespace avsd::topics
