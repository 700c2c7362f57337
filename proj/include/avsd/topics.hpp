#pragma once

#include "avsd/corpus.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace avsd::topics {

/// Text stream a topic model is trained on. Declaration order is the fixed
/// concatenation order of topic feature vectors.
enum class SourceTag { Q, A, QA, C, H, HC };

inline constexpr SourceTag kAllSources[] = {SourceTag::Q, SourceTag::A, SourceTag::QA,
                                            SourceTag::C, SourceTag::H, SourceTag::HC};

std::string_view tag_name(SourceTag tag);
std::optional<SourceTag> parse_tag(std::string_view name);

/// Training documents of one source over a dataset:
///   Q  one per question        A  one per answer
///   QA one per question+answer C  one per caption
///   H  one per dialog (all turns)  HC  caption + all turns
std::vector<corpus::Tokens> documents_for(SourceTag tag, const std::vector<corpus::Dialog>& dialogs);

/// Documents describing the context of turn `turn` of a dialog, one per
/// source. Only material visible before the answer is used:
///   Q  the current question     A  answers of earlier turns
///   QA the previous turn        C  the caption
///   H  all earlier turns        HC caption + earlier turns
std::map<SourceTag, corpus::Tokens> example_documents(const corpus::Dialog& dialog, std::size_t turn);

struct SeedSet {
    std::size_t num_topics = 0;
    std::vector<std::string> topic_names;          // one per seeded topic
    std::vector<std::vector<std::string>> seeds;   // parallel to topic_names
    double seed_confidence = 0.85;
    double beta_boost = 100.0;

    std::size_t seeded_topics() const { return seeds.size(); }
};

struct SeedLoadResult {
    SeedSet seeds;
    /// Seed words dropped because an earlier topic already claimed them.
    std::vector<std::string> warnings;
};

/// Parses "TopicName: w1, w2, ..." lines. A word listed under several topics
/// stays with the first one; later duplicates are reported in `warnings`.
/// num_topics = 0 means one topic per line.
SeedLoadResult parse_seed_text(std::string_view text, std::size_t num_topics = 0);
SeedLoadResult load_seed_file(const std::filesystem::path& path, std::size_t num_topics = 0);

struct TopicModel {
    std::size_t num_topics = 0;
    double alpha = 0.0;
    double beta = 0.0;
    SourceTag source = SourceTag::Q;
    corpus::Vocabulary vocab;
    std::vector<double> phi;  // num_topics x vocab.size(), row-major

    std::size_t vocab_size() const { return vocab.size(); }
    double prob(std::size_t topic, std::size_t word) const { return phi[topic * vocab_size() + word]; }
    /// Top-n non-reserved words of a topic, most probable first.
    std::vector<std::string> top_words(std::size_t topic, std::size_t n) const;
};

struct LdaOptions {
    std::size_t num_topics = 9;
    double alpha = 0.0;  // <= 0 selects 50 / K
    double beta = 0.01;
    std::size_t iterations = 500;
    std::uint64_t rng_seed = 1;
    SourceTag source = SourceTag::Q;

    double effective_alpha() const;
};

/// Per-sweep diagnostics.
struct TrainTrace {
    std::vector<double> log_likelihood;  // log p(w, z) after each sweep
    /// Sweeps after which count totals disagreed with the token count.
    std::size_t inconsistent_sweeps = 0;
};

/// Collapsed Gibbs LDA. Vocabulary is built from `docs`.
TopicModel train_lda(const std::vector<corpus::Tokens>& docs, const LdaOptions& options,
                     TrainTrace* trace = nullptr);

struct GuidedResult {
    TopicModel model;
    std::vector<std::string> warnings;  // seed words missing from the vocabulary
};

/// Seeded LDA: seed occurrences start in their topic with probability
/// seed_confidence, and the (topic, seed word) prior is multiplied by
/// beta_boost. options.num_topics is taken from the seed set.
GuidedResult train_guided_lda(const std::vector<corpus::Tokens>& docs, const SeedSet& seeds,
                              const LdaOptions& options, TrainTrace* trace = nullptr);

struct DocumentTopics {
    std::vector<double> theta;
};

/// Fold-in Gibbs with phi fixed. Documents without in-vocabulary tokens get
/// the uniform distribution.
DocumentTopics infer_topics(const TopicModel& model, const corpus::Tokens& doc, std::size_t iterations = 50,
                            std::uint64_t rng_seed = 1);

/// Concatenated theta vectors in Q, A, QA, C, H, HC order.
std::vector<double> topic_feature_vector(const std::vector<const TopicModel*>& models,
                                         const std::map<SourceTag, corpus::Tokens>& doc_by_source,
                                         std::size_t iterations = 50, std::uint64_t rng_seed = 1);

// Model file:
//   K V alpha beta
//   K lines of V probabilities
//   source <tag>
//   vocab
//   V lines, one token each
void save_model(const TopicModel& model, const std::filesystem::path& path);
TopicModel load_model(const std::filesystem::path& path);

}  // namespace avsd::topics
