#pragma once

#include "avsd/corpus.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace avsd::metrics {

using corpus::Tokens;

struct EvalPair {
    Tokens hypothesis;
    std::vector<Tokens> references;
    corpus::TurnLabels labels;
};

// --------------------------------------------------------------------------- BLEU

struct BleuResult {
    std::array<double, 4> score{};    // cumulative BLEU_1..BLEU_4
    std::array<double, 4> precision{};  // modified n-gram precision p_n
    std::array<std::size_t, 4> matches{};
    std::array<std::size_t, 4> totals{};
    std::size_t hypothesis_length = 0;
    std::size_t reference_length = 0;  // closest reference length, summed
    double brevity_penalty = 0.0;
};

/// Corpus BLEU, unsmoothed. Reference length per pair is the one closest to
/// the hypothesis length (shorter wins ties). Scores for n > max_n are 0.
BleuResult bleu(std::span<const EvalPair> pairs, int max_n = 4);

/// Pair-level BLEU with add-one smoothing of p_n for n >= 2.
std::array<double, 4> sentence_bleu(const Tokens& hypothesis, const std::vector<Tokens>& references);

// --------------------------------------------------------------------------- ROUGE-L

inline constexpr double kRougeBeta = 1.2;

std::size_t lcs_length(const Tokens& a, const Tokens& b);
/// LCS F-measure with recall weight beta, best reference.
double rouge_l_pair(const Tokens& hypothesis, const std::vector<Tokens>& references);
/// Mean of rouge_l_pair.
double rouge_l(std::span<const EvalPair> pairs);

// --------------------------------------------------------------------------- CIDEr-D

inline constexpr double kCiderSigma = 6.0;

struct CiderResult {
    double score = 0.0;
    std::vector<double> per_pair;
    std::vector<std::string> warnings;
};

/// CIDEr-D: tf-idf n-gram vectors (n = 1..4), document frequencies over the
/// pairs' reference sets, clipped hypothesis weights, Gaussian length
/// penalty, mean over n and references, scaled by 10.
CiderResult cider_d(std::span<const EvalPair> pairs);

// --------------------------------------------------------------------------- METEOR-lite

/// Suffix-stripping stemmer used by the second alignment stage.
std::string stem(const std::string& word);

struct MeteorDetail {
    std::size_t matches = 0;
    std::size_t chunks = 0;
    double precision = 0.0;
    double recall = 0.0;
    double fmean = 0.0;
    double penalty = 0.0;
    double score = 0.0;
};

/// Exact then stem unigram alignment; among maximal alignments the one with
/// fewest chunks is scored.
MeteorDetail meteor_align(const Tokens& hypothesis, const Tokens& reference);
double meteor_pair(const Tokens& hypothesis, const std::vector<Tokens>& references);
double meteor_lite(std::span<const EvalPair> pairs);

// --------------------------------------------------------------------------- binary answers

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;    // references with this polarity
    std::size_t predicted = 0;  // hypotheses with this polarity
};

struct BinaryPrf {
    Prf yes;
    Prf no;
    Prf macro;  // mean over polarities that occur in references or hypotheses
    std::size_t count = 0;
};

/// Hypothesis polarity comes from its leading token; a hypothesis without
/// one is wrong for both polarities. Pairs whose reference is not binary
/// are ignored; UsageError when none remain.
BinaryPrf binary_prf(std::span<const EvalPair> pairs);

// --------------------------------------------------------------------------- reports

struct MetricScores {
    std::size_t pairs = 0;
    std::array<double, 4> bleu{};
    double meteor = 0.0;
    double rouge_l = 0.0;
    double cider = 0.0;
    std::optional<BinaryPrf> binary;
    std::vector<std::string> warnings;
};

MetricScores score_all(std::span<const EvalPair> pairs);

inline const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{"BLEU_1", "BLEU_2", "BLEU_3", "BLEU_4", "METEOR", "ROUGE_L", "CIDEr"};
    return names;
}

double metric_value(const MetricScores& s, const std::string& name);

/// "overall" or a corpus::SubsetKind name.
bool in_subset(const EvalPair& pair, const std::string& subset);
std::vector<std::string> all_subsets();

struct SubsetScores {
    std::string subset;
    MetricScores scores;
};

struct VariantReport {
    std::string name;
    std::vector<SubsetScores> subsets;
};

struct EvalReport {
    std::vector<std::string> subsets;
    std::vector<VariantReport> variants;
};

struct Variant {
    std::string name;
    std::vector<EvalPair> pairs;
};

EvalReport evaluate(const std::vector<Variant>& variants, const std::vector<std::string>& subsets);

std::string report_json(const EvalReport& report);
/// Aligned columns, one section per subset, one row per variant.
std::string report_text(const EvalReport& report);
/// subset,variant,metric,value
std::string report_csv(const EvalReport& report);

// --------------------------------------------------------------------------- hypothesis files

struct Hypothesis {
    std::string video_id;
    std::size_t turn_index = 0;
    Tokens text;
};

/// One "video_id turn_index text..." per line.
std::vector<Hypothesis> parse_hypotheses(std::string_view text, std::string_view source = "<memory>");
std::vector<Hypothesis> load_hypotheses(const std::filesystem::path& path);
std::string format_hypotheses(const std::vector<Hypothesis>& hyps);

}  // namespace avsd::metrics
