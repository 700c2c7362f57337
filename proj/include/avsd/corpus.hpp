#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace avsd::corpus {

using Tokens = std::vector<std::string>;

struct Turn {
    Tokens question;
    Tokens answer;
};

struct Dialog {
    std::string video_id;
    Tokens caption;
    std::vector<Turn> turns;
};

/// Word count covers questions, answers and captions.
struct DatasetStats {
    std::size_t num_dialogs = 0;
    std::size_t num_turns = 0;
    std::size_t num_words = 0;

    bool operator==(const DatasetStats&) const = default;
};

struct Dataset {
    std::vector<Dialog> dialogs;
    DatasetStats stats;
};

enum class Split { train, val, test };

std::optional<Split> parse_split(std::string_view name);

/// Lowercases, splits on whitespace and detaches trailing . , ? ! marks.
Tokens tokenize(std::string_view text);

/// Space-joined tokens.
std::string join(const Tokens& tokens);

DatasetStats compute_stats(const std::vector<Dialog>& dialogs);

/// Parses the dialog JSON file. Training dialogs must have at least one turn
/// and non-empty questions/answers; val/test dialogs may carry empty answers
/// (hidden references).
Dataset load_dataset(const std::filesystem::path& path, Split split = Split::train);

/// Parses dialog JSON held in memory; `source` names it in error messages.
Dataset parse_dataset(std::string_view json_text, Split split, std::string_view source = "<memory>");

// ---------------------------------------------------------------------------

class Vocabulary {
public:
    static constexpr int pad = 0;
    static constexpr int unk = 1;
    static constexpr int bos = 2;
    static constexpr int eos = 3;
    static constexpr int reserved = 4;

    Vocabulary();

    /// Builds from token counts: frequency descending, ties lexicographic;
    /// tokens below min_count map to UNK.
    static Vocabulary from_counts(const std::map<std::string, std::size_t>& counts, std::size_t min_count);

    /// Restores an exact index order (reserved tokens first).
    static Vocabulary from_tokens(std::vector<std::string> tokens);

    std::size_t size() const { return tokens_.size(); }
    int index_of(const std::string& token) const;  // UNK when absent
    bool contains(const std::string& token) const { return index_.count(token) != 0; }
    const std::string& token(int index) const;
    const std::vector<std::string>& tokens() const { return tokens_; }
    std::size_t min_count() const { return min_count_; }

    std::vector<int> encode(const Tokens& tokens) const;
    Tokens decode(const std::vector<int>& ids) const;

private:
    void push(const std::string& token);

    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
    std::size_t min_count_ = 1;
};

/// Counts every caption, question and answer token.
Vocabulary build_vocab(const std::vector<Dialog>& dialogs, std::size_t min_count);

// ---------------------------------------------------------------------------

inline constexpr std::string_view kSubsetRuleVersion = "avsd-subsets-v1";

enum class Polarity { none, yes, no };

enum class SubsetKind { binary, non_binary, coreference, audio_related };

std::string_view subset_name(SubsetKind kind);
std::optional<SubsetKind> parse_subset(std::string_view name);

struct TurnLabels {
    bool binary = false;  // non_binary is !binary
    Polarity polarity = Polarity::none;
    bool coreference = false;
    bool audio_related = false;
    std::string rule_version{kSubsetRuleVersion};

    bool in(SubsetKind kind) const;
};

/// Polarity of the first non-punctuation token.
Polarity answer_polarity(const Tokens& answer);
bool has_coreference(const Tokens& question);
bool is_audio_related(const Tokens& question);

TurnLabels label_turn(const Turn& turn);
std::vector<TurnLabels> label_subsets(const std::vector<Turn>& turns);

const std::vector<std::string>& pronoun_list();
const std::vector<std::string>& audio_keyword_list();

struct SubsetCounts {
    std::size_t binary = 0;
    std::size_t non_binary = 0;
    std::size_t coreference = 0;
    std::size_t audio_related = 0;
};

SubsetCounts count_subsets(const std::vector<Dialog>& dialogs);

}  // namespace avsd::corpus
