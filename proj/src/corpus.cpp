#include "avsd/corpus.hpp"

#include "avsd/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace avsd::corpus {

namespace {

bool is_terminal_punct(char c) {
    return c == '.' || c == ',' || c == '?' || c == '!';
}

bool is_punct_token(const std::string& t) {
    return t.size() == 1 && is_terminal_punct(t[0]);
}

const std::set<std::string>& pronoun_set() {
    static const std::set<std::string> s(pronoun_list().begin(), pronoun_list().end());
    return s;
}

const std::set<std::string>& audio_set() {
    static const std::set<std::string> s(audio_keyword_list().begin(), audio_keyword_list().end());
    return s;
}

std::string record_error(std::string_view source, std::size_t index, std::string_view detail) {
    std::ostringstream os;
    os << source << ": dialog record " << index << ": " << detail;
    return os.str();
}

const nlohmann::json& require_string(const nlohmann::json& obj, const char* field, std::string_view source,
                                     std::size_t index, std::string_view where = {}) {
    const auto it = obj.find(field);
    if (it == obj.end()) {
        throw DataError(record_error(source, index, std::string(where) + "missing field '" + field + "'"));
    }
    if (!it->is_string()) {
        throw DataError(record_error(source, index, std::string(where) + "field '" + field + "' is not a string"));
    }
    return *it;
}

}  // namespace

std::optional<Split> parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    return std::nullopt;
}

Tokens tokenize(std::string_view text) {
    Tokens out;
    std::string current;
    auto flush = [&] {
        if (current.empty()) {
            return;
        }
        std::vector<std::string> trailing;
        while (current.size() > 1 && is_terminal_punct(current.back())) {
            trailing.emplace_back(1, current.back());
            current.pop_back();
        }
        out.push_back(current);
        out.insert(out.end(), trailing.rbegin(), trailing.rend());
        current.clear();
    };
    for (char ch : text) {
        const auto uc = static_cast<unsigned char>(ch);
        if (std::isspace(uc) != 0) {
            flush();
        } else {
            current.push_back(static_cast<char>(std::tolower(uc)));
        }
    }
    flush();
    return out;
}

std::string join(const Tokens& tokens) {
    std::string s;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i != 0) {
            s.push_back(' ');
        }
        s += tokens[i];
    }
    return s;
}

DatasetStats compute_stats(const std::vector<Dialog>& dialogs) {
    DatasetStats s;
    s.num_dialogs = dialogs.size();
    for (const Dialog& d : dialogs) {
        s.num_turns += d.turns.size();
        s.num_words += d.caption.size();
        for (const Turn& t : d.turns) {
            s.num_words += t.question.size() + t.answer.size();
        }
    }
    return s;
}

Dataset parse_dataset(std::string_view json_text, Split split, std::string_view source) {
    if (json_text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
        throw DataError(std::string(source) + ": empty file");
    }
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string(source) + ": invalid JSON: " + e.what());
    }
    if (!root.is_object() || !root.contains("dialogs") || !root["dialogs"].is_array()) {
        throw DataError(std::string(source) + ": missing top-level array 'dialogs'");
    }
    const auto& records = root["dialogs"];
    if (records.empty()) {
        throw DataError(std::string(source) + ": empty dataset");
    }

    Dataset ds;
    std::set<std::string> seen_ids;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        if (!rec.is_object()) {
            throw DataError(record_error(source, i, "not an object"));
        }
        Dialog d;
        d.video_id = require_string(rec, "image_id", source, i).get<std::string>();
        d.caption = tokenize(require_string(rec, "caption", source, i).get<std::string>());
        const auto it = rec.find("dialog");
        if (it == rec.end()) {
            throw DataError(record_error(source, i, "missing field 'dialog'"));
        }
        if (!it->is_array()) {
            throw DataError(record_error(source, i, "field 'dialog' is not an array"));
        }
        for (std::size_t t = 0; t < it->size(); ++t) {
            const auto& turn = (*it)[t];
            const std::string where = "turn " + std::to_string(t) + ": ";
            if (!turn.is_object()) {
                throw DataError(record_error(source, i, where + "not an object"));
            }
            Turn tr;
            tr.question = tokenize(require_string(turn, "question", source, i, where).get<std::string>());
            tr.answer = tokenize(require_string(turn, "answer", source, i, where).get<std::string>());
            if (tr.question.empty()) {
                throw DataError(record_error(source, i, where + "empty question"));
            }
            if (split == Split::train && tr.answer.empty()) {
                throw DataError(record_error(source, i, where + "empty answer"));
            }
            d.turns.push_back(std::move(tr));
        }
        if (split == Split::train && d.turns.empty()) {
            throw DataError(record_error(source, i, "dialog has no turns"));
        }
        if (!seen_ids.insert(d.video_id).second) {
            throw DataError(record_error(source, i, "duplicate image_id '" + d.video_id + "'"));
        }
        ds.dialogs.push_back(std::move(d));
    }
    ds.stats = compute_stats(ds.dialogs);
    return ds;
}

Dataset load_dataset(const std::filesystem::path& path, Split split) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open dataset file: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str(), split, path.string());
}

// --------------------------------------------------------------------------- vocabulary

Vocabulary::Vocabulary() {
    for (const char* t : {"<pad>", "<unk>", "<bos>", "<eos>"}) {
        push(t);
    }
}

void Vocabulary::push(const std::string& token) {
    index_.emplace(token, static_cast<int>(tokens_.size()));
    tokens_.push_back(token);
}

Vocabulary Vocabulary::from_counts(const std::map<std::string, std::size_t>& counts, std::size_t min_count) {
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [tok, n] : counts) {
        if (n >= min_count) {
            kept.emplace_back(tok, n);
        }
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    Vocabulary v;
    v.min_count_ = min_count;
    for (const auto& [tok, n] : kept) {
        if (!v.contains(tok)) {
            v.push(tok);
        }
    }
    return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    Vocabulary v;
    if (tokens.size() < reserved) {
        throw DataError("vocabulary shorter than reserved block");
    }
    for (int i = 0; i < reserved; ++i) {
        if (tokens[i] != v.tokens_[i]) {
            throw DataError("vocabulary reserved token mismatch at index " + std::to_string(i));
        }
    }
    for (std::size_t i = reserved; i < tokens.size(); ++i) {
        if (v.contains(tokens[i])) {
            throw DataError("duplicate vocabulary token '" + tokens[i] + "'");
        }
        v.push(tokens[i]);
    }
    return v;
}

int Vocabulary::index_of(const std::string& token) const {
    const auto it = index_.find(token);
    return it == index_.end() ? unk : it->second;
}

const std::string& Vocabulary::token(int index) const {
    if (index < 0 || static_cast<std::size_t>(index) >= tokens_.size()) {
        throw UsageError("token index out of range: " + std::to_string(index));
    }
    return tokens_[static_cast<std::size_t>(index)];
}

std::vector<int> Vocabulary::encode(const Tokens& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) {
        ids.push_back(index_of(t));
    }
    return ids;
}

Tokens Vocabulary::decode(const std::vector<int>& ids) const {
    Tokens out;
    out.reserve(ids.size());
    for (int id : ids) {
        out.push_back(token(id));
    }
    return out;
}

Vocabulary build_vocab(const std::vector<Dialog>& dialogs, std::size_t min_count) {
    std::map<std::string, std::size_t> counts;
    for (const Dialog& d : dialogs) {
        for (const auto& t : d.caption) counts[t]++;
        for (const Turn& turn : d.turns) {
            for (const auto& t : turn.question) counts[t]++;
            for (const auto& t : turn.answer) counts[t]++;
        }
    }
    return Vocabulary::from_counts(counts, min_count);
}

// --------------------------------------------------------------------------- subsets

const std::vector<std::string>& pronoun_list() {
    static const std::vector<std::string> list = {"he",     "she", "it",     "they",  "him",   "her",
                                                  "them",   "his", "hers",   "its",   "their", "theirs",
                                                  "this",   "that", "these", "those", "one",   "ones"};
    return list;
}

const std::vector<std::string>& audio_keyword_list() {
    static const std::vector<std::string> list = {"sound", "sounds", "hear",  "heard", "audio",    "noise",
                                                  "noises", "music", "talking", "talk", "say",     "says",
                                                  "said",  "speak",  "speaking", "sing", "singing", "loud"};
    return list;
}

std::string_view subset_name(SubsetKind kind) {
    switch (kind) {
        case SubsetKind::binary: return "binary";
        case SubsetKind::non_binary: return "non_binary";
        case SubsetKind::coreference: return "coreference";
        case SubsetKind::audio_related: return "audio_related";
    }
    return "unknown";
}

std::optional<SubsetKind> parse_subset(std::string_view name) {
    for (auto k : {SubsetKind::binary, SubsetKind::non_binary, SubsetKind::coreference, SubsetKind::audio_related}) {
        if (subset_name(k) == name) {
            return k;
        }
    }
    return std::nullopt;
}

bool TurnLabels::in(SubsetKind kind) const {
    switch (kind) {
        case SubsetKind::binary: return binary;
        case SubsetKind::non_binary: return !binary;
        case SubsetKind::coreference: return coreference;
        case SubsetKind::audio_related: return audio_related;
    }
    return false;
}

Polarity answer_polarity(const Tokens& answer) {
    for (const auto& t : answer) {
        if (is_punct_token(t)) {
            continue;
        }
        if (t == "yes" || t == "yeah" || t == "yep") return Polarity::yes;
        if (t == "no" || t == "nope") return Polarity::no;
        return Polarity::none;
    }
    return Polarity::none;
}

bool has_coreference(const Tokens& question) {
    return std::any_of(question.begin(), question.end(), [](const auto& t) { return pronoun_set().count(t) != 0; });
}

bool is_audio_related(const Tokens& question) {
    return std::any_of(question.begin(), question.end(), [](const auto& t) { return audio_set().count(t) != 0; });
}

TurnLabels label_turn(const Turn& turn) {
    TurnLabels l;
    l.polarity = answer_polarity(turn.answer);
    l.binary = l.polarity != Polarity::none;
    l.coreference = has_coreference(turn.question);
    l.audio_related = is_audio_related(turn.question);
    return l;
}

std::vector<TurnLabels> label_subsets(const std::vector<Turn>& turns) {
    std::vector<TurnLabels> out;
    out.reserve(turns.size());
    for (const Turn& t : turns) {
        out.push_back(label_turn(t));
    }
    return out;
}

SubsetCounts count_subsets(const std::vector<Dialog>& dialogs) {
    SubsetCounts c;
    for (const Dialog& d : dialogs) {
        for (const Turn& t : d.turns) {
            const TurnLabels l = label_turn(t);
            (l.binary ? c.binary : c.non_binary)++;
            c.coreference += l.coreference ? 1 : 0;
            c.audio_related += l.audio_related ? 1 : 0;
        }
    }
    return c;
}

}  // namespace avsd::corpus
