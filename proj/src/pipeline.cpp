#include "avsd/pipeline.hpp"

#include "avsd/audio.hpp"
#include "avsd/error.hpp"
#include "avsd/metrics.hpp"
#include "avsd/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace avsd::pipeline {

namespace {

/// Typed access to an option bag; every key read is remembered so leftovers
/// can be rejected.
class Options {
public:
    Options(const KeyValues& kv, std::string command) : kv_(kv), command_(std::move(command)) {}

    bool has(const std::string& key) {
        used_.insert(key);
        const auto it = kv_.find(key);
        return it != kv_.end() && !it->second.empty();
    }

    std::string str(const std::string& key, const std::string& fallback = "") {
        return has(key) ? kv_.at(key) : fallback;
    }

    std::string required(const std::string& key) {
        if (!has(key)) throw UsageError(command_ + ": missing required option '" + key + "'");
        return kv_.at(key);
    }

    std::size_t count(const std::string& key, std::size_t fallback) {
        if (!has(key)) return fallback;
        const std::string& v = kv_.at(key);
        std::size_t pos = 0;
        unsigned long long out = 0;
        try {
            out = std::stoull(v, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != v.size() || v[0] == '-') {
            throw UsageError(command_ + ": '" + key + "' expects a non-negative integer, got '" + v + "'");
        }
        return static_cast<std::size_t>(out);
    }

    double real(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        try {
            return nn::parse_double(kv_.at(key));
        } catch (const DataError&) {
            throw UsageError(command_ + ": '" + key + "' expects a number, got '" + kv_.at(key) + "'");
        }
    }

    bool flag(const std::string& key) {
        if (!has(key)) return false;
        const std::string& v = kv_.at(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw UsageError(command_ + ": '" + key + "' expects true or false, got '" + v + "'");
    }

    std::vector<std::string> list(const std::string& key) {
        std::vector<std::string> out;
        if (!has(key)) return out;
        std::istringstream in(kv_.at(key));
        for (std::string item; std::getline(in, item, ',');) {
            const auto b = item.find_first_not_of(" \t");
            if (b == std::string::npos) continue;
            out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
        }
        return out;
    }

    void reject_unused() const {
        for (const auto& [key, value] : kv_) {
            if (!used_.count(key)) throw UsageError(command_ + ": unknown option '" + key + "'");
        }
    }

private:
    const KeyValues& kv_;
    std::string command_;
    std::set<std::string> used_;
};

corpus::Split split_of(const std::string& name) {
    const auto s = corpus::parse_split(name);
    if (!s) throw UsageError("unknown split '" + name + "' (expected train, val or test)");
    return *s;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string format_kv(const KeyValues& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

// --------------------------------------------------------------------------- checkpoint meta

const std::string kSpecPrefix = "spec.";

/// Spec keys stored in checkpoint meta. The step budget is left out: it
/// describes the run, not the parameters.
KeyValues spec_meta(const experiment::ExperimentSpec& spec) {
    KeyValues meta;
    for (const auto& [k, v] : spec.to_kv()) {
        if (k == "steps") continue;
        meta[kSpecPrefix + k] = v;
    }
    return meta;
}

experiment::ExperimentSpec spec_from_meta(const KeyValues& meta, const std::string& where) {
    KeyValues kv;
    for (const auto& [k, v] : meta) {
        if (k.rfind(kSpecPrefix, 0) == 0) kv[k.substr(kSpecPrefix.size())] = v;
    }
    if (kv.empty()) throw DataError(where + ": checkpoint carries no experiment spec");
    try {
        return experiment::ExperimentSpec::from_kv(kv);
    } catch (const UsageError& e) {
        throw DataError(where + ": " + e.what());
    }
}

struct LoadedModel {
    model::Checkpoint ck;
    experiment::ExperimentSpec spec;
    experiment::Resources resources;
};

LoadedModel load_for_inference(const fs::path& ckpt_path, const fs::path& workdir) {
    LoadedModel lm;
    lm.ck = model::load_checkpoint(ckpt_path);
    lm.spec = spec_from_meta(lm.ck.meta, ckpt_path.string());
    lm.spec.model = lm.ck.config;
    lm.resources = experiment::load_resources(lm.spec, workdir);
    return lm;
}

std::vector<int> decode_with(const model::DialogModel& m, const model::DialogContext& ctx, std::size_t beam) {
    return beam <= 1 ? m.greedy_decode(ctx) : m.beam_search(ctx, beam);
}

// --------------------------------------------------------------------------- CSV logs

/// Rows "step,..." with step <= keep_through; header kept.
std::string truncate_log(const fs::path& path, std::size_t keep_through, const std::string& header,
                         std::size_t eval_every) {
    std::string out = header + "\n";
    if (!fs::exists(path)) return out;
    std::istringstream in(read_text(path));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        std::size_t step = 0;
        try {
            step = std::stoull(line.substr(0, comma));
        } catch (const std::exception&) {
            throw DataError(path.string() + ": malformed log row '" + line + "'");
        }
        if (step > keep_through) continue;
        // an off-grid row at the resume point was the interrupted run's final evaluation
        if (eval_every > 0 && step == keep_through && step % eval_every != 0) continue;
        out += line + "\n";
    }
    return out;
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

}  // namespace

// --------------------------------------------------------------------------- ingest

CommandResult ingest(const KeyValues& kv, const fs::path& workdir) {
    Options o(kv, "ingest");
    const fs::path data = o.required("data");
    const std::string split_name = o.str("split", "train");
    const fs::path out = o.str("out");
    o.reject_unused();

    const auto ds = corpus::load_dataset(experiment::resolve(workdir, data), split_of(split_name));
    const auto counts = corpus::count_subsets(ds.dialogs);
    const auto vocab = corpus::build_vocab(ds.dialogs, 1);

    std::ostringstream r;
    r << "dataset " << data.string() << " (" << split_name << ")\n";
    r << "  dialogs        " << ds.stats.num_dialogs << "\n";
    r << "  turns          " << ds.stats.num_turns << "\n";
    r << "  words          " << ds.stats.num_words << "\n";
    r << "  vocabulary     " << vocab.size() << "\n";
    r << "subsets (" << corpus::kSubsetRuleVersion << ")\n";
    r << "  binary         " << counts.binary << "\n";
    r << "  non_binary     " << counts.non_binary << "\n";
    r << "  coreference    " << counts.coreference << "\n";
    r << "  audio_related  " << counts.audio_related << "\n";

    CommandResult res{r.str(), {}};
    if (!out.empty()) {
        nlohmann::ordered_json j;
        j["dataset"] = data.string();
        j["split"] = split_name;
        j["dialogs"] = ds.stats.num_dialogs;
        j["turns"] = ds.stats.num_turns;
        j["words"] = ds.stats.num_words;
        j["vocabulary"] = vocab.size();
        j["subset_rule_version"] = std::string(corpus::kSubsetRuleVersion);
        j["subsets"] = {{"binary", counts.binary},
                        {"non_binary", counts.non_binary},
                        {"coreference", counts.coreference},
                        {"audio_related", counts.audio_related}};
        write_text(experiment::resolve(workdir, out), j.dump(2) + "\n");
        res.outputs.push_back(out);
    }
    return res;
}

// --------------------------------------------------------------------------- topics

CommandResult train_topics(const KeyValues& kv, const fs::path& workdir) {
    Options o(kv, "topics");
    const fs::path data = o.required("data");
    const std::string mode = o.str("mode", "lda");
    const fs::path seeds_path = o.str("seeds");
    auto source_names = o.list("sources");
    topics::LdaOptions lda;
    lda.num_topics = o.count("num_topics", 0);
    lda.alpha = o.real("alpha", 0.0);
    lda.beta = o.real("beta", 0.01);
    lda.iterations = o.count("iterations", 500);
    const std::uint64_t seed = o.count("seed", 1);
    const double confidence = o.real("seed_confidence", 0.85);
    const double boost = o.real("beta_boost", 100.0);
    const fs::path out = o.str("out", "topics");
    o.reject_unused();

    if (mode != "lda" && mode != "guided") throw UsageError("topics: mode must be lda or guided, got '" + mode + "'");
    if (mode == "guided" && seeds_path.empty()) throw UsageError("topics: guided mode needs a seed file (seeds)");
    if (mode == "lda" && !seeds_path.empty()) throw UsageError("topics: seeds are only used in guided mode");
    if (source_names.empty()) source_names = {"Q"};
    std::vector<topics::SourceTag> tags;
    for (const auto& n : source_names) {
        const auto t = topics::parse_tag(n);
        if (!t) throw UsageError("topics: unknown source tag '" + n + "' (expected Q, A, QA, C, H or HC)");
        if (std::find(tags.begin(), tags.end(), *t) != tags.end()) throw UsageError("topics: duplicate source " + n);
        tags.push_back(*t);
    }

    const auto ds = corpus::load_dataset(experiment::resolve(workdir, data), corpus::Split::train);
    topics::SeedLoadResult seeds;
    if (mode == "guided") {
        seeds = topics::load_seed_file(experiment::resolve(workdir, seeds_path), lda.num_topics);
        seeds.seeds.seed_confidence = confidence;
        seeds.seeds.beta_boost = boost;
    } else if (lda.num_topics == 0) {
        lda.num_topics = 9;
    }

    std::ostringstream report;
    CommandResult res;
    for (const auto& w : seeds.warnings) report << "warning: " << w << "\n";
    for (const auto tag : tags) {
        const std::string name(topics::tag_name(tag));
        topics::LdaOptions opt = lda;
        opt.source = tag;
        opt.rng_seed = derive_seed(seed, static_cast<std::uint64_t>(tag));
        const auto docs = topics::documents_for(tag, ds.dialogs);
        topics::TopicModel m;
        std::vector<std::string> warnings;
        if (mode == "guided") {
            auto g = topics::train_guided_lda(docs, seeds.seeds, opt);
            m = std::move(g.model);
            warnings = std::move(g.warnings);
        } else {
            m = topics::train_lda(docs, opt);
        }
        std::ostringstream section;
        section << "[" << name << "] " << mode << " K=" << m.num_topics << " V=" << m.vocab_size()
                << " documents=" << docs.size() << " alpha=" << nn::format_double(m.alpha)
                << " beta=" << nn::format_double(m.beta) << "\n";
        for (const auto& w : warnings) section << "warning: " << w << "\n";
        for (std::size_t k = 0; k < m.num_topics; ++k) {
            section << "  topic " << k;
            if (mode == "guided" && k < seeds.seeds.topic_names.size()) section << " " << seeds.seeds.topic_names[k];
            section << ":";
            for (const auto& w : m.top_words(k, 10)) section << " " << w;
            section << "\n";
        }
        const fs::path model_file = out / (name + ".topics");
        const fs::path words_file = out / (name + ".top10.txt");
        fs::create_directories(experiment::resolve(workdir, out));
        topics::save_model(m, experiment::resolve(workdir, model_file));
        write_text(experiment::resolve(workdir, words_file), section.str());
        res.outputs.push_back(model_file);
        res.outputs.push_back(words_file);
        report << section.str();
    }
    res.report = report.str();
    return res;
}

// --------------------------------------------------------------------------- train

CommandResult train(const KeyValues& kv, const fs::path& workdir) {
    KeyValues merged = kv;
    bool resume = false;
    {
        KeyValues control;
        for (const char* key : {"config", "resume"}) {
            if (merged.count(key)) {
                control[key] = merged[key];
                merged.erase(key);
            }
        }
        Options o(control, "train");
        const std::string config = o.str("config");
        resume = o.flag("resume");
        if (!config.empty()) {
            for (const auto& [k, v] : experiment::load_kv_file(experiment::resolve(workdir, config))) merged[k] = v;
        }
    }
    experiment::ExperimentSpec spec = experiment::ExperimentSpec::from_kv(merged);
    if (spec.train_data.empty()) throw UsageError("train: train_data is required");
    {
        model::ModelConfig probe = spec.model;
        if (probe.vocab_size == 0) probe.vocab_size = corpus::Vocabulary::reserved + 1;
        probe.validate();
    }
    const experiment::Resources resources = experiment::load_resources(spec, workdir);
    const auto train_ds = corpus::load_dataset(experiment::resolve(workdir, spec.train_data), corpus::Split::train);

    const fs::path run_rel = spec.run_dir();
    const fs::path run = experiment::resolve(workdir, run_rel);
    fs::create_directories(run);
    const fs::path last_path = run / "last.ckpt";
    const fs::path best_path = run / "best.ckpt";

    corpus::Vocabulary vocab;
    std::unique_ptr<model::DialogModel> net;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t best_step = 0;
    if (resume) {
        if (!fs::exists(last_path)) throw DataError("train: cannot resume, no checkpoint at " + last_path.string());
        model::Checkpoint ck = model::load_checkpoint(last_path);
        spec.model.vocab_size = ck.vocab.size();
        if (ck.config.to_kv() != spec.model.to_kv()) {
            throw UsageError("train: model settings differ from the checkpoint being resumed");
        }
        const auto stored = spec_meta(spec);
        for (const auto& [k, v] : stored) {
            const auto it = ck.meta.find(k);
            if (it == ck.meta.end() || it->second != v) {
                throw UsageError("train: setting '" + k.substr(kSpecPrefix.size()) +
                                 "' differs from the checkpoint being resumed");
            }
        }
        vocab = std::move(ck.vocab);
        net = std::move(ck.model);
        if (fs::exists(best_path)) {
            const auto best = model::load_checkpoint(best_path);
            const auto it = best.meta.find("monitored_loss");
            const auto st = best.meta.find("step");
            if (it != best.meta.end() && st != best.meta.end()) {
                const std::size_t s = std::stoull(st->second);
                if (s <= net->params().step()) {
                    best_loss = nn::parse_double(it->second);
                    best_step = s;
                }
            }
        }
    } else {
        vocab = corpus::build_vocab(train_ds.dialogs, spec.min_count);
        spec.model.vocab_size = vocab.size();
        spec.model.validate();
        net = std::make_unique<model::DialogModel>(spec.model, derive_seed(spec.seed, 1));
        if (!spec.word_vectors.empty()) {
            net->load_embeddings(vocab, model::load_word_vectors(experiment::resolve(workdir, spec.word_vectors)));
        }
    }

    const auto train_set = experiment::build_examples(train_ds, vocab, resources, spec.model);
    experiment::ExampleSet monitor;
    if (!spec.eval_data.empty()) {
        const auto eval_ds = corpus::load_dataset(experiment::resolve(workdir, spec.eval_data), corpus::Split::train);
        monitor = experiment::build_examples(eval_ds, vocab, resources, spec.model);
    }

    const std::string started = utc_now();
    const std::size_t start_step = net->params().step();
    const auto& opt = spec.optimizer;
    std::string train_log = resume ? truncate_log(run / "train_log.csv", start_step, "step,loss,grad_norm", 0)
                                   : std::string("step,loss,grad_norm\n");
    std::string eval_log = resume ? truncate_log(run / "eval_log.csv", start_step, "step,loss", opt.eval_every)
                                  : std::string("step,loss\n");
    write_text(run / "spec.cfg", format_kv(spec.to_kv()));

    auto meta_at = [&](std::size_t step) {
        KeyValues meta = spec_meta(spec);
        meta["step"] = std::to_string(step);
        return meta;
    };
    experiment::TrainHooks hooks;
    hooks.on_step = [&](const experiment::StepRecord& r) {
        train_log += std::to_string(r.step) + "," + nn::format_double(r.loss) + "," + nn::format_double(r.grad_norm) +
                     "\n";
        if (opt.checkpoint_every > 0 && r.step % opt.checkpoint_every == 0) {
            write_text(run / "train_log.csv", train_log);
            write_text(run / "eval_log.csv", eval_log);
            model::save_checkpoint(last_path, *net, vocab, meta_at(r.step), true);
        }
    };
    hooks.on_eval = [&](std::size_t step, double loss) {
        eval_log += std::to_string(step) + "," + nn::format_double(loss) + "\n";
        if (loss < best_loss) {
            best_loss = loss;
            best_step = step;
            KeyValues meta = meta_at(step);
            meta["monitored_loss"] = nn::format_double(loss);
            model::save_checkpoint(best_path, *net, vocab, meta, false);
        }
    };
    const auto outcome = experiment::run_training(*net, train_set, monitor, opt, spec.seed, hooks);

    model::save_checkpoint(last_path, *net, vocab, meta_at(outcome.end_step), true);
    write_text(run / "train_log.csv", train_log);
    write_text(run / "eval_log.csv", eval_log);
    write_text(run / "run.timestamps", "started " + started + "\nfinished " + utc_now() + "\n");

    std::ostringstream r;
    r << "run " << spec.name << " (" << run_rel.string() << ")\n";
    r << "  examples        " << train_set.size() << " train";
    if (monitor.size() > 0) r << ", " << monitor.size() << " monitored";
    r << "\n";
    r << "  vocabulary      " << vocab.size() << "\n";
    r << "  parameters      " << net->params().scalar_count() << "\n";
    r << "  steps           " << outcome.start_step << " -> " << outcome.end_step
      << (outcome.stopped_early ? " (stopped at stop_loss)" : "") << "\n";
    r << "  last batch loss " << fixed(outcome.last_batch_loss, 6) << "\n";
    r << "  monitored loss  " << fixed(outcome.monitored_loss, 6) << "\n";
    r << "  best loss       " << fixed(best_loss, 6) << " at step " << best_step << "\n";
    CommandResult res;
    res.report = r.str();
    for (const char* f : {"spec.cfg", "train_log.csv", "eval_log.csv", "last.ckpt", "best.ckpt", "run.timestamps"}) {
        res.outputs.push_back(run_rel / f);
    }
    return res;
}

// --------------------------------------------------------------------------- eval / generate

namespace {

corpus::Dataset load_eval_data(Options& o, const fs::path& workdir, const experiment::ExperimentSpec* spec) {
    fs::path data = o.str("data");
    if (data.empty() && spec != nullptr) data = spec->eval_data.empty() ? spec->train_data : spec->eval_data;
    if (data.empty()) throw UsageError("no dataset given (data)");
    return corpus::load_dataset(experiment::resolve(workdir, data), split_of(o.str("split", "train")));
}

std::vector<metrics::Hypothesis> generate_all(const LoadedModel& lm, const corpus::Dataset& ds, std::size_t beam,
                                              std::vector<experiment::ExampleInfo>* info_out) {
    const auto set = experiment::build_examples(ds, lm.ck.vocab, lm.resources, lm.ck.config);
    std::vector<metrics::Hypothesis> hyps;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto ids = decode_with(*lm.ck.model, set.examples[i].context, beam);
        hyps.push_back({set.info[i].video_id, set.info[i].turn_index, lm.ck.vocab.decode(ids)});
    }
    if (info_out) *info_out = set.info;
    return hyps;
}

std::string safe_name(std::string s) {
    for (auto& c : s) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
    }
    return s;
}

}  // namespace

CommandResult evaluate(const KeyValues& kv, const fs::path& workdir) {
    Options o(kv, "eval");
    const auto ckpts = o.list("checkpoints");
    const auto hyp_files = o.list("hypotheses");
    const auto names = o.list("names");
    auto subsets = o.list("subsets");
    const fs::path out = o.str("out", "eval");
    const std::size_t beam_override = o.count("beam_width", 0);
    if (ckpts.empty() && hyp_files.empty()) throw UsageError("eval: give checkpoints and/or hypotheses");
    if (!names.empty() && names.size() != ckpts.size() + hyp_files.size()) {
        throw UsageError("eval: names must list one name per checkpoint and hypothesis file");
    }
    if (subsets.empty()) subsets = metrics::all_subsets();
    for (const auto& s : subsets) {
        if (s != "overall" && !corpus::parse_subset(s)) throw UsageError("eval: unknown subset '" + s + "'");
    }

    std::vector<LoadedModel> models;
    for (const auto& c : ckpts) models.push_back(load_for_inference(experiment::resolve(workdir, c), workdir));
    const corpus::Dataset ds = load_eval_data(o, workdir, models.empty() ? nullptr : &models.front().spec);
    o.reject_unused();

    struct Ref {
        corpus::Tokens answer;
        corpus::TurnLabels labels;
    };
    std::vector<std::pair<std::string, std::size_t>> order;
    std::map<std::pair<std::string, std::size_t>, Ref> refs;
    for (const auto& d : ds.dialogs) {
        for (std::size_t t = 0; t < d.turns.size(); ++t) {
            if (d.turns[t].answer.empty()) {
                throw DataError("eval: dialog " + d.video_id + " turn " + std::to_string(t) +
                                " has no reference answer");
            }
            order.emplace_back(d.video_id, t);
            refs[{d.video_id, t}] = {d.turns[t].answer, corpus::label_turn(d.turns[t])};
        }
    }

    std::vector<metrics::Variant> variants;
    std::set<std::string> used_names;
    auto unique = [&](std::string n) {
        std::string base = n;
        for (int i = 2; used_names.count(n); ++i) n = base + "_" + std::to_string(i);
        used_names.insert(n);
        return n;
    };
    auto to_pairs = [&](const std::vector<metrics::Hypothesis>& hyps, const std::string& from) {
        std::map<std::pair<std::string, std::size_t>, const corpus::Tokens*> by_key;
        for (const auto& h : hyps) by_key[{h.video_id, h.turn_index}] = &h.text;
        std::vector<metrics::EvalPair> pairs;
        for (const auto& key : order) {
            const auto it = by_key.find(key);
            if (it == by_key.end()) {
                throw DataError("eval: " + from + " has no answer for " + key.first + " turn " +
                                std::to_string(key.second));
            }
            const Ref& r = refs.at(key);
            pairs.push_back({*it->second, {r.answer}, r.labels});
        }
        return pairs;
    };

    CommandResult res;
    const fs::path out_dir = experiment::resolve(workdir, out);
    fs::create_directories(out_dir);
    std::size_t name_index = 0;
    for (std::size_t i = 0; i < models.size(); ++i) {
        const auto& lm = models[i];
        const std::string name =
            unique(name_index < names.size() ? names[name_index] : lm.spec.name);
        ++name_index;
        const std::size_t beam = beam_override > 0 ? beam_override : lm.ck.config.beam_width;
        const auto hyps = generate_all(lm, ds, beam, nullptr);
        const fs::path hyp_file = out / (safe_name(name) + ".hyp");
        write_text(experiment::resolve(workdir, hyp_file), metrics::format_hypotheses(hyps));
        res.outputs.push_back(hyp_file);
        variants.push_back({name, to_pairs(hyps, "checkpoint " + ckpts[i])});
    }
    for (const auto& h : hyp_files) {
        const std::string name =
            unique(name_index < names.size() ? names[name_index] : fs::path(h).stem().string());
        ++name_index;
        const auto hyps = metrics::load_hypotheses(experiment::resolve(workdir, h));
        variants.push_back({name, to_pairs(hyps, "hypothesis file " + h)});
    }

    const auto report = metrics::evaluate(variants, subsets);
    const std::string text = metrics::report_text(report);
    write_text(out_dir / "report.json", metrics::report_json(report));
    write_text(out_dir / "report.txt", text);
    write_text(out_dir / "report.csv", metrics::report_csv(report));
    for (const char* f : {"report.json", "report.txt", "report.csv"}) res.outputs.push_back(out / f);
    res.report = text;
    return res;
}

CommandResult generate(const KeyValues& kv, const fs::path& workdir) {
    Options o(kv, "generate");
    const fs::path ckpt = o.required("checkpoint");
    const fs::path out = o.str("out", "generated.hyp");
    const std::size_t beam_override = o.count("beam_width", 0);
    const LoadedModel lm = load_for_inference(experiment::resolve(workdir, ckpt), workdir);
    const corpus::Dataset ds = load_eval_data(o, workdir, &lm.spec);
    o.reject_unused();
    const std::size_t beam = beam_override > 0 ? beam_override : lm.ck.config.beam_width;
    const auto hyps = generate_all(lm, ds, beam, nullptr);
    const std::string text = metrics::format_hypotheses(hyps);
    write_text(experiment::resolve(workdir, out), text);
    return {text, {out}};
}

// --------------------------------------------------------------------------- audio

CommandResult audio(const KeyValues& kv, const fs::path& workdir) {
    Options o(kv, "audio");
    const std::string action = o.required("action");
    std::ostringstream r;
    CommandResult res;
    if (action == "train") {
        const std::size_t classes = o.count("classes", 5);
        const std::size_t per_class = o.count("per_class", 40);
        const double duration = o.real("duration", 0.5);
        audio::AudioTrainOptions opt;
        opt.epochs = o.count("epochs", 30);
        opt.batch_size = o.count("batch_size", opt.batch_size);
        opt.adam.learning_rate = o.real("learning_rate", opt.adam.learning_rate);
        const std::uint64_t seed = o.count("seed", 7);
        opt.rng_seed = seed;
        const fs::path out = o.str("out", "audio/classifier.txt");
        o.reject_unused();
        const auto data = audio::synth_dataset(classes, per_class, duration, derive_seed(seed, 0));
        audio::AudioClassifierConfig cfg;
        cfg.num_classes = classes;
        audio::AudioTrainReport rep;
        const auto clf = audio::train_audio_clf(data, opt, &rep, cfg);
        const fs::path model_path = experiment::resolve(workdir, out);
        if (model_path.has_parent_path()) fs::create_directories(model_path.parent_path());
        clf.save(model_path);
        std::string log = "epoch,loss\n0," + nn::format_double(rep.initial_loss) + "\n";
        for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e) {
            log += std::to_string(e + 1) + "," + nn::format_double(rep.epoch_loss[e]) + "\n";
        }
        const fs::path log_path = fs::path(out.string() + ".epochs.csv");
        write_text(experiment::resolve(workdir, log_path), log);
        r << "audio classifier " << out.string() << "\n";
        r << "  classes         " << classes << " (" << data.train.size() << " train, " << data.test.size()
          << " test)\n";
        r << "  initial loss    " << fixed(rep.initial_loss, 6) << "\n";
        r << "  final loss      " << fixed(rep.epoch_loss.empty() ? rep.initial_loss : rep.epoch_loss.back(), 6)
          << " after " << rep.epoch_loss.size() << " epochs\n";
        r << "  test accuracy   " << fixed(rep.test_accuracy, 4) << "\n";
        res.outputs = {out, log_path};
    } else if (action == "embed") {
        const fs::path model_file = o.required("model");
        const fs::path input = o.required("input");
        const double window = o.real("window", 1.0);
        const double hop = o.real("hop", 0.5);
        const fs::path out = o.str("out", "features/audio");
        o.reject_unused();
        const auto clf = audio::AudioClassifier::load(experiment::resolve(workdir, model_file));
        const fs::path in_path = experiment::resolve(workdir, input);
        std::vector<fs::path> files;
        if (fs::is_directory(in_path)) {
            for (const auto& e : fs::directory_iterator(in_path)) {
                if (e.is_regular_file()) files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
            if (files.empty()) throw DataError("audio: no waveform files in " + in_path.string());
        } else {
            if (!fs::exists(in_path)) throw DataError("audio: input not found: " + in_path.string());
            files.push_back(in_path);
        }
        fs::create_directories(experiment::resolve(workdir, out));
        r << "audio embeddings (window " << window << " s, hop " << hop << " s)\n";
        for (const auto& f : files) {
            const std::string vid = f.stem().string();
            const auto feats = audio::embed_audio(clf, audio::normalize(audio::load_waveform(f)), window, hop);
            const fs::path target = experiment::feature_path(out, vid, audio::Modality::audio);
            audio::save_features(feats, experiment::resolve(workdir, target));
            res.outputs.push_back(target);
            r << "  " << vid << "  T=" << feats.length() << " D=" << feats.width() << "\n";
        }
    } else {
        throw UsageError("audio: action must be train or embed, got '" + action + "'");
    }
    res.report = r.str();
    return res;
}

// --------------------------------------------------------------------------- responder

struct Responder::State {
    LoadedModel lm;
};

Responder::Responder(const fs::path& checkpoint, const fs::path& workdir)
    : state_(std::make_unique<State>(State{load_for_inference(experiment::resolve(workdir, checkpoint), workdir)})) {}

Responder::~Responder() = default;
Responder::Responder(Responder&&) noexcept = default;
Responder& Responder::operator=(Responder&&) noexcept = default;

corpus::Tokens Responder::answer(const corpus::Dialog& dialog, std::size_t turn, std::size_t beam_width) const {
    if (turn >= dialog.turns.size()) {
        throw UsageError("dialog " + dialog.video_id + " has no turn " + std::to_string(turn));
    }
    corpus::Dataset one;
    one.dialogs.push_back(dialog);
    one.dialogs.back().turns.resize(turn + 1);
    if (one.dialogs.back().turns.back().answer.empty()) one.dialogs.back().turns.back().answer = {"?"};
    const auto& lm = state_->lm;
    const auto set = experiment::build_examples(one, lm.ck.vocab, lm.resources, lm.ck.config);
    const std::size_t beam = beam_width > 0 ? beam_width : lm.ck.config.beam_width;
    return lm.ck.vocab.decode(decode_with(*lm.ck.model, set.examples.back().context, beam));
}

const model::ModelConfig& Responder::config() const { return state_->lm.ck.config; }
const corpus::Vocabulary& Responder::vocabulary() const { return state_->lm.ck.vocab; }

// --------------------------------------------------------------------------- dispatch

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"ingest", "topics", "train", "eval", "generate", "audio"};
    return names;
}

CommandResult run_command(const std::string& command, const KeyValues& opts, const fs::path& workdir) {
    if (command == "ingest") return ingest(opts, workdir);
    if (command == "topics") return train_topics(opts, workdir);
    if (command == "train") return train(opts, workdir);
    if (command == "eval") return evaluate(opts, workdir);
    if (command == "generate") return generate(opts, workdir);
    if (command == "audio") return audio(opts, workdir);
    throw UsageError("unknown command '" + command + "'");
}

}  // namespace avsd::pipeline
