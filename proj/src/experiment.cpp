#include "avsd/experiment.hpp"

#include "avsd/error.hpp"
#include "avsd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace avsd::experiment {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::size_t to_count(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    unsigned long long out = 0;
    try {
        out = std::stoull(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size() || v[0] == '-') {
        throw UsageError("'" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return static_cast<std::size_t>(out);
}

double to_real(const std::string& key, const std::string& v) {
    try {
        return nn::parse_double(v);
    } catch (const DataError&) {
        throw UsageError("'" + key + "' expects a number, got '" + v + "'");
    }
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

KeyValues parse_kv_text(std::string_view text, std::string_view source) {
    KeyValues kv;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw UsageError(std::string(source) + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(std::string_view(body).substr(0, eq));
        if (key.empty()) throw UsageError(std::string(source) + ":" + std::to_string(line_no) + ": empty key");
        kv[key] = trim(std::string_view(body).substr(eq + 1));
    }
    return kv;
}

KeyValues load_kv_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_kv_text(ss.str(), path.string());
}

KeyValues ExperimentSpec::to_kv() const {
    KeyValues kv = model.to_kv();
    auto path_list = [](const std::vector<fs::path>& ps) {
        std::string out;
        for (const auto& p : ps) out += (out.empty() ? "" : ",") + p.string();
        return out;
    };
    kv["name"] = name;
    kv["train_data"] = train_data.string();
    kv["eval_data"] = eval_data.string();
    kv["min_count"] = std::to_string(min_count);
    kv["topic_models"] = path_list(topic_models);
    kv["topic_fold_in"] = std::to_string(topic_fold_in);
    kv["audio_features"] = audio_features.string();
    kv["visual_features"] = visual_features.string();
    kv["word_vectors"] = word_vectors.string();
    kv["learning_rate"] = nn::format_double(optimizer.adam.learning_rate);
    kv["beta1"] = nn::format_double(optimizer.adam.beta1);
    kv["beta2"] = nn::format_double(optimizer.adam.beta2);
    kv["epsilon"] = nn::format_double(optimizer.adam.epsilon);
    kv["clip_norm"] = nn::format_double(optimizer.clip_norm);
    kv["batch_size"] = std::to_string(optimizer.batch_size);
    kv["steps"] = std::to_string(optimizer.steps);
    kv["stop_loss"] = nn::format_double(optimizer.stop_loss);
    kv["eval_every"] = std::to_string(optimizer.eval_every);
    kv["checkpoint_every"] = std::to_string(optimizer.checkpoint_every);
    kv["seed"] = std::to_string(seed);
    kv["output_dir"] = output_dir.string();
    return kv;
}

ExperimentSpec ExperimentSpec::from_kv(const KeyValues& kv) {
    ExperimentSpec s;
    KeyValues model_kv;
    for (const auto& [key, value] : kv) {
        if (key == "name") {
            if (value.empty()) throw UsageError("'name' must not be empty");
            s.name = value;
        } else if (key == "train_data") {
            s.train_data = value;
        } else if (key == "eval_data") {
            s.eval_data = value;
        } else if (key == "min_count") {
            s.min_count = to_count(key, value);
        } else if (key == "topic_models") {
            s.topic_models.clear();
            for (const auto& p : split_list(value)) s.topic_models.emplace_back(p);
        } else if (key == "topic_fold_in") {
            s.topic_fold_in = to_count(key, value);
        } else if (key == "audio_features") {
            s.audio_features = value;
        } else if (key == "visual_features") {
            s.visual_features = value;
        } else if (key == "word_vectors") {
            s.word_vectors = value;
        } else if (key == "learning_rate") {
            s.optimizer.adam.learning_rate = to_real(key, value);
        } else if (key == "beta1") {
            s.optimizer.adam.beta1 = to_real(key, value);
        } else if (key == "beta2") {
            s.optimizer.adam.beta2 = to_real(key, value);
        } else if (key == "epsilon") {
            s.optimizer.adam.epsilon = to_real(key, value);
        } else if (key == "clip_norm") {
            s.optimizer.clip_norm = to_real(key, value);
        } else if (key == "batch_size") {
            s.optimizer.batch_size = to_count(key, value);
        } else if (key == "steps") {
            s.optimizer.steps = to_count(key, value);
        } else if (key == "stop_loss") {
            s.optimizer.stop_loss = to_real(key, value);
        } else if (key == "eval_every") {
            s.optimizer.eval_every = to_count(key, value);
        } else if (key == "checkpoint_every") {
            s.optimizer.checkpoint_every = to_count(key, value);
        } else if (key == "seed") {
            s.seed = to_count(key, value);
        } else if (key == "output_dir") {
            s.output_dir = value;
        } else {
            model_kv[key] = value;
        }
    }
    const auto unknown = s.model.apply_kv(model_kv);
    if (!unknown.empty()) throw UsageError("unknown experiment key '" + unknown.front() + "'");
    if (s.optimizer.batch_size == 0) throw UsageError("batch_size must be >= 1");
    if (s.optimizer.adam.learning_rate <= 0.0) throw UsageError("learning_rate must be > 0");
    if (s.optimizer.clip_norm <= 0.0) throw UsageError("clip_norm must be > 0");
    return s;
}

fs::path resolve(const fs::path& workdir, const fs::path& p) {
    if (p.empty() || p.is_absolute() || workdir.empty()) return p;
    return workdir / p;
}

fs::path feature_path(const fs::path& dir, const std::string& video_id, audio::Modality modality) {
    return dir / (video_id + "_" + std::string(audio::modality_name(modality)) + ".feat");
}

std::size_t Resources::topic_width() const {
    std::size_t w = 0;
    for (const auto& m : topic_models) w += m.num_topics;
    return w;
}

Resources load_resources(const ExperimentSpec& spec, const fs::path& workdir) {
    Resources r;
    for (const auto& p : spec.topic_models) r.topic_models.push_back(topics::load_model(resolve(workdir, p)));
    std::stable_sort(r.topic_models.begin(), r.topic_models.end(),
                     [](const auto& a, const auto& b) { return a.source < b.source; });
    for (std::size_t i = 1; i < r.topic_models.size(); ++i) {
        if (r.topic_models[i].source == r.topic_models[i - 1].source) {
            throw UsageError("two topic models share source tag " +
                             std::string(topics::tag_name(r.topic_models[i].source)));
        }
    }
    const auto& cfg = spec.model;
    if (cfg.topic_mode != model::TopicMode::none) {
        if (r.topic_models.empty()) throw UsageError("topic_mode is set but no topic_models are listed");
        if (r.topic_width() != cfg.topic_dim) {
            throw UsageError("topic_dim " + std::to_string(cfg.topic_dim) + " does not match the " +
                             std::to_string(r.topic_width()) + " topics of the listed topic models");
        }
    }
    if (cfg.uses_audio()) {
        if (spec.audio_features.empty()) throw UsageError("audio_mode=fuse requires audio_features");
        r.audio_dir = resolve(workdir, spec.audio_features);
    }
    if (cfg.use_visual) {
        if (spec.visual_features.empty()) throw UsageError("use_visual=true requires visual_features");
        r.visual_dir = resolve(workdir, spec.visual_features);
    }
    r.fold_in = spec.topic_fold_in;
    r.seed = spec.seed;
    return r;
}

ExampleSet build_examples(const corpus::Dataset& data, const corpus::Vocabulary& vocab, const Resources& res,
                          const model::ModelConfig& config) {
    ExampleSet set;
    std::vector<const topics::TopicModel*> models;
    for (const auto& m : res.topic_models) models.push_back(&m);
    const bool want_topics = config.topic_mode != model::TopicMode::none;

    for (const auto& dialog : data.dialogs) {
        std::shared_ptr<const audio::FeatureSequence> audio_feat;
        std::shared_ptr<const audio::FeatureSequence> visual_feat;
        if (config.uses_audio()) {
            audio_feat = std::make_shared<audio::FeatureSequence>(
                audio::load_features(feature_path(res.audio_dir, dialog.video_id, audio::Modality::audio)));
        }
        if (config.use_visual) {
            visual_feat = std::make_shared<audio::FeatureSequence>(
                audio::load_features(feature_path(res.visual_dir, dialog.video_id, audio::Modality::visual)));
        }
        const std::vector<int> caption = vocab.encode(dialog.caption);
        std::vector<std::vector<int>> history;
        for (std::size_t t = 0; t < dialog.turns.size(); ++t) {
            const corpus::Turn& turn = dialog.turns[t];
            model::TrainingExample ex;
            ex.context.caption = caption;
            ex.context.history = history;
            ex.context.question = vocab.encode(turn.question);
            ex.context.audio = audio_feat;
            ex.context.visual = visual_feat;
            ex.answer = vocab.encode(turn.answer);
            if (want_topics) {
                const std::uint64_t seed = fnv1a(dialog.video_id + "#" + std::to_string(t), res.seed);
                ex.context.topic =
                    topics::topic_feature_vector(models, topics::example_documents(dialog, t), res.fold_in, seed);
            }
            set.examples.push_back(std::move(ex));
            set.info.push_back({dialog.video_id, t, turn.answer, corpus::label_turn(turn)});

            std::vector<int> qa = vocab.encode(turn.question);
            const std::vector<int> a = vocab.encode(turn.answer);
            qa.insert(qa.end(), a.begin(), a.end());
            history.push_back(std::move(qa));
        }
    }
    return set;
}

std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch, std::uint64_t seed, std::size_t step) {
    if (n == 0) throw UsageError("no training examples");
    if (batch == 0) throw UsageError("batch_size must be >= 1");
    batch = std::min(batch, n);
    const std::size_t per_epoch = (n + batch - 1) / batch;
    const std::size_t epoch = step / per_epoch;
    const std::size_t slot = step % per_epoch;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, epoch));
    rng.shuffle(order);
    const std::size_t begin = slot * batch;
    const std::size_t end = std::min(n, begin + batch);
    return {order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

TrainOutcome run_training(model::DialogModel& model, const ExampleSet& train, const ExampleSet& monitor,
                          const OptimizerSettings& settings, std::uint64_t seed, const TrainHooks& hooks) {
    if (train.size() == 0) throw UsageError("no training examples");
    const ExampleSet& watch = monitor.size() > 0 ? monitor : train;
    TrainOutcome out;
    nn::ParamStore& params = model.params();
    out.start_step = static_cast<std::size_t>(params.step());
    out.end_step = out.start_step;
    std::vector<model::TrainingExample> batch;
    auto evaluate = [&](std::size_t step) {
        out.monitored_loss = model.evaluate_loss(watch.examples);
        if (hooks.on_eval) hooks.on_eval(step, out.monitored_loss);
        return settings.stop_loss > 0.0 && out.monitored_loss <= settings.stop_loss;
    };
    for (std::size_t step = out.start_step; step < settings.steps; ++step) {
        batch.clear();
        for (std::size_t i : batch_indices(train.size(), settings.batch_size, seed, step)) {
            batch.push_back(train.examples[i]);
        }
        params.zero_grad();
        const double loss = model.forward_loss(batch, true);
        if (!std::isfinite(loss)) throw NumericError("training loss became non-finite at step " + std::to_string(step + 1));
        const double norm = params.clip_grad_norm(settings.clip_norm);
        nn::adam_step(params, settings.adam);
        params.check_finite_values();
        out.last_batch_loss = loss;
        out.end_step = step + 1;
        if (hooks.on_step) hooks.on_step({step + 1, loss, norm});
        const bool last = step + 1 == settings.steps;
        if (settings.eval_every > 0 && (step + 1) % settings.eval_every == 0 && !last) {
            if (evaluate(step + 1)) {
                out.stopped_early = true;
                return out;
            }
        }
    }
    evaluate(out.end_step);
    return out;
}

}  // namespace avsd::experiment
