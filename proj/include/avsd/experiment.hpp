#pragma once

#include "avsd/corpus.hpp"
#include "avsd/model.hpp"
#include "avsd/nn/param_store.hpp"
#include "avsd/topics.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace avsd::experiment {

namespace fs = std::filesystem;

using KeyValues = std::map<std::string, std::string>;

/// "key = value" lines; '#' starts a comment. Duplicate keys: last wins.
KeyValues parse_kv_text(std::string_view text, std::string_view source = "<memory>");
KeyValues load_kv_file(const fs::path& path);

struct OptimizerSettings {
    nn::AdamConfig adam;
    double clip_norm = 5.0;
    std::size_t batch_size = 16;
    std::size_t steps = 2000;
    double stop_loss = 0.0;  // > 0 stops once the monitored loss is at or below it
    std::size_t eval_every = 100;
    std::size_t checkpoint_every = 0;  // 0 writes last.ckpt only at the end
};

struct ExperimentSpec {
    std::string name = "experiment";
    fs::path train_data;
    fs::path eval_data;  // monitored loss uses train_data when empty
    std::size_t min_count = 1;
    model::ModelConfig model;
    std::vector<fs::path> topic_models;
    std::size_t topic_fold_in = 50;
    fs::path audio_features;   // directory holding <video_id>_audio.feat
    fs::path visual_features;  // directory holding <video_id>_visual.feat
    fs::path word_vectors;
    OptimizerSettings optimizer;
    std::uint64_t seed = 1;
    fs::path output_dir;  // runs/<name> when empty

    fs::path run_dir() const { return output_dir.empty() ? fs::path("runs") / name : output_dir; }

    KeyValues to_kv() const;
    /// Unknown keys raise UsageError. model.vocab_size may stay 0; it is
    /// filled in from the training vocabulary.
    static ExperimentSpec from_kv(const KeyValues& kv);
};

fs::path resolve(const fs::path& workdir, const fs::path& p);

fs::path feature_path(const fs::path& dir, const std::string& video_id, audio::Modality modality);

/// Topic models and feature directories a spec refers to.
struct Resources {
    std::vector<topics::TopicModel> topic_models;  // ordered Q, A, QA, C, H, HC
    fs::path audio_dir;
    fs::path visual_dir;
    std::size_t fold_in = 50;
    std::uint64_t seed = 1;

    std::size_t topic_width() const;
};

Resources load_resources(const ExperimentSpec& spec, const fs::path& workdir);

struct ExampleInfo {
    std::string video_id;
    std::size_t turn_index = 0;
    corpus::Tokens reference;
    corpus::TurnLabels labels;
};

/// One example per (dialog, turn); parallel vectors.
struct ExampleSet {
    std::vector<model::TrainingExample> examples;
    std::vector<ExampleInfo> info;

    std::size_t size() const { return examples.size(); }
};

/// Turns dialogs into model inputs: caption and earlier turns become the
/// history, the turn's question and answer the query and target.
ExampleSet build_examples(const corpus::Dataset& data, const corpus::Vocabulary& vocab, const Resources& res,
                          const model::ModelConfig& config);

/// Examples used by optimizer step `step` (0-based). Depends only on
/// (n, batch, seed, step): each epoch is a fresh permutation.
std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch, std::uint64_t seed, std::size_t step);

struct StepRecord {
    std::size_t step;  // 1-based count of completed updates
    double loss;
    double grad_norm;
};

struct TrainHooks {
    std::function<void(const StepRecord&)> on_step;
    /// Monitored loss after `step` updates.
    std::function<void(std::size_t step, double loss)> on_eval;
};

struct TrainOutcome {
    std::size_t start_step = 0;
    std::size_t end_step = 0;
    double last_batch_loss = 0.0;
    double monitored_loss = 0.0;
    bool stopped_early = false;
};

/// Runs updates from model.params().step() up to settings.steps. The
/// monitored loss is evaluated every eval_every steps and after the last one.
TrainOutcome run_training(model::DialogModel& model, const ExampleSet& train, const ExampleSet& monitor,
                          const OptimizerSettings& settings, std::uint64_t seed, const TrainHooks& hooks = {});

}  // namespace avsd::experiment
