#pragma once

// Batch commands behind the CLI and the C API. Each command reads a flat
// key/value option bag, resolves relative paths against `workdir`, writes
// its outputs and returns a human-readable report.

#include "avsd/experiment.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace avsd::pipeline {

namespace fs = std::filesystem;
using experiment::KeyValues;

struct CommandResult {
    std::string report;
    std::vector<fs::path> outputs;  // as given (relative to workdir when relative)
};

/// data, split (train|val|test), out (optional JSON stats file)
CommandResult ingest(const KeyValues& opts, const fs::path& workdir);

/// data, sources (comma list of Q,A,QA,C,H,HC), mode (lda|guided), seeds,
/// num_topics, alpha, beta, iterations, seed, out (directory)
CommandResult train_topics(const KeyValues& opts, const fs::path& workdir);

/// config (experiment file), resume (true|false), plus any experiment key.
/// Keys from the config file override keys given directly.
CommandResult train(const KeyValues& opts, const fs::path& workdir);

/// checkpoints and/or hypotheses (comma lists), names, data, subsets, out
CommandResult evaluate(const KeyValues& opts, const fs::path& workdir);

/// checkpoint, data, out, beam_width (optional override)
CommandResult generate(const KeyValues& opts, const fs::path& workdir);

/// action=train: classes, per_class, duration, epochs, seed, out
/// action=embed: model, input (file or directory), window, hop, out
CommandResult audio(const KeyValues& opts, const fs::path& workdir);

/// Dispatches on command name.
CommandResult run_command(const std::string& command, const KeyValues& opts, const fs::path& workdir);

const std::vector<std::string>& command_names();

/// A trained checkpoint with the topic models and feature directories its
/// spec refers to, ready to answer single turns.
class Responder {
public:
    Responder(const fs::path& checkpoint, const fs::path& workdir);
    ~Responder();
    Responder(Responder&&) noexcept;
    Responder& operator=(Responder&&) noexcept;

    /// Answer to `turn` of `dialog`; earlier turns form the history.
    /// beam_width 0 uses the checkpoint's setting.
    corpus::Tokens answer(const corpus::Dialog& dialog, std::size_t turn, std::size_t beam_width = 0) const;

    const model::ModelConfig& config() const;
    const corpus::Vocabulary& vocabulary() const;

private:
    struct State;
    std::unique_ptr<State> state_;
};

// Run directory layout written by train:
//   spec.cfg         resolved experiment spec
//   train_log.csv    step,loss,grad_norm
//   eval_log.csv     step,loss (monitored loss)
//   last.ckpt        latest parameters with optimizer state
//   best.ckpt        parameters at the lowest monitored loss
//   run.timestamps   wall-clock start/end (the only non-deterministic file)

}  // namespace avsd::pipeline
