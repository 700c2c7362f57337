#include "avsd/avsd.h"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace {

struct Command {
    std::string name;
    std::string help;
    std::vector<std::string> keys;
};

const std::vector<Command>& commands() {
    static const std::vector<Command> list{
        {"ingest", "Load a dialog file and report its statistics", {"data", "split", "out"}},
        {"topics",
         "Train topic models per source tag",
         {"data", "sources", "mode", "seeds", "num_topics", "alpha", "beta", "iterations", "seed", "seed_confidence",
          "beta_boost", "out"}},
        {"train",
         "Train an answer generator",
         {"name", "train_data", "eval_data", "min_count", "topic_models", "topic_fold_in", "audio_features",
          "visual_features", "word_vectors", "learning_rate", "beta1", "beta2", "epsilon", "clip_norm", "batch_size",
          "steps", "stop_loss", "eval_every", "checkpoint_every", "seed", "output_dir", "embed_dim", "hidden_dim",
          "history_turns", "attention_mode", "attention_scoring", "topic_mode", "topic_dim", "audio_mode",
          "use_visual", "av_dim", "beam_width", "max_decode_len"}},
        {"eval",
         "Score checkpoints or hypothesis files per subset",
         {"checkpoints", "hypotheses", "names", "data", "split", "subsets", "out", "beam_width"}},
        {"generate", "Write answers for every turn of a dataset", {"checkpoint", "data", "split", "out", "beam_width"}},
        {"audio",
         "Train the audio classifier or embed waveforms",
         {"action", "classes", "per_class", "duration", "epochs", "batch_size", "learning_rate", "seed", "out", "model",
          "input", "window", "hop"}},
    };
    return list;
}

std::string flag_name(std::string key) {
    for (auto& c : key) {
        if (c == '_') c = '-';
    }
    return "--" + key;
}

int report_error(int status, const std::string& message) {
    std::cerr << "avsd: error: " << message << "\n";
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Audio-visual scene-aware dialog toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(avsd_version()));
    std::string workdir = ".";
    std::string config;
    app.add_option("--workdir", workdir, "Root for relative paths");
    app.add_option("--config", config, "Key/value file; its keys override flags");

    std::map<std::string, std::map<std::string, std::string>> values;
    std::map<std::string, std::vector<std::string>> extra;
    bool resume = false;
    for (const auto& cmd : commands()) {
        CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
        for (const auto& key : cmd.keys) sub->add_option(flag_name(key), values[cmd.name][key]);
        sub->add_option("--set", extra[cmd.name], "Extra option as key=value")->allow_extra_args(false);
        if (cmd.name == "train") sub->add_flag("--resume", resume, "Continue from the run's last checkpoint");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return AVSD_ERR_USAGE;
    }

    const CLI::App* chosen = app.get_subcommands().front();
    const std::string name = chosen->get_name();

    avsd_options* opts = nullptr;
    if (avsd_options_new(&opts) != AVSD_OK) return report_error(AVSD_ERR_INTERNAL, avsd_last_error());
    int status = AVSD_OK;
    auto set = [&](const std::string& k, const std::string& v) {
        if (status == AVSD_OK) status = avsd_options_set(opts, k.c_str(), v.c_str());
    };
    for (const auto& [key, value] : values[name]) {
        if (chosen->count(flag_name(key)) > 0) set(key, value);
    }
    for (const auto& item : extra[name]) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) {
            avsd_options_free(opts);
            return report_error(AVSD_ERR_USAGE, "--set expects key=value, got '" + item + "'");
        }
        set(item.substr(0, eq), item.substr(eq + 1));
    }
    if (resume) set("resume", "true");
    if (status == AVSD_OK && !config.empty()) {
        const std::string path =
            (config.front() == '/' || workdir.empty()) ? config : workdir + "/" + config;
        status = avsd_options_load_file(opts, path.c_str());
    }
    set("workdir", workdir);

    char* report = nullptr;
    if (status == AVSD_OK) status = avsd_run(name.c_str(), opts, &report);
    avsd_options_free(opts);
    if (status != AVSD_OK) return report_error(status, avsd_last_error());
    std::fputs(report, stdout);
    avsd_string_free(report);
    return AVSD_OK;
}
