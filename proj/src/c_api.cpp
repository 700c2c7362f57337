#include "avsd/avsd.h"

#include "avsd/error.hpp"
#include "avsd/pipeline.hpp"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

struct avsd_options {
    avsd::experiment::KeyValues kv;
};

struct avsd_dataset {
    avsd::corpus::Dataset data;
};

struct avsd_model {
    avsd::pipeline::Responder responder;
};

namespace {

thread_local std::string g_last_error;

avsd_status fail(avsd_status status, const std::string& message) {
    g_last_error = message;
    return status;
}

template <typename F>
avsd_status guarded(F&& body) {
    try {
        body();
        g_last_error.clear();
        return AVSD_OK;
    } catch (const avsd::UsageError& e) {
        return fail(AVSD_ERR_USAGE, e.what());
    } catch (const avsd::DataError& e) {
        return fail(AVSD_ERR_DATA, e.what());
    } catch (const avsd::NumericError& e) {
        return fail(AVSD_ERR_NUMERIC, e.what());
    } catch (const std::bad_alloc&) {
        return fail(AVSD_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(AVSD_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(AVSD_ERR_INTERNAL, "unknown error");
    }
}

char* copy_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void need(const void* p, const char* what) {
    if (!p) throw avsd::UsageError(std::string(what) + " is null");
}

std::string join(const avsd::corpus::Tokens& t) {
    std::string out;
    for (const auto& w : t) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

}  // namespace

extern "C" {

const char* avsd_version(void) { return "1.0.0"; }

const char* avsd_last_error(void) { return g_last_error.c_str(); }

void avsd_string_free(char* s) { std::free(s); }

avsd_status avsd_options_new(avsd_options** out) {
    return guarded([&] {
        need(out, "out");
        *out = new avsd_options();
    });
}

void avsd_options_free(avsd_options* opts) { delete opts; }

avsd_status avsd_options_set(avsd_options* opts, const char* key, const char* value) {
    return guarded([&] {
        need(opts, "options");
        need(key, "key");
        need(value, "value");
        if (*key == '\0') throw avsd::UsageError("empty option key");
        opts->kv[key] = value;
    });
}

avsd_status avsd_options_get(const avsd_options* opts, const char* key, const char** value_out) {
    return guarded([&] {
        need(opts, "options");
        need(key, "key");
        need(value_out, "value_out");
        const auto it = opts->kv.find(key);
        *value_out = it == opts->kv.end() ? nullptr : it->second.c_str();
    });
}

avsd_status avsd_options_load_file(avsd_options* opts, const char* path) {
    return guarded([&] {
        need(opts, "options");
        need(path, "path");
        for (const auto& [k, v] : avsd::experiment::load_kv_file(path)) opts->kv[k] = v;
    });
}

avsd_status avsd_run(const char* command, const avsd_options* opts, char** report_out) {
    return guarded([&] {
        need(command, "command");
        need(opts, "options");
        auto kv = opts->kv;
        std::string workdir = ".";
        if (const auto it = kv.find("workdir"); it != kv.end()) {
            workdir = it->second;
            kv.erase(it);
        }
        const auto result = avsd::pipeline::run_command(command, kv, workdir);
        if (report_out) *report_out = copy_string(result.report);
    });
}

avsd_status avsd_ingest(const avsd_options* opts, char** report_out) { return avsd_run("ingest", opts, report_out); }
avsd_status avsd_topics(const avsd_options* opts, char** report_out) { return avsd_run("topics", opts, report_out); }
avsd_status avsd_train(const avsd_options* opts, char** report_out) { return avsd_run("train", opts, report_out); }
avsd_status avsd_eval(const avsd_options* opts, char** report_out) { return avsd_run("eval", opts, report_out); }
avsd_status avsd_generate(const avsd_options* opts, char** report_out) {
    return avsd_run("generate", opts, report_out);
}
avsd_status avsd_audio(const avsd_options* opts, char** report_out) { return avsd_run("audio", opts, report_out); }

avsd_status avsd_dataset_load(const char* path, const char* split, avsd_dataset** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        const auto s = avsd::corpus::parse_split(split ? split : "train");
        if (!s) throw avsd::UsageError(std::string("unknown split '") + split + "'");
        *out = new avsd_dataset{avsd::corpus::load_dataset(path, *s)};
    });
}

void avsd_dataset_free(avsd_dataset* ds) { delete ds; }

avsd_status avsd_dataset_counts(const avsd_dataset* ds, size_t* dialogs, size_t* turns, size_t* words) {
    return guarded([&] {
        need(ds, "dataset");
        if (dialogs) *dialogs = ds->data.stats.num_dialogs;
        if (turns) *turns = ds->data.stats.num_turns;
        if (words) *words = ds->data.stats.num_words;
    });
}

avsd_status avsd_dataset_turn_count(const avsd_dataset* ds, size_t dialog, size_t* turns) {
    return guarded([&] {
        need(ds, "dataset");
        need(turns, "turns");
        if (dialog >= ds->data.dialogs.size()) throw avsd::UsageError("dialog index out of range");
        *turns = ds->data.dialogs[dialog].turns.size();
    });
}

avsd_status avsd_model_load(const char* checkpoint, const char* workdir, avsd_model** out) {
    return guarded([&] {
        need(checkpoint, "checkpoint");
        need(out, "out");
        *out = new avsd_model{avsd::pipeline::Responder(checkpoint, workdir ? workdir : ".")};
    });
}

void avsd_model_free(avsd_model* model) { delete model; }

avsd_status avsd_model_vocab_size(const avsd_model* model, size_t* out) {
    return guarded([&] {
        need(model, "model");
        need(out, "out");
        *out = model->responder.vocabulary().size();
    });
}

avsd_status avsd_model_answer(const avsd_model* model, const avsd_dataset* ds, size_t dialog, size_t turn,
                              size_t beam_width, char** answer_out) {
    return guarded([&] {
        need(model, "model");
        need(ds, "dataset");
        need(answer_out, "answer_out");
        if (dialog >= ds->data.dialogs.size()) throw avsd::UsageError("dialog index out of range");
        *answer_out = copy_string(join(model->responder.answer(ds->data.dialogs[dialog], turn, beam_width)));
    });
}

}  // extern "C"
