#ifndef AVSD_AVSD_H
#define AVSD_AVSD_H

/* C interface to the dialog toolkit. Every call returns an avsd_status;
 * the message for the last failure on the calling thread is available from
 * avsd_last_error(). Strings handed out by the library are released with
 * avsd_string_free(). */

#include <stddef.h>

#if defined(_WIN32)
#define AVSD_API __declspec(dllexport)
#else
#define AVSD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum avsd_status {
    AVSD_OK = 0,
    AVSD_ERR_USAGE = 1,
    AVSD_ERR_DATA = 2,
    AVSD_ERR_NUMERIC = 3,
    AVSD_ERR_INTERNAL = 4
} avsd_status;

typedef struct avsd_options avsd_options;
typedef struct avsd_dataset avsd_dataset;
typedef struct avsd_model avsd_model;

AVSD_API const char* avsd_version(void);
/* Message of the last failed call on this thread, "" when none. */
AVSD_API const char* avsd_last_error(void);
AVSD_API void avsd_string_free(char* s);

/* ---- option bags ---------------------------------------------------- */

AVSD_API avsd_status avsd_options_new(avsd_options** out);
AVSD_API void avsd_options_free(avsd_options* opts);
AVSD_API avsd_status avsd_options_set(avsd_options* opts, const char* key, const char* value);
/* *value_out is NULL when the key is absent; the pointer stays valid until
 * the key is changed or the bag freed. */
AVSD_API avsd_status avsd_options_get(const avsd_options* opts, const char* key, const char** value_out);
/* Reads "key = value" lines; keys from the file replace existing ones. */
AVSD_API avsd_status avsd_options_load_file(avsd_options* opts, const char* path);

/* ---- commands ------------------------------------------------------- */

/* Runs one of ingest, topics, train, eval, generate, audio. The "workdir"
 * key (default ".") is the root for relative paths; the rest are command
 * options. report_out may be NULL. */
AVSD_API avsd_status avsd_run(const char* command, const avsd_options* opts, char** report_out);

AVSD_API avsd_status avsd_ingest(const avsd_options* opts, char** report_out);
AVSD_API avsd_status avsd_topics(const avsd_options* opts, char** report_out);
AVSD_API avsd_status avsd_train(const avsd_options* opts, char** report_out);
AVSD_API avsd_status avsd_eval(const avsd_options* opts, char** report_out);
AVSD_API avsd_status avsd_generate(const avsd_options* opts, char** report_out);
AVSD_API avsd_status avsd_audio(const avsd_options* opts, char** report_out);

/* ---- datasets ------------------------------------------------------- */

/* split is "train", "val" or "test". */
AVSD_API avsd_status avsd_dataset_load(const char* path, const char* split, avsd_dataset** out);
AVSD_API void avsd_dataset_free(avsd_dataset* ds);
AVSD_API avsd_status avsd_dataset_counts(const avsd_dataset* ds, size_t* dialogs, size_t* turns, size_t* words);
AVSD_API avsd_status avsd_dataset_turn_count(const avsd_dataset* ds, size_t dialog, size_t* turns);

/* ---- models --------------------------------------------------------- */

AVSD_API avsd_status avsd_model_load(const char* checkpoint, const char* workdir, avsd_model** out);
AVSD_API void avsd_model_free(avsd_model* model);
AVSD_API avsd_status avsd_model_vocab_size(const avsd_model* model, size_t* out);
/* Space-separated answer to a turn of a loaded dialog. beam_width 0 uses
 * the checkpoint setting. */
AVSD_API avsd_status avsd_model_answer(const avsd_model* model, const avsd_dataset* ds, size_t dialog, size_t turn,
                                       size_t beam_width, char** answer_out);

#ifdef __cplusplus
}
#endif

#endif
