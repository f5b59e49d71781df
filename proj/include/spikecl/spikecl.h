#ifndef SPIKECL_H
#define SPIKECL_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define SPIKECL_API __declspec(dllexport)
#else
#define SPIKECL_API __attribute__((visibility("default")))
#endif

typedef enum spikecl_status {
  SPIKECL_OK = 0,
  SPIKECL_ERR_DIMENSION = 1,
  SPIKECL_ERR_FORMAT = 2,
  SPIKECL_ERR_LENGTH = 3,
  SPIKECL_ERR_VALIDATION = 4,
  SPIKECL_ERR_EMPTY_SUBSET = 5,
  SPIKECL_ERR_CONFIG = 6,
  SPIKECL_ERR_CONVERSION = 7,
  SPIKECL_ERR_NUMERIC = 8,
  SPIKECL_ERR_IO = 9,
  SPIKECL_ERR_ARGUMENT = 100, /* null handle or bad argument */
  SPIKECL_ERR_INTERNAL = 101
} spikecl_status;

typedef enum spikecl_split { SPIKECL_TRAIN = 0, SPIKECL_TEST = 1 } spikecl_split;

typedef struct spikecl_config spikecl_config;
typedef struct spikecl_dataset spikecl_dataset;
typedef struct spikecl_model spikecl_model;
typedef struct spikecl_network spikecl_network;
typedef struct spikecl_report spikecl_report;

typedef void (*spikecl_log_fn)(const char* message, void* user);

SPIKECL_API const char* spikecl_version(void);
SPIKECL_API const char* spikecl_status_string(spikecl_status status);
/* Message of the last failed call on this thread; "" after a success. */
SPIKECL_API const char* spikecl_last_error(void);

/* Text outputs: `needed` (optional) receives the length including the
 * terminating NUL. A buffer that is too small yields SPIKECL_ERR_LENGTH and
 * is left untouched. */

/* config */
SPIKECL_API spikecl_status spikecl_config_new(spikecl_config** out);
SPIKECL_API void spikecl_config_free(spikecl_config* cfg);
SPIKECL_API spikecl_status spikecl_config_set(spikecl_config* cfg, const char* key,
                                              const char* value);
SPIKECL_API spikecl_status spikecl_config_get(const spikecl_config* cfg, const char* key, char* buf,
                                              size_t cap, size_t* needed);
SPIKECL_API spikecl_status spikecl_config_load_file(spikecl_config* cfg, const char* path);
SPIKECL_API spikecl_status spikecl_config_to_text(const spikecl_config* cfg, char* buf, size_t cap,
                                                  size_t* needed);
SPIKECL_API spikecl_status spikecl_config_validate(const spikecl_config* cfg);
SPIKECL_API size_t spikecl_config_key_count(void);
SPIKECL_API const char* spikecl_config_key(size_t index);

/* datasets: the source and directory come from the config */
SPIKECL_API spikecl_status spikecl_dataset_load(const spikecl_config* cfg, spikecl_split split,
                                                spikecl_dataset** out);
SPIKECL_API spikecl_status spikecl_dataset_load_files(const char* images_path,
                                                      const char* labels_path, spikecl_split split,
                                                      spikecl_dataset** out);
SPIKECL_API void spikecl_dataset_free(spikecl_dataset* ds);
SPIKECL_API size_t spikecl_dataset_size(const spikecl_dataset* ds);
SPIKECL_API size_t spikecl_dataset_rows(const spikecl_dataset* ds);
SPIKECL_API size_t spikecl_dataset_cols(const spikecl_dataset* ds);
SPIKECL_API spikecl_status spikecl_dataset_label(const spikecl_dataset* ds, size_t index,
                                                 int* label);
/* counts[10] */
SPIKECL_API spikecl_status spikecl_dataset_histogram(const spikecl_dataset* ds, size_t* counts);
/* out receives rows·cols pixels scaled to [0,1]; a smaller cap is SPIKECL_ERR_LENGTH */
SPIKECL_API spikecl_status spikecl_dataset_image(const spikecl_dataset* ds, size_t index,
                                                 double* out, size_t cap);

/* models */
SPIKECL_API spikecl_status spikecl_model_new(const spikecl_config* cfg, spikecl_model** out);
SPIKECL_API spikecl_status spikecl_model_load(const char* path, spikecl_model** out);
SPIKECL_API spikecl_status spikecl_model_save(const spikecl_model* model, const char* path);
SPIKECL_API void spikecl_model_free(spikecl_model* model);
SPIKECL_API size_t spikecl_model_parameter_count(const spikecl_model* model);
SPIKECL_API size_t spikecl_increment_count(const spikecl_config* cfg, const spikecl_dataset* train);
/* Trains increment `increment` (0-based) of the config's schedule; the last
 * epoch's mean loss goes to `final_loss` when non-null. */
SPIKECL_API spikecl_status spikecl_model_train_increment(spikecl_model* model,
                                                         const spikecl_config* cfg,
                                                         const spikecl_dataset* train,
                                                         size_t increment, double* final_loss,
                                                         spikecl_log_fn log, void* user);
SPIKECL_API spikecl_status spikecl_model_accuracy(const spikecl_model* model,
                                                  const spikecl_dataset* ds, double* accuracy);
/* probs[10] */
SPIKECL_API spikecl_status spikecl_model_predict(const spikecl_model* model,
                                                 const spikecl_dataset* ds, size_t index,
                                                 double* probs);

/* spiking networks */
SPIKECL_API spikecl_status spikecl_network_convert(const spikecl_model* model,
                                                   const spikecl_config* cfg,
                                                   spikecl_network** out);
SPIKECL_API spikecl_status spikecl_network_load(const char* path, spikecl_network** out);
SPIKECL_API spikecl_status spikecl_network_save(const spikecl_network* net, const char* path);
SPIKECL_API void spikecl_network_free(spikecl_network* net);
SPIKECL_API spikecl_status spikecl_network_accuracy(const spikecl_network* net,
                                                    const spikecl_config* cfg,
                                                    const spikecl_dataset* ds, double* accuracy);
/* Simulates one image with the config's SimConfig and trace layer. When
 * out_dir is non-null it receives trace.tsv, raster.svg and frames.svg.
 * probs[10]. */
SPIKECL_API spikecl_status spikecl_network_simulate(const spikecl_network* net,
                                                    const spikecl_config* cfg,
                                                    const spikecl_dataset* ds, size_t index,
                                                    const char* out_dir, double* probs,
                                                    int* predicted, size_t* spike_count);

/* experiments and reports */
/* Runs every increment; when out_dir is non-null writes the tables, report
 * json, figures, per-example probabilities and timings there. */
SPIKECL_API spikecl_status spikecl_run_experiment(const spikecl_config* cfg, const char* out_dir,
                                                  spikecl_log_fn log, void* user,
                                                  spikecl_report** out);
SPIKECL_API spikecl_status spikecl_report_load(const char* path, spikecl_report** out);
SPIKECL_API void spikecl_report_free(spikecl_report* report);
SPIKECL_API spikecl_status spikecl_report_emit(const spikecl_report* report, const char* out_dir);
/* CSV text of one model's table ("ann" or "snn"). */
SPIKECL_API spikecl_status spikecl_report_table(const spikecl_report* report, const char* tag,
                                                char* buf, size_t cap, size_t* needed);
SPIKECL_API size_t spikecl_report_increments(const spikecl_report* report);
/* column is one of the table columns, e.g. "full_test_acc"; increment is
 * 1-based. */
SPIKECL_API spikecl_status spikecl_report_value(const spikecl_report* report, const char* tag,
                                                size_t increment, const char* column,
                                                double* value);

#ifdef __cplusplus
}
#endif

#endif
