#ifndef HIVA_H
#define HIVA_H

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as process exit codes. */
typedef enum hiva_status {
    HIVA_OK = 0,
    HIVA_USAGE_ERROR = 1,
    HIVA_VALIDATION_ERROR = 2,
    HIVA_RUNTIME_ERROR = 3
} hiva_status;

typedef struct hiva_session hiva_session;

/* Opens a session from a JSON config file. overrides_json is an optional
   JSON object of dotted-path overrides ({"train.seed": 7}), or NULL. */
int hiva_open(const char* config_path, const char* overrides_json, hiva_session** out);
void hiva_close(hiva_session* s);

/* Message for the last failing call on this session; valid until the next
   call. Never NULL for a live session. */
const char* hiva_last_error(const hiva_session* s);

/* Writes a synthetic dataset plus matching description and vocabulary files
   under out_dir (NULL = the configured data directory). */
int hiva_generate_data(hiva_session* s, const char* out_dir);

/* Runs one training stage and saves a checkpoint. stage is 1 or 2; stage 2
   requires from_checkpoint (a stage-1 or stage-2 checkpoint). If
   log_json_out is non-NULL it receives the per-epoch log as a JSON array
   (free with hiva_string_free). */
int hiva_train(hiva_session* s, int stage, const char* from_checkpoint,
               const char* out_checkpoint, char** log_json_out);

/* Evaluates a checkpoint over the configured dataset. use_stage1_head
   selects the stage-1 prediction path. metrics_csv_path may be NULL.
   report_json_out (optional) receives per-AU F1 values. */
int hiva_evaluate(hiva_session* s, const char* checkpoint, int use_stage1_head,
                  const char* metrics_csv_path, char** report_json_out);

/* Dumps attention maps (JSON + heatmap images) for every sample. */
int hiva_export_attention(hiva_session* s, const char* checkpoint, const char* out_dir);

/* Dumps the per-sample AU relation graph as JSON. */
int hiva_export_graph(hiva_session* s, const char* checkpoint, const char* out_dir);

/* Finite-difference gradient verification; results as a JSON array. */
int hiva_gradcheck(hiva_session* s, char** results_json_out);

/* Parameter counts, MAC estimate and wall time per batch, as JSON. */
int hiva_model_stats(hiva_session* s, char** stats_json_out);

void hiva_string_free(char* str);

#ifdef __cplusplus
}
#endif

#endif /* HIVA_H */
