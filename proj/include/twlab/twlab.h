#ifndef TWLAB_H
#define TWLAB_H

#include <stddef.h>

#if defined(_WIN32)
#  if defined(TWLAB_BUILDING)
#    define TW_API __declspec(dllexport)
#  else
#    define TW_API __declspec(dllimport)
#  endif
#else
#  define TW_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Values 1..14 mirror the core error categories. */
typedef enum tw_status {
  TW_OK = 0,
  TW_E_INVALID_ARGUMENT = 1,
  TW_E_DOMAIN = 2,
  TW_E_PARAMETER = 3,
  TW_E_BRACKET = 4,
  TW_E_RANGE = 5,
  TW_E_CONVERGENCE = 6,
  TW_E_SUB_THRESHOLD = 7,
  TW_E_MONOTONICITY_BREACH = 8,
  TW_E_CONSTRUCTION_INVALID = 9,
  TW_E_BLOW_UP = 10,
  TW_E_FRAME_SHIFT = 11,
  TW_E_FIT_DOMAIN = 12,
  TW_E_CONFIG = 13,
  TW_E_IO = 14,
  TW_E_INTERNAL = 99
} tw_status;

typedef struct tw_model tw_model;
typedef struct tw_profile tw_profile;
typedef struct tw_experiment tw_experiment;

typedef struct tw_holling2_params {
  double a1, a2, d1, d2;
  double alpha1, alpha2, beta1, beta2, gamma1, gamma2;
} tw_holling2_params;

typedef struct tw_ricker_params {
  double a, a1, a2, d1, d2;
  double p, q, m;
} tw_ricker_params;

TW_API const char* tw_version(void);
TW_API const char* tw_status_name(tw_status s);

/* Message of the last failed call on this thread; "" if none. */
TW_API const char* tw_last_error(void);

/* Process exit status for a failed call (1 config, 2 numeric, 11 sub-threshold). */
TW_API int tw_exit_status(tw_status s);

/* Strings returned through char** out-parameters are owned by the caller. */
TW_API void tw_string_free(char* s);

/* Fill *p with the library defaults. */
TW_API void tw_holling2_defaults(tw_holling2_params* p);
TW_API void tw_ricker_defaults(tw_ricker_params* p);

/* ---- models ---- */

TW_API tw_status tw_model_holling2(const tw_holling2_params* p, tw_model** out);
TW_API tw_status tw_model_ricker(const tw_ricker_params* p, tw_model** out);

/* f_i(u) = constant[i] + sum_j linear[i*n+j] u_j + sum_jk quadratic[(i*n+j)*n+k] u_j u_k.
   constant and quadratic may be NULL (zero). */
TW_API tw_status tw_model_custom(const char* name, size_t n, const double* d, const double* K,
                                 const double* constant, const double* linear, const double* quadratic,
                                 tw_model** out);
TW_API void tw_model_free(tw_model* m);

TW_API size_t tw_model_components(const tw_model* m);
TW_API tw_status tw_model_eval(const tw_model* m, const double* u, double* out);

/* Hypothesis audit; *all_pass is 1 when no applicable hypothesis failed. json may be NULL. */
TW_API tw_status tw_model_audit(const tw_model* m, int samples_per_axis, int* all_pass, char** json);

TW_API tw_status tw_model_c_star(const tw_model* m, double* c_star);

/* Spectral record at speed c; epsilon <= 0 selects the default. */
TW_API tw_status tw_model_spectral(const tw_model* m, double c, double epsilon, char** json);

/* ---- profiles ---- */

typedef struct tw_profile_options {
  double c;          /* wave speed, must exceed c* */
  int m;             /* nodes per unit length */
  double L;          /* half width of the window */
  double tol;
  int max_iter;
} tw_profile_options;

TW_API void tw_profile_defaults(tw_profile_options* o);
TW_API tw_status tw_profile_solve(const tw_model* m, const tw_profile_options* o, tw_profile** out);
TW_API tw_status tw_profile_read(const char* path, tw_profile** out);
TW_API tw_status tw_profile_write(const tw_profile* p, const char* path);
TW_API void tw_profile_free(tw_profile* p);

TW_API size_t tw_profile_nodes(const tw_profile* p);
TW_API size_t tw_profile_components(const tw_profile* p);
TW_API double tw_profile_speed(const tw_profile* p);
TW_API int tw_profile_iterations(const tw_profile* p);

/* xi has room for nodes values (may be NULL); phi for components*nodes, component-major. */
TW_API tw_status tw_profile_values(const tw_profile* p, double* xi, double* phi);

/* Max residual of the profile equation on interior nodes. */
TW_API tw_status tw_profile_residual(const tw_model* m, const tw_profile* p, double* residual);

/* ---- experiments ---- */

TW_API tw_status tw_experiment_load(const char* path, tw_experiment** out);
TW_API tw_status tw_experiment_parse(const char* text, const char* source, tw_experiment** out);
TW_API void tw_experiment_free(tw_experiment* e);

TW_API tw_status tw_experiment_set_output_dir(tw_experiment* e, const char* dir);

/* stage: audit, spectral, wave, evolve, stability or full. Writes artifacts and
   manifest.json. *exit_code receives the process exit status of the run;
   manifest (may be NULL) receives the manifest text. */
TW_API tw_status tw_experiment_run(tw_experiment* e, const char* stage, int* exit_code, char** manifest);

TW_API tw_status tw_schema(char** json);

#ifdef __cplusplus
}
#endif

#endif
