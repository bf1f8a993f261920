/*
 * C interface to the l1flow library.
 *
 * Every handle is opaque and owned by the caller once returned; release it with the matching
 * *_free function (NULL is accepted). Functions returning l1f_status report failures through
 * the code and a thread-local diagnostic readable with l1f_last_error(). A successful call
 * clears the diagnostic of the calling thread.
 *
 * Strings returned by accessors are owned by the handle they came from and stay valid until
 * that handle is freed. Strings returned by handle-free functions (version, builtins) are static.
 */
#ifndef L1FLOW_H
#define L1FLOW_H

#include <stddef.h>

#if defined(_WIN32)
#define L1F_API __declspec(dllexport)
#else
#define L1F_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum l1f_status {
  L1F_OK = 0,
  L1F_ERR_INVALID_ARGUMENT = 1,
  L1F_ERR_CONVERGENCE = 2, /* a solver hit its iteration cap or could not certify a step */
  L1F_ERR_CONFIG = 3,
  L1F_ERR_IO = 4,
  L1F_ERR_INTERNAL = 5
} l1f_status;

typedef enum l1f_method { L1F_METHOD_AUTO = 0, L1F_METHOD_MM = 1, L1F_METHOD_DIRECT = 2 } l1f_method;

typedef struct l1f_integrand l1f_integrand;
typedef struct l1f_field l1f_field;
typedef struct l1f_trace l1f_trace;
typedef struct l1f_comparison l1f_comparison;
typedef struct l1f_config l1f_config;
typedef struct l1f_outcome l1f_outcome;

L1F_API const char* l1f_version(void);

/* Diagnostic of the last failed call on this thread, "" when the last call succeeded. */
L1F_API const char* l1f_last_error(void);
L1F_API l1f_status l1f_last_status(void);
/* Last monitored solver quantity for L1F_ERR_CONVERGENCE (e.g. the final primal-dual gap). */
L1F_API double l1f_last_error_value(void);

/* Worker threads for parallel loops; 0 is rejected. Results do not depend on this value. */
L1F_API l1f_status l1f_set_threads(unsigned n);

/* ---- integrands --------------------------------------------------------------------------- */

/* JSON such as "quadratic", {"family":"power","exponent":3} or
 * {"family":"aniso-norm","norm":{"kind":"elliptic","a":1,"b":4}}. */
L1F_API l1f_status l1f_integrand_from_json(const char* json, l1f_integrand** out);
L1F_API void l1f_integrand_free(l1f_integrand* f);

/* ---- grid fields -------------------------------------------------------------------------- */

/* nx * ny values in row-major order (ny = 1 for 1D). Dirichlet grids take the boundary ring in
 * ghost (ghost_count values, see l1f_ghost_count); NULL means a zero trace. */
L1F_API l1f_status l1f_field_create(int nx, int ny, double h, int dirichlet, const double* values,
                                    const double* ghost, l1f_field** out);
L1F_API size_t l1f_ghost_count(int nx, int ny, int dirichlet);
L1F_API l1f_status l1f_field_read_csv(const char* path, l1f_field** out);
L1F_API l1f_status l1f_field_write_csv(const l1f_field* u, const char* path);
L1F_API size_t l1f_field_size(const l1f_field* u);
L1F_API const double* l1f_field_values(const l1f_field* u);
L1F_API l1f_status l1f_field_energy(const l1f_integrand* f, const l1f_field* u, double* energy);
L1F_API void l1f_field_free(l1f_field* u);

/* ---- single steps ------------------------------------------------------------------------- */

typedef struct l1f_step_info {
  double lambda;    /* ||u - v||_1 / tau */
  double objective; /* Phi(u) + ||u - v||_1^2 / (2 tau) */
  double fenchel_gap;
  double el_residual;
  long inner_iters;
  long outer_iters;
} l1f_step_info;

/* One minimizing-movement step from v. info may be NULL. */
L1F_API l1f_status l1f_step(const l1f_integrand* f, const l1f_field* v, double tau, double tol, l1f_method method,
                            l1f_field** u_out, l1f_step_info* info);

/* ---- flows -------------------------------------------------------------------------------- */

typedef struct l1f_flow_step_info {
  double t;
  double lambda;
  double energy;
  double l1_step;
  double fenchel_gap;
  double el_residual;
  int certified;
} l1f_flow_step_info;

/* Runs ceil(T / tau) steps. An aborted run still returns L1F_OK with the partial trace; query
 * l1f_trace_aborted. */
L1F_API l1f_status l1f_flow_run(const l1f_integrand* f, const l1f_field* u0, double tau, double T, double tol,
                                l1f_method method, l1f_trace** out);
L1F_API l1f_status l1f_trace_load(const char* path, l1f_trace** out);
L1F_API l1f_status l1f_trace_save(const l1f_trace* trace, const char* path);
/* Number of stored iterates, including u^0. */
L1F_API size_t l1f_trace_size(const l1f_trace* trace);
L1F_API double l1f_trace_tau(const l1f_trace* trace);
L1F_API int l1f_trace_aborted(const l1f_trace* trace);
/* "" unless aborted. */
L1F_API const char* l1f_trace_abort_reason(const l1f_trace* trace);
L1F_API l1f_status l1f_trace_step(const l1f_trace* trace, size_t n, l1f_flow_step_info* out);
/* Iterate n as a new field. */
L1F_API l1f_status l1f_trace_iterate(const l1f_trace* trace, size_t n, l1f_field** out);
L1F_API void l1f_trace_free(l1f_trace* trace);

/* ---- comparisons -------------------------------------------------------------------------- */

typedef struct l1f_distance {
  double t;
  double sup;
  double l1;
} l1f_distance;

/* Distances between the affine interpolants of two traces on a shared grid, at the multiples of
 * the larger step inside the common window. Mismatched grids give L1F_ERR_INVALID_ARGUMENT. */
L1F_API l1f_status l1f_compare(const l1f_trace* a, const l1f_trace* b, l1f_comparison** out);
L1F_API size_t l1f_comparison_size(const l1f_comparison* c);
L1F_API l1f_status l1f_comparison_at(const l1f_comparison* c, size_t i, l1f_distance* out);
L1F_API void l1f_comparison_free(l1f_comparison* c);

/* ---- geometry ----------------------------------------------------------------------------- */

typedef struct l1f_cheeger_info {
  double r_star;
  double lambda_star;
  double inradius;
  double area;      /* of the Cheeger set */
  int interior;     /* r_star lies strictly below the inradius */
} l1f_cheeger_info;

/* Cheeger set of the convex polygon with n counterclockwise vertices xy[2k], xy[2k+1], for the
 * norm given as JSON ("euclidean", "l1", {"kind":"elliptic",...}) at the given Wulff resolution. */
L1F_API l1f_status l1f_cheeger(const double* xy, size_t n, const char* norm_json, int resolution,
                               l1f_cheeger_info* out);

/* ---- experiments -------------------------------------------------------------------------- */

L1F_API size_t l1f_builtin_count(void);
/* NULL when i is out of range. */
L1F_API const char* l1f_builtin_name(size_t i);
/* JSON text of a builtin config, NULL (with a diagnostic) for unknown names. */
L1F_API const char* l1f_builtin_json(const char* name);

/* A JSON file path or "builtin:<name>". Every input is validated here; nothing is written. */
L1F_API l1f_status l1f_config_load(const char* source, l1f_config** out);
/* Relative CSV paths inside text resolve against base_dir (NULL means "."). */
L1F_API l1f_status l1f_config_parse(const char* text, const char* base_dir, l1f_config** out);
L1F_API const char* l1f_config_name(const l1f_config* c);
L1F_API const char* l1f_config_kind(const l1f_config* c);
L1F_API const char* l1f_config_output(const l1f_config* c);
/* The merged config as JSON. */
L1F_API const char* l1f_config_json(const l1f_config* c);
L1F_API void l1f_config_free(l1f_config* c);

/* Runs into output_dir, or the config's output when NULL. Assertion failures and aborted flows are
 * outcomes, not errors; see l1f_outcome_pass and l1f_outcome_solver_failure. */
L1F_API l1f_status l1f_experiment_run(const l1f_config* c, const char* output_dir, l1f_outcome** out);
L1F_API int l1f_outcome_pass(const l1f_outcome* o);
L1F_API int l1f_outcome_solver_failure(const l1f_outcome* o);
/* "" on success. */
L1F_API const char* l1f_outcome_failure(const l1f_outcome* o);
/* The reports array as JSON. */
L1F_API const char* l1f_outcome_reports_json(const l1f_outcome* o);
L1F_API size_t l1f_outcome_file_count(const l1f_outcome* o);
L1F_API const char* l1f_outcome_file(const l1f_outcome* o, size_t i);
L1F_API void l1f_outcome_free(l1f_outcome* o);

#ifdef __cplusplus
}
#endif

#endif /* L1FLOW_H */
