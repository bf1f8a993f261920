/* The C API compiled as C: handle life cycles, error reporting and a small end-to-end run. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "l1flow.h"

static int failures = 0;

#define EXPECT(cond)                                                     \
  do {                                                                   \
    if (!(cond)) {                                                       \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                        \
    }                                                                    \
  } while (0)

int main(void) {
  EXPECT(strcmp(l1f_version(), "") != 0);

  /* errors are reported through the status and the thread-local message */
  l1f_integrand* bad = NULL;
  EXPECT(l1f_integrand_from_json("\"cubic\"", &bad) == L1F_ERR_CONFIG);
  EXPECT(bad == NULL);
  EXPECT(l1f_last_status() == L1F_ERR_CONFIG);
  EXPECT(strstr(l1f_last_error(), "cubic") != NULL);
  EXPECT(l1f_integrand_from_json("{", &bad) == L1F_ERR_INVALID_ARGUMENT);
  EXPECT(l1f_integrand_from_json(NULL, &bad) == L1F_ERR_INVALID_ARGUMENT);
  EXPECT(l1f_set_threads(0) == L1F_ERR_INVALID_ARGUMENT);

  l1f_integrand* quad = NULL;
  EXPECT(l1f_integrand_from_json("\"quadratic\"", &quad) == L1F_OK);
  EXPECT(strcmp(l1f_last_error(), "") == 0);

  /* u(x) = sin(pi x) on a Dirichlet grid */
  enum { N = 32 };
  double v[N];
  const double h = 1.0 / (N + 1);
  for (int i = 0; i < N; ++i) v[i] = sin(3.141592653589793 * (i + 1) * h);
  EXPECT(l1f_ghost_count(N, 1, 1) == 2);
  l1f_field* u0 = NULL;
  EXPECT(l1f_field_create(N, 1, h, 1, v, NULL, &u0) == L1F_OK);
  EXPECT(l1f_field_size(u0) == N);
  EXPECT(l1f_field_values(u0)[3] == v[3]);
  double energy = 0.0;
  EXPECT(l1f_field_energy(quad, u0, &energy) == L1F_OK);
  EXPECT(fabs(energy - 3.141592653589793 * 3.141592653589793 / 4) < 1e-2);
  EXPECT(l1f_field_create(0, 1, h, 1, v, NULL, &u0) == L1F_ERR_INVALID_ARGUMENT);

  l1f_field* u1 = NULL;
  l1f_step_info info;
  EXPECT(l1f_step(quad, u0, 1e-2, 1e-10, L1F_METHOD_AUTO, &u1, &info) == L1F_OK);
  EXPECT(info.lambda > 0.0);
  l1f_field* u1d = NULL;
  l1f_step_info infod;
  EXPECT(l1f_step(quad, u0, 1e-2, 1e-10, L1F_METHOD_DIRECT, &u1d, &infod) == L1F_OK);
  EXPECT(fabs(info.objective - infod.objective) < 1e-8 * (1 + info.objective));
  l1f_field_free(u1);
  l1f_field_free(u1d);

  l1f_trace* a = NULL;
  l1f_trace* b = NULL;
  EXPECT(l1f_flow_run(quad, u0, 1e-2, 0.1, 1e-10, L1F_METHOD_AUTO, &a) == L1F_OK);
  EXPECT(l1f_trace_size(a) == 11);
  EXPECT(!l1f_trace_aborted(a));
  EXPECT(strcmp(l1f_trace_abort_reason(a), "") == 0);
  l1f_flow_step_info s0, s1;
  EXPECT(l1f_trace_step(a, 1, &s0) == L1F_OK);
  EXPECT(l1f_trace_step(a, 2, &s1) == L1F_OK);
  EXPECT(s1.lambda <= s0.lambda + 1e-8);
  EXPECT(s1.energy <= s0.energy);
  EXPECT(l1f_trace_step(a, 11, &s1) == L1F_ERR_INVALID_ARGUMENT);
  l1f_field* it = NULL;
  EXPECT(l1f_trace_iterate(a, 0, &it) == L1F_OK);
  EXPECT(l1f_field_values(it)[5] == v[5]);
  l1f_field_free(it);

  const char* path = "capi_trace.json";
  EXPECT(l1f_trace_save(a, path) == L1F_OK);
  EXPECT(l1f_trace_load(path, &b) == L1F_OK);
  remove(path);
  l1f_comparison* c = NULL;
  EXPECT(l1f_compare(a, b, &c) == L1F_OK);
  EXPECT(l1f_comparison_size(c) == 11);
  for (size_t i = 0; i < l1f_comparison_size(c); ++i) {
    l1f_distance d;
    EXPECT(l1f_comparison_at(c, i, &d) == L1F_OK);
    EXPECT(d.sup == 0.0 && d.l1 == 0.0);
  }
  l1f_comparison_free(c);
  EXPECT(l1f_trace_load("/nonexistent/trace.json", &b) == L1F_ERR_IO);

  /* geometry */
  const double square[] = {0, 0, 1, 0, 1, 1, 0, 1};
  l1f_cheeger_info ch;
  EXPECT(l1f_cheeger(square, 4, "\"euclidean\"", 256, &ch) == L1F_OK);
  EXPECT(fabs(ch.lambda_star - (2 + sqrt(3.141592653589793))) < 4e-3);
  EXPECT(ch.interior == 1);
  const double cw[] = {0, 0, 0, 1, 1, 1, 1, 0};
  EXPECT(l1f_cheeger(cw, 4, "\"euclidean\"", 256, &ch) == L1F_ERR_INVALID_ARGUMENT);

  /* experiments */
  EXPECT(l1f_builtin_count() >= 5);
  EXPECT(l1f_builtin_name(l1f_builtin_count()) == NULL);
  EXPECT(l1f_builtin_json("two-balls") != NULL);
  EXPECT(l1f_builtin_json("nope") == NULL);
  EXPECT(l1f_last_status() == L1F_ERR_CONFIG);

  l1f_config* cfg = NULL;
  EXPECT(l1f_config_parse("{\"builtin\": \"two-balls\", \"tau\": -1}", NULL, &cfg) == L1F_ERR_CONFIG);
  EXPECT(l1f_config_load("builtin:two-balls", &cfg) == L1F_OK);
  EXPECT(strcmp(l1f_config_name(cfg), "two-balls") == 0);
  EXPECT(strcmp(l1f_config_kind(cfg), "geom") == 0);
  EXPECT(strstr(l1f_config_json(cfg), "ball_steps") != NULL);
  l1f_outcome* o = NULL;
  EXPECT(l1f_experiment_run(cfg, "capi_two_balls", &o) == L1F_OK);
  EXPECT(l1f_outcome_pass(o) == 1);
  EXPECT(l1f_outcome_solver_failure(o) == 0);
  EXPECT(strcmp(l1f_outcome_failure(o), "") == 0);
  EXPECT(strstr(l1f_outcome_reports_json(o), "one-ball-moves") != NULL);
  EXPECT(l1f_outcome_file_count(o) == 2);
  for (size_t i = 0; i < l1f_outcome_file_count(o); ++i) {
    char p[256];
    snprintf(p, sizeof p, "capi_two_balls/%s", l1f_outcome_file(o, i));
    remove(p);
  }
  remove("capi_two_balls");
  l1f_outcome_free(o);
  l1f_config_free(cfg);

  l1f_trace_free(a);
  l1f_trace_free(b);
  l1f_field_free(u0);
  l1f_integrand_free(quad);
  l1f_integrand_free(NULL);

  if (failures) {
    fprintf(stderr, "%d failures\n", failures);
    return 1;
  }
  printf("C API: all checks passed\n");
  return 0;
}
