#include "l1flow.h"

#include <cmath>
#include <fstream>
#include <new>
#include <string>
#include <vector>

#include "json_io.hpp"
#include "l1flow/common.hpp"
#include "l1flow/experiment.hpp"
#include "l1flow/flow.hpp"
#include "l1flow/geom.hpp"

struct l1f_integrand {
  l1flow::IntegrandSpec spec;
};
struct l1f_field {
  l1flow::GridFunction u;
};
struct l1f_trace {
  l1flow::FlowTrace trace;
};
struct l1f_comparison {
  std::vector<l1flow::TraceDistance> d;
};
struct l1f_config {
  l1flow::ExperimentConfig config;
  std::string kind;
};
struct l1f_outcome {
  l1flow::ExperimentOutcome outcome;
  std::string reports;
};

namespace {

using l1flow::ErrorCode;

struct LastError {
  l1f_status status = L1F_OK;
  std::string message;
  double value = 0.0;
};

thread_local LastError last_error;

l1f_status record(l1f_status s, std::string message, double value = 0.0) {
  last_error.status = s;
  last_error.message = std::move(message);
  last_error.value = value;
  return s;
}

l1f_status status_of(ErrorCode c) {
  switch (c) {
    case ErrorCode::invalid_argument:
      return L1F_ERR_INVALID_ARGUMENT;
    case ErrorCode::convergence_failure:
      return L1F_ERR_CONVERGENCE;
    case ErrorCode::configuration_error:
      return L1F_ERR_CONFIG;
    case ErrorCode::io_error:
      return L1F_ERR_IO;
    case ErrorCode::internal:
      return L1F_ERR_INTERNAL;
  }
  return L1F_ERR_INTERNAL;
}

// Runs body, translating exceptions into a status and the thread-local diagnostic.
template <class Body>
l1f_status guarded(Body&& body) {
  last_error = {};
  try {
    body();
    return L1F_OK;
  } catch (const l1flow::Error& e) {
    return record(status_of(e.code()), e.what(), e.last_value());
  } catch (const nlohmann::json::exception& e) {
    return record(L1F_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::bad_alloc&) {
    return record(L1F_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return record(L1F_ERR_INTERNAL, e.what());
  } catch (...) {
    return record(L1F_ERR_INTERNAL, "unknown exception");
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) l1flow::fail(ErrorCode::invalid_argument, std::string(what) + " is NULL");
}

l1flow::StepMethod method_of(l1f_method m) {
  switch (m) {
    case L1F_METHOD_AUTO:
      return l1flow::StepMethod::automatic;
    case L1F_METHOD_MM:
      return l1flow::StepMethod::mm;
    case L1F_METHOD_DIRECT:
      return l1flow::StepMethod::direct;
  }
  l1flow::fail(ErrorCode::invalid_argument, "unknown step method");
}

std::ifstream open_in(const char* path) {
  need(path, "path");
  std::ifstream is(path);
  if (!is) l1flow::fail(ErrorCode::io_error, std::string("cannot open ") + path);
  return is;
}

std::ofstream open_out(const char* path) {
  need(path, "path");
  std::ofstream os(path, std::ios::binary);
  if (!os) l1flow::fail(ErrorCode::io_error, std::string("cannot write ") + path);
  return os;
}

const std::vector<std::string>& builtin_table() {
  static const std::vector<std::string> names = l1flow::builtin_names();
  return names;
}

const std::vector<std::string>& builtin_texts() {
  static const std::vector<std::string> texts = [] {
    std::vector<std::string> t;
    for (const auto& n : builtin_table()) t.push_back(l1flow::builtin_config(n));
    return t;
  }();
  return texts;
}

}  // namespace

extern "C" {

const char* l1f_version(void) { return "0.1.0"; }

const char* l1f_last_error(void) { return last_error.message.c_str(); }
l1f_status l1f_last_status(void) { return last_error.status; }
double l1f_last_error_value(void) { return last_error.value; }

l1f_status l1f_set_threads(unsigned n) {
  return guarded([&] {
    if (n == 0) l1flow::fail(ErrorCode::invalid_argument, "thread count must be positive");
    l1flow::set_thread_count(n);
  });
}

// ---- integrands

l1f_status l1f_integrand_from_json(const char* json, l1f_integrand** out) {
  return guarded([&] {
    need(json, "json");
    need(out, "out");
    const auto j = l1flow::detail::Json::parse(json);
    *out = new l1f_integrand{l1flow::detail::spec_from_json(j)};
  });
}

void l1f_integrand_free(l1f_integrand* f) { delete f; }

// ---- fields

size_t l1f_ghost_count(int nx, int ny, int dirichlet) {
  if (nx < 1 || ny < 1) return 0;
  l1flow::GridGeometry g{nx, ny, 1.0, dirichlet ? l1flow::Boundary::dirichlet : l1flow::Boundary::neumann};
  return g.ghost_count();
}

l1f_status l1f_field_create(int nx, int ny, double h, int dirichlet, const double* values, const double* ghost,
                            l1f_field** out) {
  return guarded([&] {
    need(values, "values");
    need(out, "out");
    l1flow::require(nx >= 1 && ny >= 1 && h > 0.0 && std::isfinite(h), "grid dimensions and spacing must be positive");
    l1flow::GridGeometry g{nx, ny, h, dirichlet ? l1flow::Boundary::dirichlet : l1flow::Boundary::neumann};
    std::vector<double> v(values, values + g.node_count());
    std::vector<double> gh(g.ghost_count(), 0.0);
    if (ghost != nullptr) gh.assign(ghost, ghost + g.ghost_count());
    *out = new l1f_field{l1flow::GridFunction(g, std::move(v), std::move(gh))};
  });
}

l1f_status l1f_field_read_csv(const char* path, l1f_field** out) {
  return guarded([&] {
    need(out, "out");
    auto is = open_in(path);
    *out = new l1f_field{l1flow::read_grid_csv(is)};
  });
}

l1f_status l1f_field_write_csv(const l1f_field* u, const char* path) {
  return guarded([&] {
    need(u, "field");
    auto os = open_out(path);
    l1flow::write_csv(os, u->u);
    if (!os) l1flow::fail(ErrorCode::io_error, std::string("write failed for ") + path);
  });
}

size_t l1f_field_size(const l1f_field* u) { return u ? u->u.size() : 0; }
const double* l1f_field_values(const l1f_field* u) { return u ? u->u.values().data() : nullptr; }

l1f_status l1f_field_energy(const l1f_integrand* f, const l1f_field* u, double* energy) {
  return guarded([&] {
    need(f, "integrand");
    need(u, "field");
    need(energy, "energy");
    *energy = l1flow::eval_energy(f->spec, u->u);
  });
}

void l1f_field_free(l1f_field* u) { delete u; }

// ---- steps

l1f_status l1f_step(const l1f_integrand* f, const l1f_field* v, double tau, double tol, l1f_method method,
                    l1f_field** u_out, l1f_step_info* info) {
  return guarded([&] {
    need(f, "integrand");
    need(v, "field");
    need(u_out, "u_out");
    auto m = method_of(method);
    if (m == l1flow::StepMethod::automatic)
      m = f->spec.smooth() ? l1flow::StepMethod::mm : l1flow::StepMethod::direct;
    const auto r = m == l1flow::StepMethod::mm ? l1flow::mm_step(f->spec, v->u, tau, tol)
                                                : l1flow::direct_step(f->spec, v->u, tau, tol);
    if (info != nullptr) {
      *info = {r.lambda, r.objective, r.fenchel_gap, r.el_residual, r.inner_iters, r.outer_iters};
    }
    *u_out = new l1f_field{r.u};
  });
}

// ---- flows

l1f_status l1f_flow_run(const l1f_integrand* f, const l1f_field* u0, double tau, double T, double tol,
                        l1f_method method, l1f_trace** out) {
  return guarded([&] {
    need(f, "integrand");
    need(u0, "field");
    need(out, "out");
    l1flow::FlowOptions o;
    o.method = method_of(method);
    *out = new l1f_trace{l1flow::run_flow(f->spec, u0->u, tau, T, tol, o)};
  });
}

l1f_status l1f_trace_load(const char* path, l1f_trace** out) {
  return guarded([&] {
    need(out, "out");
    auto is = open_in(path);
    *out = new l1f_trace{l1flow::read_trace_json(is)};
  });
}

l1f_status l1f_trace_save(const l1f_trace* trace, const char* path) {
  return guarded([&] {
    need(trace, "trace");
    auto os = open_out(path);
    l1flow::write_trace_json(os, trace->trace);
    if (!os) l1flow::fail(ErrorCode::io_error, std::string("write failed for ") + path);
  });
}

size_t l1f_trace_size(const l1f_trace* t) { return t ? t->trace.steps.size() : 0; }
double l1f_trace_tau(const l1f_trace* t) { return t ? t->trace.tau : 0.0; }
int l1f_trace_aborted(const l1f_trace* t) { return t && t->trace.aborted ? 1 : 0; }
const char* l1f_trace_abort_reason(const l1f_trace* t) { return t ? t->trace.abort_reason.c_str() : ""; }

l1f_status l1f_trace_step(const l1f_trace* t, size_t n, l1f_flow_step_info* out) {
  return guarded([&] {
    need(t, "trace");
    need(out, "out");
    l1flow::require(n < t->trace.steps.size(), "step index out of range");
    const auto& s = t->trace.steps[n];
    *out = {t->trace.time(n), s.lambda, s.energy, s.l1_step, s.fenchel_gap, s.el_residual, s.certified ? 1 : 0};
  });
}

l1f_status l1f_trace_iterate(const l1f_trace* t, size_t n, l1f_field** out) {
  return guarded([&] {
    need(t, "trace");
    need(out, "out");
    l1flow::require(n < t->trace.steps.size(), "step index out of range");
    *out = new l1f_field{t->trace.steps[n].u};
  });
}

void l1f_trace_free(l1f_trace* t) { delete t; }

// ---- comparisons

l1f_status l1f_compare(const l1f_trace* a, const l1f_trace* b, l1f_comparison** out) {
  return guarded([&] {
    need(a, "trace a");
    need(b, "trace b");
    need(out, "out");
    *out = new l1f_comparison{l1flow::compare_traces(a->trace, b->trace)};
  });
}

size_t l1f_comparison_size(const l1f_comparison* c) { return c ? c->d.size() : 0; }

l1f_status l1f_comparison_at(const l1f_comparison* c, size_t i, l1f_distance* out) {
  return guarded([&] {
    need(c, "comparison");
    need(out, "out");
    l1flow::require(i < c->d.size(), "comparison index out of range");
    *out = {c->d[i].t, c->d[i].sup, c->d[i].l1};
  });
}

void l1f_comparison_free(l1f_comparison* c) { delete c; }

// ---- geometry

l1f_status l1f_cheeger(const double* xy, size_t n, const char* norm_json, int resolution, l1f_cheeger_info* out) {
  return guarded([&] {
    need(xy, "vertices");
    need(norm_json, "norm");
    need(out, "out");
    l1flow::require(resolution >= 16, "Wulff resolution must be at least 16");
    std::vector<l1flow::Vec2> v;
    for (size_t k = 0; k < n; ++k) v.push_back({xy[2 * k], xy[2 * k + 1]});
    const l1flow::ConvexPolygon E(std::move(v));
    const auto W = l1flow::wulff_from_norm(l1flow::detail::norm_from_json(l1flow::detail::Json::parse(norm_json)),
                                           resolution);
    const auto c = l1flow::cheeger_scan(E, W);
    *out = {c.r, c.lambda, c.inradius, c.set.area(), c.interior ? 1 : 0};
  });
}

// ---- experiments

size_t l1f_builtin_count(void) { return builtin_table().size(); }

const char* l1f_builtin_name(size_t i) { return i < builtin_table().size() ? builtin_table()[i].c_str() : nullptr; }

const char* l1f_builtin_json(const char* name) {
  const char* result = nullptr;
  guarded([&] {
    need(name, "name");
    const auto& names = builtin_table();
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) result = builtin_texts()[i].c_str();
    if (result == nullptr) l1flow::fail(ErrorCode::configuration_error, std::string("unknown builtin '") + name + "'");
  });
  return result;
}

l1f_status l1f_config_load(const char* source, l1f_config** out) {
  return guarded([&] {
    need(source, "source");
    need(out, "out");
    auto c = l1flow::load_config(source);
    std::string kind = l1flow::to_string(c.kind);
    *out = new l1f_config{std::move(c), std::move(kind)};
  });
}

l1f_status l1f_config_parse(const char* text, const char* base_dir, l1f_config** out) {
  return guarded([&] {
    need(text, "text");
    need(out, "out");
    auto c = l1flow::parse_config(text, base_dir ? base_dir : ".");
    std::string kind = l1flow::to_string(c.kind);
    *out = new l1f_config{std::move(c), std::move(kind)};
  });
}

const char* l1f_config_name(const l1f_config* c) { return c ? c->config.name.c_str() : ""; }
const char* l1f_config_kind(const l1f_config* c) { return c ? c->kind.c_str() : ""; }
const char* l1f_config_output(const l1f_config* c) { return c ? c->config.output.c_str() : ""; }
const char* l1f_config_json(const l1f_config* c) { return c ? c->config.canonical.c_str() : ""; }
void l1f_config_free(l1f_config* c) { delete c; }

l1f_status l1f_experiment_run(const l1f_config* c, const char* output_dir, l1f_outcome** out) {
  return guarded([&] {
    need(c, "config");
    need(out, "out");
    auto o = l1flow::run_experiment(c->config, output_dir ? output_dir : "");
    auto reps = l1flow::detail::Json::array();
    for (const auto& r : o.reports) reps.push_back(l1flow::detail::Json::parse(r.to_json()));
    *out = new l1f_outcome{std::move(o), reps.dump()};
  });
}

int l1f_outcome_pass(const l1f_outcome* o) { return o && o->outcome.pass ? 1 : 0; }
int l1f_outcome_solver_failure(const l1f_outcome* o) { return o && o->outcome.solver_failure ? 1 : 0; }
const char* l1f_outcome_failure(const l1f_outcome* o) { return o ? o->outcome.failure.c_str() : ""; }
const char* l1f_outcome_reports_json(const l1f_outcome* o) { return o ? o->reports.c_str() : "[]"; }
size_t l1f_outcome_file_count(const l1f_outcome* o) { return o ? o->outcome.files.size() : 0; }

const char* l1f_outcome_file(const l1f_outcome* o, size_t i) {
  return o && i < o->outcome.files.size() ? o->outcome.files[i].c_str() : nullptr;
}

void l1f_outcome_free(l1f_outcome* o) { delete o; }

}  // extern "C"
