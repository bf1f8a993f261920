#include "l1flow/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "json_io.hpp"
#include "l1flow/common.hpp"
#include "l1flow/monotone.hpp"
#include "l1flow/step.hpp"

namespace l1flow {

namespace fs = std::filesystem;
using detail::Json;

const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::flow:
      return "flow";
    case ExperimentKind::monotone:
      return "monotone";
    case ExperimentKind::geom:
      return "geom";
    case ExperimentKind::step_oracle:
      return "step-oracle";
    case ExperimentKind::cheeger:
      return "cheeger";
  }
  return "?";
}

namespace {

[[noreturn]] void config_error(const std::string& what) { fail(ErrorCode::configuration_error, what); }

// ---------------------------------------------------------------------------
// builtins

const std::map<std::string, std::string>& builtins() {
  static const std::map<std::string, std::string> table = {
      {"sin1d-dirichlet", R"({
  "kind": "flow",
  "integrand": "quadratic",
  "grid": {"nx": 64, "bc": "dirichlet"},
  "u0": "sin-pi",
  "perturbation": {"profile": "sin-2pi", "amplitude": 0.05},
  "tau": 1e-3,
  "T": 0.5,
  "tol": 1e-10,
  "snapshot_stride": 50
})"},
      {"parabola-subsolution", R"({
  "kind": "monotone",
  "integrand": "quadratic",
  "grid": {"nx": 64, "bc": "dirichlet"},
  "u0": "parabola",
  "tau": 1e-3,
  "scalar_tau": 1e-4,
  "T": 0.3,
  "tol": 1e-10,
  "lambda_samples": 64,
  "probes": 64,
  "crosscheck_tol": 1e-3,
  "snapshot_stride": 50
})"},
      {"square-cheeger", R"({
  "kind": "cheeger",
  "polygon": "square",
  "norm": "euclidean",
  "resolution": 256
})"},
      {"disc-flow", R"({
  "kind": "geom",
  "polygon": "disc",
  "norm": "euclidean",
  "resolution": 256,
  "dt": 1e-3,
  "T": 2.2,
  "snapshot_stride": 200,
  "ball_steps": {"radii": [[1.0, 0.0]], "tau": 1e-4, "steps": 10, "expansion_tol": 1e-9}
})"},
      {"two-balls", R"({
  "kind": "geom",
  "ball_steps": {"radii": [[1.0, 0.5], [1.0, 1.0]], "tau": 1e-4, "steps": 10, "expansion_tol": 1e-7}
})"},
      {"step-oracle", R"({
  "kind": "step-oracle",
  "integrand": "quadratic",
  "grid": {"nx": 16, "bc": "dirichlet"},
  "instances": 20,
  "tau_min": 1e-3,
  "tau_max": 1e-1,
  "tol": 1e-12
})"},
      {"speed-2d-quadratic", R"({
  "kind": "flow",
  "integrand": "quadratic",
  "grid": {"nx": 32, "ny": 32, "bc": "neumann"},
  "u0": "random-smooth",
  "tau": 1e-3,
  "T": 0.05,
  "tol": 1e-10,
  "snapshot_stride": 25
})"},
      {"speed-2d-aniso", R"({
  "kind": "flow",
  "integrand": {"family": "aniso-norm", "norm": "l1"},
  "grid": {"nx": 32, "ny": 32, "bc": "neumann"},
  "u0": "random-smooth",
  "tau": 1e-3,
  "T": 0.05,
  "tol": 1e-10,
  "snapshot_stride": 25
})"},
  };
  return table;
}

// ---------------------------------------------------------------------------
// field access

const std::set<std::string> kKnownKeys = {
    "kind", "name", "builtin", "output", "seed", "integrand", "grid", "u0", "perturbation", "tau", "T", "tol",
    "assert_tol", "decay_tol", "method", "snapshot_stride", "scalar_tau", "lambda_samples", "probes",
    "crosscheck_tol", "instances", "tau_min", "tau_max", "polygon", "norm", "resolution", "dt", "ball_law_floor",
    "ball_law_tol", "ball_steps", "scan_points"};

bool key_applies(ExperimentKind kind, const std::string& key) {
  static const std::set<std::string> common = {"kind", "name", "builtin", "output", "seed", "tol", "assert_tol"};
  static const std::set<std::string> grid = {"integrand", "grid", "method", "decay_tol"};
  static const std::set<std::string> flow = {"u0", "perturbation", "tau", "T", "snapshot_stride"};
  static const std::set<std::string> monotone = {"u0", "tau", "T", "snapshot_stride", "scalar_tau",
                                                 "lambda_samples", "probes", "crosscheck_tol"};
  static const std::set<std::string> oracle = {"instances", "tau_min", "tau_max"};
  static const std::set<std::string> shape = {"polygon", "norm", "resolution", "scan_points"};
  static const std::set<std::string> geom = {"dt", "T", "snapshot_stride", "ball_law_floor", "ball_law_tol",
                                             "ball_steps"};
  if (common.count(key)) return true;
  switch (kind) {
    case ExperimentKind::flow:
      return grid.count(key) || flow.count(key);
    case ExperimentKind::monotone:
      return grid.count(key) || monotone.count(key);
    case ExperimentKind::step_oracle:
      return grid.count(key) || oracle.count(key);
    case ExperimentKind::geom:
      return shape.count(key) || geom.count(key);
    case ExperimentKind::cheeger:
      return shape.count(key) > 0;
  }
  return false;
}

double positive(const Json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number()) config_error(std::string("'") + key + "' must be a number");
  const double x = v.get<double>();
  if (!(x > 0.0) || !std::isfinite(x)) config_error(std::string("'") + key + "' must be positive and finite");
  return x;
}

int positive_int(const Json& j, const char* key, int fallback, int minimum = 1) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) config_error(std::string("'") + key + "' must be an integer");
  const auto x = v.get<long long>();
  if (x < minimum || x > 100000000) config_error(std::string("'") + key + "' is out of range");
  return static_cast<int>(x);
}

std::string text(const Json& j, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string()) config_error(std::string("'") + key + "' must be a string");
  return j.at(key).get<std::string>();
}

// Maps library argument errors raised while building inputs onto configuration errors.
template <class F>
auto as_config(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::invalid_argument || e.code() == ErrorCode::io_error) config_error(e.what());
    throw;
  }
}

// ---------------------------------------------------------------------------
// profiles

double unit(std::mt19937& rng) { return static_cast<double>(rng()) / 4294967296.0; }

std::function<double(double, double)> profile(const std::string& name, int dim, unsigned seed) {
  constexpr double pi = std::numbers::pi;
  if (name == "zero") return [](double, double) { return 0.0; };
  if (name == "sin-pi")
    return [dim](double x, double y) { return std::sin(pi * x) * (dim == 2 ? std::sin(pi * y) : 1.0); };
  if (name == "sin-2pi")
    return [dim](double x, double y) { return std::sin(2 * pi * x) * (dim == 2 ? std::sin(pi * y) : 1.0); };
  if (name == "parabola")
    return [dim](double x, double y) { return x * x - x + (dim == 2 ? y * y - y : 0.0); };
  if (name == "neg-parabola")
    return [dim](double x, double y) { return -(x * x - x + (dim == 2 ? y * y - y : 0.0)); };
  if (name == "random-smooth") {
    // cosine modes with decaying random amplitudes; raw generator output keeps this portable
    std::mt19937 rng(seed);
    const int K = dim == 2 ? 4 : 6;
    std::vector<double> a(static_cast<std::size_t>(K * K));
    for (int k = 0; k < K; ++k)
      for (int l = 0; l < (dim == 2 ? K : 1); ++l)
        a[static_cast<std::size_t>(k * K + l)] = (2.0 * unit(rng) - 1.0) / (1.0 + k * k + l * l);
    return [a, K, dim](double x, double y) {
      double s = 0.0;
      for (int k = 0; k < K; ++k)
        for (int l = 0; l < (dim == 2 ? K : 1); ++l)
          s += a[static_cast<std::size_t>(k * K + l)] * std::cos(k * pi * x) * std::cos(l * pi * y);
      return s;
    };
  }
  config_error("unknown profile '" + name + "'");
}

GridGeometry parse_grid(const Json& j) {
  if (!j.is_object()) config_error("'grid' must be an object");
  Json g = j;
  if (!g.contains("bc")) g["bc"] = "neumann";
  if (!g.contains("h")) {
    if (!g.contains("nx") || !g["nx"].is_number_integer()) config_error("'grid.nx' must be an integer");
    const int nx = g["nx"].get<int>();
    if (nx < 1) config_error("grid dimensions and spacing must be positive");
    g["h"] = g["bc"] == "dirichlet" ? 1.0 / (nx + 1) : 1.0 / nx;
  }
  auto geo = detail::geometry_from_json(g);
  if (geo.node_count() > 4000000) config_error("grid is too large");
  return geo;
}

GridFunction parse_field(const Json& j, const GridGeometry& g, unsigned seed, const std::string& base_dir) {
  if (j.is_string()) {
    const auto f = profile(j.get<std::string>(), g.dim(), seed);
    return GridFunction::sample(g, f);
  }
  if (!j.is_object()) config_error("a field must be a profile name or an object");
  if (j.contains("csv")) {
    if (!j["csv"].is_string()) config_error("'csv' must be a path");
    fs::path p = j["csv"].get<std::string>();
    if (p.is_relative()) p = fs::path(base_dir) / p;
    std::ifstream is(p);
    if (!is) config_error("cannot open " + p.string());
    auto u = as_config([&] { return read_grid_csv(is); });
    if (!(u.geometry() == g)) config_error("field in " + p.string() + " does not match the grid");
    return u;
  }
  const auto f = profile(text(j, "profile", ""), g.dim(), seed);
  double amp = 1.0;
  if (j.contains("amplitude")) {
    if (!j["amplitude"].is_number()) config_error("'amplitude' must be a number");
    amp = j["amplitude"].get<double>();
    if (!std::isfinite(amp)) config_error("'amplitude' must be finite");
  }
  return GridFunction::sample(g, [&](double x, double y) { return amp * f(x, y); });
}

ConvexPolygon parse_polygon(const Json& j, const WulffShape& euclid, const std::optional<WulffShape>& W,
                            const std::string& base_dir, std::string& name) {
  return as_config([&]() -> ConvexPolygon {
    if (j.is_string()) {
      name = j.get<std::string>();
      if (name == "square") return ConvexPolygon::rectangle(0.0, 0.0, 1.0, 1.0);
      if (name == "disc") return euclid.polygon;
      if (name == "wulff") return W->polygon;
      config_error("unknown polygon '" + name + "'");
    }
    if (!j.is_object()) config_error("'polygon' must be a name or an object");
    if (j.contains("rectangle")) {
      name = "rectangle";
      const auto& r = j["rectangle"];
      if (!r.is_array() || r.size() != 4 || !std::all_of(r.begin(), r.end(), [](const Json& x) { return x.is_number(); }))
        config_error("'rectangle' needs [x0, y0, x1, y1]");
      return ConvexPolygon::rectangle(r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>());
    }
    if (j.contains("disc")) {
      name = "disc";
      const double radius = positive(j, "disc", 1.0);
      return euclid.polygon.scaled(radius);
    }
    if (j.contains("regular")) {
      name = "regular";
      return ConvexPolygon::regular(positive_int(j, "regular", 3, 3), positive(j, "radius", 1.0));
    }
    if (j.contains("vertices")) {
      name = "vertices";
      std::vector<Vec2> v;
      for (const auto& p : j["vertices"]) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
          config_error("vertices must be [x, y] pairs");
        v.push_back({p[0].get<double>(), p[1].get<double>()});
      }
      return ConvexPolygon(std::move(v));
    }
    if (j.contains("csv")) {
      name = "csv";
      if (!j["csv"].is_string()) config_error("'polygon.csv' must be a path");
      fs::path p = j["csv"].get<std::string>();
      if (p.is_relative()) p = fs::path(base_dir) / p;
      std::ifstream is(p);
      if (!is) config_error("cannot open " + p.string());
      return read_polygon_csv(is);
    }
    config_error("'polygon' needs one of rectangle, disc, regular, vertices, csv");
  });
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::string> builtin_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : builtins()) out.push_back(k);
  return out;
}

std::string builtin_config(const std::string& name) {
  const auto it = builtins().find(name);
  if (it == builtins().end()) config_error("unknown builtin '" + name + "'");
  return it->second;
}

ExperimentConfig parse_config(const std::string& source_text, const std::string& base_dir) {
  Json j;
  try {
    j = Json::parse(source_text);
  } catch (const nlohmann::json::exception& e) {
    config_error(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) config_error("config must be a JSON object");

  ExperimentConfig c;
  if (j.contains("builtin")) {
    const auto name = text(j, "builtin", "");
    Json merged = Json::parse(builtin_config(name));
    merged["name"] = name;
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() != "builtin") merged[it.key()] = it.value();
    j = std::move(merged);
  }
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!kKnownKeys.count(it.key())) config_error("unknown config key '" + it.key() + "'");

  const auto kind = text(j, "kind", "");
  if (kind == "flow") c.kind = ExperimentKind::flow;
  else if (kind == "monotone") c.kind = ExperimentKind::monotone;
  else if (kind == "geom") c.kind = ExperimentKind::geom;
  else if (kind == "step-oracle") c.kind = ExperimentKind::step_oracle;
  else if (kind == "cheeger") c.kind = ExperimentKind::cheeger;
  else config_error("'kind' must be one of flow, monotone, geom, step-oracle, cheeger");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!key_applies(c.kind, it.key())) config_error("'" + it.key() + "' does not apply to " + kind + " experiments");

  c.name = text(j, "name", "experiment");
  c.output = text(j, "output", "out/" + c.name);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) config_error("'seed' must be a non-negative integer");
    c.seed = j["seed"].get<unsigned>();
  }
  c.tol = positive(j, "tol", c.tol);
  c.assert_tol = positive(j, "assert_tol", c.assert_tol);
  c.snapshot_stride = j.contains("snapshot_stride") ? positive_int(j, "snapshot_stride", 0, 0) : 0;

  const bool grid_kind = c.kind == ExperimentKind::flow || c.kind == ExperimentKind::monotone ||
                         c.kind == ExperimentKind::step_oracle;
  if (grid_kind) {
    if (!j.contains("integrand")) config_error("missing 'integrand'");
    c.spec = detail::spec_from_json(j["integrand"]);
    if (!j.contains("grid")) config_error("missing 'grid'");
    const auto g = parse_grid(j["grid"]);
    if (c.kind != ExperimentKind::step_oracle) {
      if (!j.contains("u0")) config_error("missing 'u0'");
      c.u0 = parse_field(j["u0"], g, c.seed, base_dir);
      c.tau = positive(j, "tau", c.tau);
      c.T = positive(j, "T", c.T);
      if (c.T / c.tau > 1e6) config_error("T / tau exceeds a million steps");
    } else {
      c.u0 = GridFunction::constant(g, 0.0, std::vector<double>(g.ghost_count(), 0.0));
    }
    c.method = as_config([&] { return parse_step_method(text(j, "method", "auto")); });
    c.decay_tol = positive(j, "decay_tol", c.decay_tol);
    if (j.contains("perturbation")) {
      const auto p = parse_field(j["perturbation"], g, c.seed + 1, base_dir);
      // same boundary data as u0, so only the interior values move
      std::vector<double> v(c.u0.values().begin(), c.u0.values().end());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += p[i];
      c.u0_perturbed = c.u0.with_values(std::move(v));
    }
  }
  if (c.kind == ExperimentKind::monotone) {
    if (!c.spec.strictly_convex_superlinear())
      config_error("monotone experiments need a strictly convex superlinear integrand (quadratic or power)");
    if (c.u0.geometry().bc != Boundary::dirichlet) config_error("monotone experiments need a Dirichlet grid");
    c.scalar_tau = positive(j, "scalar_tau", c.scalar_tau);
    if (c.T / c.scalar_tau > 1e7) config_error("T / scalar_tau is too large");
    c.lambda_samples = positive_int(j, "lambda_samples", c.lambda_samples, 3);
    c.probes = positive_int(j, "probes", c.probes, 0);
    c.crosscheck_tol = positive(j, "crosscheck_tol", c.crosscheck_tol);
  }
  if (c.kind == ExperimentKind::step_oracle) {
    c.instances = positive_int(j, "instances", c.instances);
    c.tau_min = positive(j, "tau_min", c.tau_min);
    c.tau_max = positive(j, "tau_max", c.tau_max);
    if (c.tau_min > c.tau_max) config_error("'tau_min' exceeds 'tau_max'");
  }
  if (c.kind == ExperimentKind::geom || c.kind == ExperimentKind::cheeger) {
    const int resolution = positive_int(j, "resolution", 256, 16);
    const auto euclid = as_config([&] { return wulff_from_norm(Norm::euclidean(), resolution); });
    if (j.contains("norm")) {
      c.wulff = as_config([&] { return wulff_from_norm(detail::norm_from_json(j["norm"]), resolution); });
    } else {
      c.wulff = euclid;
    }
    if (j.contains("polygon")) c.body = parse_polygon(j["polygon"], euclid, c.wulff, base_dir, c.body_name);
    else if (c.kind == ExperimentKind::cheeger) config_error("missing 'polygon'");
    c.scan_points = positive_int(j, "scan_points", c.scan_points, 3);
    if (c.kind == ExperimentKind::geom) {
      c.dt = positive(j, "dt", c.dt);
      c.T = positive(j, "T", 1.0);
      if (!c.body.empty() && c.T / c.dt > 1e6) config_error("T / dt exceeds a million steps");
      c.ball_law_floor = positive(j, "ball_law_floor", c.ball_law_floor);
      c.ball_law_tol = positive(j, "ball_law_tol", c.ball_law_tol);
      if (j.contains("ball_steps")) {
        const auto& b = j["ball_steps"];
        if (!b.is_object() || !b.contains("radii") || !b["radii"].is_array()) config_error("'ball_steps.radii' is required");
        for (const auto& r : b["radii"]) {
          if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number())
            config_error("ball radii must be [R1, R2] pairs");
          const double R1 = r[0].get<double>(), R2 = r[1].get<double>();
          if (!(R1 > 0.0) || !(R2 >= 0.0) || !std::isfinite(R1) || !std::isfinite(R2))
            config_error("ball radii must be positive (the second may be 0)");
          c.ball_cases.emplace_back(R1, R2);
        }
        c.ball_tau = positive(b, "tau", c.ball_tau);
        c.ball_steps = positive_int(b, "steps", c.ball_steps);
        c.expansion_tol = positive(b, "expansion_tol", c.expansion_tol);
      }
      if (c.body.empty() && c.ball_cases.empty()) config_error("geom experiments need 'polygon' or 'ball_steps'");
    }
  }
  c.canonical = j.dump(2);
  return c;
}

ExperimentConfig load_config(const std::string& source) {
  const std::string prefix = "builtin:";
  if (source.rfind(prefix, 0) == 0) {
    Json j;
    j["builtin"] = source.substr(prefix.size());
    return parse_config(j.dump(), ".");
  }
  std::ifstream is(source);
  if (!is) config_error("cannot read config " + source);
  std::stringstream ss;
  ss << is.rdbuf();
  const auto base = fs::path(source).parent_path();
  return parse_config(ss.str(), base.empty() ? "." : base.string());
}

// ---------------------------------------------------------------------------

namespace {

class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) fail(ErrorCode::io_error, "cannot create " + dir_.string() + ": " + ec.message());
  }

  template <class Writer>
  void write(const std::string& rel, Writer&& writer) {
    const fs::path p = dir_ / rel;
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    std::ofstream os(p, std::ios::binary);
    if (!os) fail(ErrorCode::io_error, "cannot write " + p.string());
    writer(os);
    if (!os) fail(ErrorCode::io_error, "write failed for " + p.string());
    files.push_back(rel);
  }

  std::vector<std::string> files;

 private:
  fs::path dir_;
};

std::string snapshot_name(const char* stem, std::size_t n) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "snapshots/%s_%05zu.csv", stem, n);
  return buf;
}

bool snapshot_due(std::size_t n, std::size_t last, int stride) {
  if (n == 0 || n == last) return true;
  return stride > 0 && n % static_cast<std::size_t>(stride) == 0;
}

void write_flow_files(Outputs& out, const FlowTrace& trace, int stride, const std::string& suffix = "") {
  out.write("ledger" + suffix + ".csv", [&](std::ostream& os) { write_ledger_csv(os, trace); });
  out.write("trace" + suffix + ".json", [&](std::ostream& os) { write_trace_json(os, trace); });
  if (!suffix.empty()) return;
  for (std::size_t n = 0; n < trace.steps.size(); ++n)
    if (snapshot_due(n, trace.last(), stride))
      out.write(snapshot_name("u", n), [&](std::ostream& os) { write_csv(os, trace.steps[n].u); });
}

// The reports that apply to a flow trace; needs at least two steps.
std::vector<Report> flow_reports(const ExperimentConfig& c, const FlowTrace& trace) {
  std::vector<Report> reps;
  if (trace.steps.size() < 3) return reps;
  std::vector<double> q0;
  if (trace.spec.smooth()) q0 = divergence(smooth_dual(trace.spec, trace.steps[0].u));
  reps.push_back(check_speed(trace, c.assert_tol, trace.spec.smooth() ? &q0 : nullptr));
  reps.push_back(dissipation_report(trace, c.assert_tol));
  reps.push_back(trace_invariants_report(trace, c.assert_tol));
  reps.push_back(holder_report(trace, c.assert_tol, 200, c.seed));
  if (trace.spec.gamma > 0.0) reps.push_back(strong_convexity_report(trace, trace.spec.gamma, c.assert_tol));
  if (trace.spec.smooth() && trace.spec.gamma > 0.0) reps.push_back(pde_residual_report(trace, c.assert_tol));
  if (trace.spec.family == Family::quadratic && trace.geometry().bc == Boundary::dirichlet)
    reps.push_back(dirichlet_decay_report(trace, c.decay_tol));
  return reps;
}

Report abort_report(const FlowTrace& trace, const std::string& name) {
  Report rep;
  rep.name = name;
  rep.add("completed", trace.aborted ? 1.0 : 0.0, 0.0, trace.aborted ? static_cast<long>(trace.steps.size()) : -1);
  if (trace.aborted) rep.labels["abort_reason"] = trace.abort_reason;
  rep.metrics["steps"] = static_cast<double>(trace.last());
  return rep;
}

void run_flow_kind(const ExperimentConfig& c, Outputs& out, ExperimentOutcome& o) {
  FlowOptions fo;
  fo.method = c.method;
  const auto trace = run_flow(c.spec, c.u0, c.tau, c.T, c.tol, fo);
  o.reports.push_back(abort_report(trace, "flow-run"));
  for (auto& r : flow_reports(c, trace)) o.reports.push_back(std::move(r));
  write_flow_files(out, trace, c.snapshot_stride);
  o.solver_failure = trace.aborted;
  if (c.u0_perturbed) {
    const auto other = run_flow(c.spec, *c.u0_perturbed, c.tau, c.T, c.tol, fo);
    o.reports.push_back(abort_report(other, "flow-run-perturbed"));
    o.reports.push_back(h1_contraction_report(trace, other, 1e-8));
    write_flow_files(out, other, c.snapshot_stride, "_perturbed");
    o.solver_failure = o.solver_failure || other.aborted;
  }
}

void run_monotone_kind(const ExperimentConfig& c, Outputs& out, ExperimentOutcome& o) {
  StepOptions so;
  const auto sub = is_subsolution(c.spec, c.u0, c.probes, c.seed);
  Report srep;
  srep.name = "subsolution";
  srep.add("probe-energy-change", -sub.worst_energy_change, 1e-10);
  srep.labels["verdict"] = to_string(sub.verdict);
  srep.metrics["probes"] = sub.probes;
  if (c.spec.family == Family::quadratic) srep.metrics["min_laplacian"] = sub.min_laplacian;
  o.reports.push_back(srep);

  const double lmax = contact_multiplier(c.spec, c.u0);
  const auto grid = lmax > 0.0 ? default_lambda_grid(lmax, c.lambda_samples) : std::vector<double>{0.0};
  const auto vf = build_volume_function(c.spec, c.u0, grid, c.tol, so);
  auto vrep = vf.validate(1e-8);
  vrep.metrics["contact_multiplier"] = lmax;
  o.reports.push_back(vrep);
  const auto scalar = scalar_flow(vf, c.scalar_tau, c.T);
  o.reports.push_back(scalar_flow_report(scalar));

  FlowOptions fo;
  fo.method = c.method;
  const auto trace = run_flow(c.spec, c.u0, c.tau, c.T, c.tol, fo);
  o.reports.push_back(abort_report(trace, "flow-run"));
  o.solver_failure = trace.aborted;
  if (trace.steps.size() >= 2 && sub.verdict != SubsolutionVerdict::refuted) {
    o.reports.push_back(reconstruct_and_crosscheck(c.spec, c.u0, scalar, vf, trace, c.crosscheck_tol, 16, sub.verdict));
  }
  for (auto& r : flow_reports(c, trace)) o.reports.push_back(std::move(r));

  out.write("volume.csv", [&](std::ostream& os) { write_volume_csv(os, vf); });
  out.write("scalar.csv", [&](std::ostream& os) { write_scalar_csv(os, scalar); });
  write_flow_files(out, trace, c.snapshot_stride);
}

void run_step_oracle_kind(const ExperimentConfig& c, Outputs& out, ExperimentOutcome& o) {
  const GridGeometry& g = c.u0.geometry();
  std::mt19937 rng(c.seed);
  StepOptions so;
  so.tol = c.tol;
  double sup = 0.0, obj = 0.0, verify_mm = 0.0, verify_direct = 0.0;
  long sup_at = -1, obj_at = -1, vmm_at = -1, vd_at = -1;
  std::ostringstream ledger;
  ledger << "instance,tau,lambda_mm,lambda_direct,objective_mm,objective_direct,sup_distance\n"
         << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (int k = 0; k < c.instances; ++k) {
    std::vector<double> v(g.node_count());
    for (double& x : v) x = 2.0 * unit(rng) - 1.0;
    const double tau = c.tau_min * std::pow(c.tau_max / c.tau_min, unit(rng));
    const auto vf = c.u0.with_values(std::move(v));
    const auto a = mm_step(c.spec, vf, tau, c.tol, so);
    const auto b = direct_step(c.spec, vf, tau, c.tol, so);
    const double d = sup_distance(a.u, b.u);
    const double e = std::abs(a.objective - b.objective) / (1.0 + std::abs(a.objective));
    if (d > sup) sup = d, sup_at = k;
    if (e > obj) obj = e, obj_at = k;
    const auto va = verify_step(c.spec, vf, a, tau, c.assert_tol);
    const auto vb = verify_step(c.spec, vf, b, tau, c.assert_tol);
    if (!va.all_pass()) verify_mm += 1.0, vmm_at = k;
    if (!vb.all_pass()) verify_direct += 1.0, vd_at = k;
    ledger << k << ',' << tau << ',' << a.lambda << ',' << b.lambda << ',' << a.objective << ',' << b.objective << ','
           << d << '\n';
  }
  Report rep;
  rep.name = "step-agreement";
  rep.add("mm-direct-sup-distance", sup, 1e-6, sup_at);
  rep.add("objective-agreement", obj, 1e-8, obj_at);
  rep.add("mm-verification-failures", verify_mm, 0.0, vmm_at);
  rep.add("direct-verification-failures", verify_direct, 0.0, vd_at);
  rep.metrics["instances"] = c.instances;
  o.reports.push_back(rep);
  out.write("ledger.csv", [&](std::ostream& os) { os << ledger.str(); });
}

void run_geom_kind(const ExperimentConfig& c, Outputs& out, ExperimentOutcome& o) {
  const WulffShape& W = *c.wulff;
  if (!c.body.empty()) {
    const auto trace = geo_flow(c.body, W, c.dt, c.T);
    o.reports.push_back(geo_trace_report(trace));
    const GeoVolumeFunction vf(c.body, W);
    o.reports.push_back(vf.validate());
    o.reports.push_back(cheeger_report(c.body, W, vf.cheeger()));
    if (c.body_name == "disc" && W.phi.kind() == NormKind::euclidean) {
      const double R0 = std::sqrt(c.body.area() / W.area());
      o.reports.push_back(ball_law_report(trace, R0, c.ball_law_floor, c.ball_law_tol));
    }
    out.write("ledger.csv", [&](std::ostream& os) { write_geo_trace_csv(os, trace); });
    out.write("metadata.json", [&](std::ostream& os) { os << geo_metadata_json(trace) << '\n'; });
    out.write("wulff.csv", [&](std::ostream& os) { write_polygon_csv(os, W.polygon); });
    const std::size_t last = trace.samples.empty() ? 0 : trace.samples.size() - 1;
    for (std::size_t n = 0; n < trace.samples.size(); ++n)
      if (snapshot_due(n, last, c.snapshot_stride) && !trace.samples[n].body.empty())
        out.write(snapshot_name("body", n), [&](std::ostream& os) { write_polygon_csv(os, trace.samples[n].body); });
  }
  if (!c.ball_cases.empty()) {
    std::ostringstream csv;
    csv << "case,n,t,r1,r2\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t k = 0; k < c.ball_cases.size(); ++k) {
      const auto seq = ball_step_sequence(c.ball_cases[k], c.ball_tau, c.ball_steps);
      auto rep = ball_steps_report(seq, c.ball_tau, 1e-12, c.expansion_tol);
      rep.name = "ball-steps-" + std::to_string(k);
      rep.metrics["R1"] = c.ball_cases[k].first;
      rep.metrics["R2"] = c.ball_cases[k].second;
      o.reports.push_back(rep);
      for (std::size_t n = 0; n < seq.size(); ++n)
        csv << k << ',' << n << ',' << static_cast<double>(n) * c.ball_tau << ',' << seq[n].first << ','
            << seq[n].second << '\n';
    }
    out.write(c.body.empty() ? "ledger.csv" : "balls.csv", [&](std::ostream& os) { os << csv.str(); });
  }
}

void run_cheeger_kind(const ExperimentConfig& c, Outputs& out, ExperimentOutcome& o) {
  const WulffShape& W = *c.wulff;
  const auto ch = cheeger_scan(c.body, W, c.scan_points);
  o.reports.push_back(cheeger_report(c.body, W, ch));
  out.write("ledger.csv", [&](std::ostream& os) {
    os << "r,rho\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& [r, rho] : ch.scan) os << r << ',' << rho << '\n';
  });
  out.write("cheeger_set.csv", [&](std::ostream& os) { write_polygon_csv(os, ch.set); });
  out.write("wulff.csv", [&](std::ostream& os) { write_polygon_csv(os, W.polygon); });
}

}  // namespace

ExperimentOutcome run_experiment(const ExperimentConfig& c, const std::string& output_dir) {
  Outputs out(output_dir.empty() ? fs::path(c.output) : fs::path(output_dir));
  ExperimentOutcome o;
  switch (c.kind) {
    case ExperimentKind::flow:
      run_flow_kind(c, out, o);
      break;
    case ExperimentKind::monotone:
      run_monotone_kind(c, out, o);
      break;
    case ExperimentKind::step_oracle:
      run_step_oracle_kind(c, out, o);
      break;
    case ExperimentKind::geom:
      run_geom_kind(c, out, o);
      break;
    case ExperimentKind::cheeger:
      run_cheeger_kind(c, out, o);
      break;
  }
  o.pass = !o.solver_failure && std::all_of(o.reports.begin(), o.reports.end(), [](const Report& r) { return r.pass(); });
  if (o.solver_failure) o.failure = "a flow run aborted";
  else if (!o.pass) o.failure = "assertions failed";

  Json j;
  j["experiment"] = c.name;
  j["kind"] = to_string(c.kind);
  j["pass"] = o.pass;
  j["solver_failure"] = o.solver_failure;
  j["config"] = Json::parse(c.canonical);
  Json reps = Json::array();
  for (const auto& r : o.reports) reps.push_back(Json::parse(r.to_json()));
  j["reports"] = std::move(reps);
  out.write("reports.json", [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  o.files = out.files;
  return o;
}

}  // namespace l1flow
