#include "l1flow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "json_io.hpp"
#include "l1flow/common.hpp"

namespace l1flow {

const char* to_string(StepMethod m) {
  switch (m) {
    case StepMethod::mm:
      return "mm";
    case StepMethod::direct:
      return "direct";
    case StepMethod::automatic:
      break;
  }
  return "auto";
}

StepMethod parse_step_method(const std::string& name) {
  if (name == "auto") return StepMethod::automatic;
  if (name == "mm") return StepMethod::mm;
  if (name == "direct") return StepMethod::direct;
  fail(ErrorCode::invalid_argument, "unknown step method '" + name + "'");
}

namespace {

double ktz_sup(const DualField& z) {
  if (z.data.empty()) return 0.0;
  return max_abs(divergence(z));
}

long step_count(double tau, double T) {
  // a tiny relative slack keeps T = k tau at exactly k steps
  const double r = T / tau;
  return std::max<long>(1, static_cast<long>(std::ceil(r * (1.0 - 1e-12))));
}

void require_steps(const FlowTrace& trace, std::size_t n) {
  require(trace.steps.size() >= n, "trace has too few steps for this report");
}

}  // namespace

FlowTrace run_flow(const IntegrandSpec& spec, const GridFunction& u0, double tau, double T, double tol,
                   const FlowOptions& options) {
  require(tau > 0.0 && std::isfinite(tau), "time step must be positive");
  require(T > 0.0 && std::isfinite(T), "final time must be positive");
  require(tol > 0.0, "tolerance must be positive");
  const double phi0 = eval_energy(spec, u0);
  require(std::isfinite(phi0), "initial energy must be finite");

  FlowTrace trace;
  trace.spec = spec;
  trace.tau = tau;
  trace.tol = tol;
  trace.method = options.method;
  if (trace.method == StepMethod::automatic)
    trace.method = spec.family == Family::aniso_norm ? StepMethod::direct : StepMethod::mm;

  FlowStep first;
  first.u = u0;
  first.energy = phi0;
  first.dual = spec.smooth() ? smooth_dual(spec, u0) : DualField(u0.geometry());
  first.q_sup = ktz_sup(first.dual);
  trace.steps.push_back(std::move(first));

  WarmStart warm;
  bool have_warm = false;
  const long n_steps = step_count(tau, T);
  for (long n = 1; n <= n_steps; ++n) {
    const FlowStep& prev = trace.steps.back();
    StepResult r;
    try {
      const WarmStart* w = have_warm ? &warm : nullptr;
      r = trace.method == StepMethod::mm ? mm_step(spec, prev.u, tau, tol, options.step, w)
                                         : direct_step(spec, prev.u, tau, tol, options.step, w);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::convergence_failure && e.code() != ErrorCode::configuration_error) throw;
      trace.aborted = true;
      trace.abort_reason = "step " + std::to_string(n) + " failed: " + e.what();
      break;
    }
    FlowStep s;
    s.lambda = r.lambda;
    s.energy = eval_energy(spec, r.u);
    s.l1_step = l1_distance(r.u, prev.u);
    s.fenchel_gap = r.fenchel_gap;
    s.el_residual = r.el_residual;
    s.q_sup = ktz_sup(r.dual);
    s.inner_iters = r.inner_iters;
    s.outer_iters = r.outer_iters;
    // the selection term shifts the minimiser by O(eps), which the unregularised gap sees
    const double selection = 0.5 * r.epsilon * l2_norm_sq(r.u.values(), r.u.geometry());
    s.certified = r.fenchel_gap <= options.cert_gap * tol * (1.0 + std::abs(prev.energy)) + selection &&
                  r.el_residual <= options.cert_el;
    s.u = std::move(r.u);
    s.dual = std::move(r.dual);
    warm.dual = s.dual;
    warm.lambda = s.lambda;
    have_warm = true;
    const bool certified = s.certified;
    trace.steps.push_back(std::move(s));
    if (!certified) {
      trace.aborted = true;
      trace.abort_reason = "step " + std::to_string(n) + " failed certification";
      break;
    }
  }
  return trace;
}

GridFunction interpolate(const FlowTrace& trace, double t, Interpolation mode) {
  require_steps(trace, 1);
  const double end = trace.time(trace.last());
  require(std::isfinite(t) && t >= 0.0 && t <= end * (1.0 + 1e-12), "interpolation time out of range");
  const double r = t / trace.tau;
  auto n = static_cast<std::size_t>(std::floor(r + 1e-9));
  n = std::min(n, trace.last());
  double frac = r - static_cast<double>(n);
  if (frac < 1e-9 || n == trace.last()) frac = 0.0;
  const GridFunction& a = trace.steps[n].u;
  if (mode == Interpolation::constant || frac == 0.0) return a;
  const GridFunction& b = trace.steps[n + 1].u;
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + frac * (b[i] - a[i]);
  return a.with_values(std::move(out));
}

// ---------------------------------------------------------------------------

Report check_speed(const FlowTrace& trace, double tol, const std::vector<double>* q0) {
  require_steps(trace, 2);
  Report rep;
  rep.name = "speed";
  const auto& s = trace.steps;
  const std::size_t N = trace.last();
  const double phi0 = s[0].energy;

  double worst = -kInfinity;
  long at = -1;
  for (std::size_t n = 1; n + 1 <= N; ++n) {
    const double d = s[n + 1].lambda - s[n].lambda;
    if (d > worst) worst = d, at = static_cast<long>(n + 1);
  }
  rep.add("multiplier-nonincreasing", worst, tol, at);

  worst = -kInfinity;
  at = -1;
  for (std::size_t k = 1; k <= N; ++k) {
    const double d = s[k].lambda - std::sqrt(2.0 * std::max(phi0, 0.0) / (static_cast<double>(k) * trace.tau));
    if (d > worst) worst = d, at = static_cast<long>(k);
  }
  rep.add("multiplier-decay-bound", worst, tol, at);

  if (q0) {
    const double bound = max_abs(*q0);
    worst = -kInfinity;
    at = -1;
    for (std::size_t k = 1; k <= N; ++k)
      if (s[k].lambda - bound > worst) worst = s[k].lambda - bound, at = static_cast<long>(k);
    rep.add("multiplier-initial-slope-bound", worst, tol, at);
    rep.metrics["q0_sup"] = bound;
  }
  rep.metrics["lambda_1"] = s[1].lambda;
  rep.metrics["lambda_N"] = s[N].lambda;
  return rep;
}

Report dissipation_report(const FlowTrace& trace, double tol) {
  require_steps(trace, 2);
  Report rep;
  rep.name = "dissipation";
  const auto& s = trace.steps;
  const std::size_t N = trace.last();
  double worst = -kInfinity;
  long at = -1;
  double lam_sum = 0.0, q_sum = 0.0;
  for (std::size_t n = 1; n <= N; ++n) {
    const double d = s[n].energy + s[n].l1_step * s[n].l1_step / (2.0 * trace.tau) - s[n - 1].energy;
    if (d > worst) worst = d, at = static_cast<long>(n);
    lam_sum += trace.tau * s[n].lambda * s[n].lambda / 2.0;
    q_sum += trace.tau * s[n].q_sup * s[n].q_sup / 2.0;
  }
  rep.add("one-step-energy", worst, tol, at);
  const double ledger = s[N].energy + lam_sum + q_sum - s[0].energy;
  rep.add("cumulative-dissipation", ledger, tol * static_cast<double>(N));
  rep.metrics["step_margin"] = -worst;
  rep.metrics["ledger_margin"] = -ledger;
  rep.metrics["multiplier_dissipation"] = lam_sum;
  rep.metrics["subgradient_dissipation"] = q_sum;
  return rep;
}

Report strong_convexity_report(const FlowTrace& trace, double gamma, double tol, long window_start) {
  require(gamma > 0.0, "gamma must be positive");
  require(std::abs(trace.spec.gamma - gamma) <= 1e-12 * gamma, "gamma does not match the integrand");
  require_steps(trace, 2);
  Report rep;
  rep.name = "strong-convexity";
  const auto& s = trace.steps;
  const std::size_t N = trace.last();
  const double tau = trace.tau;

  // a[n] = gamma tau ||grad (u^{n+1} - u^n) / tau||_2^2
  std::vector<double> a(N), speed(N);
  for (std::size_t n = 0; n < N; ++n) {
    const double g2 = gradient_distance_sq(s[n + 1].u, s[n].u);
    speed[n] = std::sqrt(g2);
    a[n] = gamma * g2 / tau;
  }
  double total = 0.0;
  for (std::size_t n = 1; n < N; ++n) total += a[n];
  rep.add("gradient-speed-integral", total - s[1].lambda * s[1].lambda / 2.0, tol);

  const std::size_t m = window_start < 0 ? N / 2 : static_cast<std::size_t>(window_start);
  double window = 0.0;
  for (std::size_t n = m; n < N; ++n) window += a[n];
  rep.add("gradient-speed-window", window - s[0].energy / ((static_cast<double>(m) + 1.0) * tau), tol,
          static_cast<long>(m));

  if (trace.spec.family == Family::quadratic) {
    double worst = -kInfinity;
    long at = -1;
    for (std::size_t n = 1; n < N; ++n)
      if (speed[n] - speed[n - 1] > worst) worst = speed[n] - speed[n - 1], at = static_cast<long>(n + 1);
    rep.add("gradient-speed-nonincreasing", worst, tol, at);
  }
  rep.metrics["integral"] = total;
  rep.metrics["window_sum"] = window;
  rep.metrics["window_start"] = static_cast<double>(m);
  return rep;
}

Report pde_residual_report(const FlowTrace& trace, double tol) {
  require(trace.spec.smooth() && trace.spec.gamma > 0.0, "the limit equation needs a smooth strongly convex integrand");
  require_steps(trace, 2);
  Report rep;
  rep.name = "pde-residual";
  const auto& s = trace.steps;
  double bound = -kInfinity, sign = -kInfinity;
  long bound_at = -1, sign_at = -1;
  for (std::size_t n = 0; n + 1 < s.size(); ++n) {
    const auto a = divergence(smooth_dual(trace.spec, s[n + 1].u));
    const double speed_l1 = s[n + 1].l1_step / trace.tau;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double si = (s[n + 1].u[i] - s[n].u[i]) / trace.tau;
      const double b = std::abs(a[i]) - speed_l1;
      if (b > bound) bound = b, bound_at = static_cast<long>(n + 1);
      if (std::abs(si) > tol) {
        // s a >= |s| ||s||_1, divided through by |s|
        const double r = speed_l1 - (si > 0.0 ? a[i] : -a[i]);
        if (r > sign) sign = r, sign_at = static_cast<long>(n + 1);
      }
    }
  }
  rep.add("divergence-bound", bound, tol, bound_at);
  rep.add("sign-alignment", sign, tol, sign_at);
  return rep;
}

double poincare_eigenvalue(const GridGeometry& g, double tol) {
  using Sparse = Eigen::SparseMatrix<double>;
  const Stencil st(g);
  const auto n = static_cast<Eigen::Index>(g.node_count());
  std::vector<Eigen::Triplet<double>> trip;
  for (const auto& e : st.matrix_entries()) trip.emplace_back(e.row, e.col, e.value);
  Sparse k(static_cast<Eigen::Index>(g.cell_count() * g.dim()), n);
  k.setFromTriplets(trip.begin(), trip.end());
  const Sparse a = Sparse(k.transpose() * k);
  const bool neumann = g.bc == Boundary::neumann;
  if (neumann && n == 1) fail(ErrorCode::invalid_argument, "a single node has no nonzero eigenvalue");

  // Shifted inverse iteration; under Neumann conditions the constants are projected out, so the
  // iteration converges to the smallest nonzero eigenvalue.
  const double shift = neumann ? 1e-6 * st.norm_bound() * st.norm_bound() : 0.0;
  Sparse shifted = a;
  if (shift > 0.0) {
    Sparse id(n, n);
    id.setIdentity();
    shifted = a + shift * id;
  }
  Eigen::SimplicialLDLT<Sparse> ldlt(shifted);
  if (ldlt.info() != Eigen::Success) fail(ErrorCode::convergence_failure, "eigensolver factorization failed");

  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = 1.0 + 0.5 * std::sin(1.0 + 0.37 * static_cast<double>(i));
  auto project = [&](Eigen::VectorXd& y) {
    if (neumann) y.array() -= y.mean();
    y.normalize();
  };
  project(x);
  double mu = x.dot(a * x);
  for (int it = 0; it < 10000; ++it) {
    Eigen::VectorXd y = ldlt.solve(x);
    project(y);
    const double next = y.dot(a * y);
    x = std::move(y);
    if (std::abs(next - mu) <= tol * next) return next;
    mu = next;
  }
  fail(ErrorCode::convergence_failure, "inverse iteration did not converge", mu);
}

Report dirichlet_decay_report(const FlowTrace& trace, double tol_decay) {
  require(trace.spec.family == Family::quadratic, "the decay estimate is stated for the quadratic integrand");
  require_steps(trace, 1);
  Report rep;
  rep.name = "dirichlet-decay";
  const GridGeometry& g = trace.geometry();
  const double mu1 = poincare_eigenvalue(g);
  const double c = g.measure() / mu1;
  const double phi0 = trace.steps[0].energy;
  double worst = -kInfinity;
  long at = -1;
  for (std::size_t n = 0; n < trace.steps.size(); ++n) {
    const double bound = std::exp(-trace.time(n) / c) * phi0;
    // relative excess over the bound; a zero bound only admits zero energy
    const double excess = bound > 0.0 ? trace.steps[n].energy / bound - 1.0 : (trace.steps[n].energy > 0.0 ? kInfinity : -1.0);
    if (excess > worst) worst = excess, at = static_cast<long>(n);
  }
  rep.add("energy-decay", worst, tol_decay, at);
  rep.metrics["mu1"] = mu1;
  rep.metrics["c_omega"] = c;
  return rep;
}

Report h1_contraction_report(const FlowTrace& a, const FlowTrace& b, double tol) {
  require(a.geometry() == b.geometry(), "traces have different geometries");
  require(std::abs(a.tau - b.tau) <= 1e-15 * a.tau, "traces have different time steps");
  Report rep;
  rep.name = "h1-contraction";
  const std::size_t n = std::min(a.steps.size(), b.steps.size());
  require(n >= 1, "empty trace");
  double worst = -kInfinity;
  long at = -1;
  double prev = std::sqrt(gradient_distance_sq(a.steps[0].u, b.steps[0].u));
  rep.metrics["initial_distance"] = prev;
  for (std::size_t k = 1; k < n; ++k) {
    const double d = std::sqrt(gradient_distance_sq(a.steps[k].u, b.steps[k].u));
    if (d - prev > worst) worst = d - prev, at = static_cast<long>(k);
    prev = d;
  }
  rep.add("gradient-distance-nonincreasing", worst, tol, at);
  rep.metrics["final_distance"] = prev;
  return rep;
}

Report holder_report(const FlowTrace& trace, double tol, int samples, unsigned seed) {
  require_steps(trace, 1);
  Report rep;
  rep.name = "holder";
  const auto& s = trace.steps;
  const double c = std::sqrt(2.0 * std::max(s[0].energy, 0.0));
  double worst = -kInfinity;
  long at = -1;
  for (std::size_t n = 1; n < s.size(); ++n)
    for (std::size_t m = 0; m < n; ++m) {
      const double d = l1_distance(s[n].u, s[m].u) - c * std::sqrt(static_cast<double>(n - m) * trace.tau);
      if (d > worst) worst = d, at = static_cast<long>(n);
    }
  rep.add("iterate-holder", worst, tol, at);

  std::mt19937 rng(seed);
  const double end = trace.time(trace.last());
  std::uniform_real_distribution<double> pick(0.0, end);
  worst = -kInfinity;
  at = -1;
  for (int k = 0; k < samples && end > 0.0; ++k) {
    const double t1 = pick(rng), t2 = pick(rng);
    const double d = l1_distance(interpolate(trace, t1, Interpolation::affine), interpolate(trace, t2, Interpolation::affine)) -
                     c * std::sqrt(trace.tau + std::abs(t1 - t2));
    if (d > worst) worst = d, at = k;
  }
  rep.add("interpolant-holder", worst, tol, at);
  return rep;
}

Report trace_invariants_report(const FlowTrace& trace, double tol) {
  require_steps(trace, 1);
  Report rep;
  rep.name = "trace-invariants";
  const auto& s = trace.steps;
  double energy = -kInfinity, lambda = -kInfinity, slope = -kInfinity;
  long e_at = -1, l_at = -1, s_at = -1;
  for (std::size_t n = 1; n < s.size(); ++n) {
    if (s[n].energy - s[n - 1].energy > energy) energy = s[n].energy - s[n - 1].energy, e_at = static_cast<long>(n);
    if (n >= 2 && s[n].lambda - s[n - 1].lambda > lambda) lambda = s[n].lambda - s[n - 1].lambda, l_at = static_cast<long>(n);
    // lambda ||delta||_1 = <div z, delta>
    const auto q = divergence(s[n].dual);
    std::vector<double> delta(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) delta[i] = s[n].u[i] - s[n - 1].u[i];
    const double work = s[n].lambda * s[n].l1_step;
    const double r = std::abs(work - inner(q, delta, s[n].u.geometry())) / (1.0 + work);
    if (r > slope) slope = r, s_at = static_cast<long>(n);
  }
  rep.add("energy-nonincreasing", energy, 1e-10, e_at);
  rep.add("multiplier-nonincreasing", lambda, tol, l_at);
  rep.add("slope-identity", slope, tol, s_at);
  return rep;
}

// ---------------------------------------------------------------------------

void write_ledger_csv(std::ostream& os, const FlowTrace& trace) {
  os << "n,t,lambda,energy,l1_step,fenchel_gap,el_residual,q_sup\n";
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t n = 0; n < trace.steps.size(); ++n) {
    const auto& s = trace.steps[n];
    os << n << ',' << trace.time(n) << ',' << s.lambda << ',' << s.energy << ',' << s.l1_step << ',' << s.fenchel_gap
       << ',' << s.el_residual << ',' << s.q_sup << '\n';
  }
}

void write_trace_json(std::ostream& os, const FlowTrace& trace) {
  using detail::Json;
  using detail::number;
  require_steps(trace, 1);
  Json j;
  j["format"] = "l1flow-trace";
  j["version"] = 1;
  j["integrand"] = detail::to_json(trace.spec);
  j["geometry"] = detail::to_json(trace.geometry());
  j["tau"] = trace.tau;
  j["tol"] = trace.tol;
  j["method"] = to_string(trace.method);
  j["aborted"] = trace.aborted;
  j["abort_reason"] = trace.abort_reason;
  j["ghost"] = trace.steps[0].u.ghost();
  Json steps = Json::array();
  for (const auto& s : trace.steps) {
    Json e;
    e["lambda"] = number(s.lambda);
    e["energy"] = number(s.energy);
    e["l1_step"] = number(s.l1_step);
    e["fenchel_gap"] = number(s.fenchel_gap);
    e["el_residual"] = number(s.el_residual);
    e["q_sup"] = number(s.q_sup);
    e["inner_iters"] = s.inner_iters;
    e["outer_iters"] = s.outer_iters;
    e["certified"] = s.certified;
    e["u"] = s.u.values();
    e["dual"] = s.dual.data;
    steps.push_back(std::move(e));
  }
  j["steps"] = std::move(steps);
  os << j.dump() << '\n';
}

FlowTrace read_trace_json(std::istream& is) {
  using detail::Json;
  Json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::io_error, std::string("trace is not valid JSON: ") + e.what());
  }
  try {
    if (j.value("format", std::string()) != "l1flow-trace") fail(ErrorCode::io_error, "not a trace file");
    FlowTrace t;
    t.spec = detail::spec_from_json(j.at("integrand"));
    const GridGeometry g = detail::geometry_from_json(j.at("geometry"));
    t.tau = j.at("tau").get<double>();
    t.tol = j.at("tol").get<double>();
    t.method = parse_step_method(j.at("method").get<std::string>());
    t.aborted = j.at("aborted").get<bool>();
    t.abort_reason = j.at("abort_reason").get<std::string>();
    const auto ghost = j.at("ghost").get<std::vector<double>>();
    for (const auto& e : j.at("steps")) {
      FlowStep s;
      s.u = GridFunction(g, e.at("u").get<std::vector<double>>(), ghost);
      s.dual = DualField(g);
      s.dual.data = e.at("dual").get<std::vector<double>>();
      require(s.dual.data.size() == g.cell_count() * g.dim(), "dual field has the wrong size");
      s.lambda = detail::number_from(e.at("lambda"));
      s.energy = detail::number_from(e.at("energy"));
      s.l1_step = detail::number_from(e.at("l1_step"));
      s.fenchel_gap = detail::number_from(e.at("fenchel_gap"));
      s.el_residual = detail::number_from(e.at("el_residual"));
      s.q_sup = detail::number_from(e.at("q_sup"));
      s.inner_iters = e.at("inner_iters").get<long>();
      s.outer_iters = e.at("outer_iters").get<long>();
      s.certified = e.at("certified").get<bool>();
      t.steps.push_back(std::move(s));
    }
    require(!t.steps.empty() && t.tau > 0.0, "trace is empty");
    return t;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::io_error, std::string("malformed trace: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::io_error) throw;
    fail(ErrorCode::io_error, std::string("malformed trace: ") + e.what());
  }
}

std::vector<TraceDistance> compare_traces(const FlowTrace& a, const FlowTrace& b) {
  require_steps(a, 1);
  require_steps(b, 1);
  require(a.geometry() == b.geometry(), "traces have different geometries");
  const double dt = std::max(a.tau, b.tau);
  const double end = std::min(a.time(a.last()), b.time(b.last()));
  const auto count = static_cast<long>(std::floor(end / dt + 1e-9));
  std::vector<TraceDistance> out;
  for (long k = 0; k <= count; ++k) {
    const double t = std::min(static_cast<double>(k) * dt, end);
    const auto ua = interpolate(a, t, Interpolation::affine);
    const auto ub = interpolate(b, t, Interpolation::affine);
    require(std::equal(ua.ghost().begin(), ua.ghost().end(), ub.ghost().begin(), ub.ghost().end()),
            "traces have different boundary data");
    out.push_back({t, sup_distance(ua, ub), l1_distance(ua, ub)});
  }
  return out;
}

}  // namespace l1flow
