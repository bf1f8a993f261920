#include "l1flow/step.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <json.hpp>
#include <limits>

#include "l1flow/common.hpp"
#include "refine.hpp"

namespace l1flow {

using detail::PdhgOptions;
using detail::PdhgSolver;
using detail::PdhgState;

namespace {

double selection_weight(const IntegrandSpec& spec, const StepOptions& opt) {
  return spec.family == Family::aniso_norm ? opt.epsilon : 0.0;
}

PdhgOptions pdhg_options(double gap_tol, const StepOptions& opt) {
  PdhgOptions po;
  po.gap_tol = gap_tol;
  po.max_iter = opt.max_inner;
  po.restarted = opt.restarted;
  return po;
}


std::vector<double> transpose(const Stencil& st, std::span<const double> z) {
  std::vector<double> q(st.geometry().node_count());
  st.transpose(z, q);
  return q;
}

double weighted_l1(std::span<const double> u, std::span<const double> v, double w) {
  std::vector<double> t(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) t[i] = std::abs(u[i] - v[i]);
  return w * tree_sum(t);
}

// -q as a node vector: K^T z plus the selection term eps u
std::vector<double> total_subgradient(const Stencil& st, const DualField& z, const GridFunction& u, double eps) {
  auto q = transpose(st, z.data);
  if (eps > 0.0)
    for (std::size_t i = 0; i < q.size(); ++i) q[i] += eps * u[i];
  return q;
}

double zero_tolerance(const GridFunction& v, double tol) { return tol * (1.0 + max_abs(v.values())); }

void finish(StepResult& r, const IntegrandSpec& spec, const GridFunction& v, double tau, double tol) {
  const GridGeometry& g = v.geometry();
  const Stencil st(g);
  const double m = l1_distance(r.u, v);
  r.lambda = m / tau;
  r.objective = eval_energy(spec, r.u) + m * m / (2.0 * tau);
  r.fenchel_gap = step_fenchel_gap(spec, v, tau, r.u, r.dual);
  const auto q = total_subgradient(st, r.dual, r.u, r.epsilon);
  r.el_residual = sign_inclusion_residual(v, r.u, q, r.lambda, zero_tolerance(v, tol));
}

StepResult stationary_result(const GridFunction& v, DualField z) {
  StepResult r;
  r.u = v;
  r.lambda = 0.0;
  r.dual = std::move(z);
  return r;
}

}  // namespace

double sign_inclusion_residual(const GridFunction& v, const GridFunction& u, std::span<const double> q, double lambda,
                               double zero_tol) {
  double worst = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double diff = u[i] - v[i];
    if (lambda <= 0.0) {
      // the inclusion degenerates to q = 0 with u = v
      worst = std::max(worst, std::abs(diff) > zero_tol ? kInfinity : std::abs(q[i]));
      continue;
    }
    const double x = -q[i] / lambda;
    double dist;
    if (std::abs(diff) <= zero_tol) dist = std::max(std::abs(x) - 1.0, 0.0);
    else dist = std::abs(x - (diff > 0.0 ? 1.0 : -1.0));
    worst = std::max(worst, dist);
  }
  return worst;
}

double step_fenchel_gap(const IntegrandSpec& spec, const GridFunction& v, double tau, const GridFunction& u,
                        const DualField& z) {
  const GridGeometry& g = v.geometry();
  PdhgSolver solver(spec, g, v.ghost());
  detail::SquaredL1Term term(v.values(), g.volume_element() / tau, 0.0);
  return solver.evaluate(term, u.values(), z.data).gap;
}

InnerResult inner_solve(const IntegrandSpec& spec, const GridFunction& v, double lambda, double tol,
                        const StepOptions& options, const DualField* warm_dual) {
  require(tol > 0.0, "tolerance must be positive");
  require(lambda >= 0.0 && std::isfinite(lambda), "multiplier must be non-negative");
  const GridGeometry& g = v.geometry();
  const double eps = selection_weight(spec, options);
  PdhgSolver solver(spec, g, v.ghost());
  detail::ShrinkTerm term(v.values(), lambda, eps);
  const double scale = 1.0 + std::abs(eval_energy(spec, v));
  PdhgOptions po = pdhg_options(tol * scale, options);
  // with lambda = 0 and a boundary trace the dual feasible set is degenerate
  po.fixed_point_stop = lambda == 0.0 && eps == 0.0 && g.bc == Boundary::dirichlet;

  PdhgState state;
  state.u.assign(v.values().begin(), v.values().end());
  if (warm_dual && warm_dual->geometry == g) state.z = warm_dual->data;
  const auto res = po.fixed_point_stop ? solver.solve(term, state, po)
                                       : detail::solve_refined(spec, solver, term, state, po, detail::kCoarseGap * scale,
                                                       [&](const detail::QuadraticKkt& k, std::vector<double>& u) {
                                                         return k.refine_shrink(v.values(), lambda, u);
                                                       });

  InnerResult out;
  out.u = v.with_values(std::move(state.u));
  out.dual = DualField(g);
  out.dual.data = std::move(state.z);
  out.gap = res.gap;
  out.epsilon = eps;
  out.iterations = res.iterations;
  return out;
}

StepResult mm_step(const IntegrandSpec& spec, const GridFunction& v, double tau, double tol,
                   const StepOptions& options, const WarmStart* warm) {
  require(tau > 0.0 && std::isfinite(tau), "time step must be positive");
  require(tol > 0.0, "tolerance must be positive");
  const GridGeometry& g = v.geometry();
  const double w = g.volume_element();
  const double phi_v = eval_energy(spec, v);
  require(std::isfinite(phi_v), "initial energy must be finite");
  const double eps = selection_weight(spec, options);
  PdhgSolver solver(spec, g, v.ghost());
  const Stencil& st = solver.stencil();
  const PdhgOptions po = pdhg_options(tol * (1.0 + std::abs(phi_v)), options);
  const double coarse = detail::kCoarseGap * (1.0 + std::abs(phi_v));

  // Stationarity and a certified upper bound on the multiplier.
  double seed = 1.0;
  PdhgState state;
  state.u.assign(v.values().begin(), v.values().end());
  if (spec.smooth()) {
    DualField zv = smooth_dual(spec, v);
    const double qn = max_abs(transpose(st, zv.data));
    const double scale = 1.0 + max_abs(v.values()) + max_abs(v.ghost());
    if (qn <= 64.0 * DBL_EPSILON * scale / (g.h * g.h)) {
      StepResult r = stationary_result(v, std::move(zv));
      finish(r, spec, v, tau, tol);
      return r;
    }
    seed = qn;
    state.z = std::move(zv.data);
  } else if (phi_v <= 0.0) {
    StepResult r = stationary_result(v, DualField(g));
    finish(r, spec, v, tau, tol);
    return r;
  }
  if (warm && warm->dual.geometry == g) {
    state.z = warm->dual.data;
    if (warm->lambda > 0.0) seed = spec.smooth() ? std::min(seed, warm->lambda) : warm->lambda;
  }

  StepResult best;
  best.epsilon = eps;
  double best_abs = kInfinity;
  long inner_total = 0;
  std::vector<OuterSample> trace;

  auto evaluate = [&](double lambda) {
    detail::ShrinkTerm term(v.values(), lambda, eps);
    const auto res = detail::solve_refined(spec, solver, term, state, po, coarse,
                                   [&](const detail::QuadraticKkt& k, std::vector<double>& u) {
                                     return k.refine_shrink(v.values(), lambda, u);
                                   });
    inner_total += res.iterations;
    const double gl = weighted_l1(state.u, v.values(), w);
    const double val = tau * lambda - gl;
    trace.push_back({lambda, val});
    if (std::abs(val) < best_abs) {
      best_abs = std::abs(val);
      best.u = v.with_values(state.u);
      best.dual = DualField(g);
      best.dual.data = state.z;
    }
    return val;
  };

  double hi = seed;
  double fhi = evaluate(hi);
  double lo = 0.0;
  double flo = std::numeric_limits<double>::quiet_NaN();
  int doublings = 0;
  while (fhi < 0.0) {
    if (++doublings > options.max_doublings)
      fail(ErrorCode::configuration_error, "could not bracket the step multiplier", fhi);
    lo = hi;
    flo = fhi;
    hi *= 2.0;
    fhi = evaluate(hi);
  }

  // Illinois-modified regula falsi with a bisection safeguard on h(lambda) = tau lambda - g(lambda).
  auto done = [&](double x, double fx) { return std::abs(fx) <= 1e-11 * tau * x; };
  int side = 0;
  double width_ref = hi - lo;
  int since_halving = 0;
  if (!done(hi, fhi)) {
    for (int it = 0; it < options.max_outer; ++it) {
      double x;
      const bool bisect = std::isnan(flo) || since_halving >= 3;
      if (bisect) {
        x = 0.5 * (lo + hi);
      } else {
        x = (lo * fhi - hi * flo) / (fhi - flo);
        if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
      }
      const double fx = evaluate(x);
      if (done(x, fx)) break;
      if (fx < 0.0) {
        lo = x;
        flo = fx;
        if (side < 0 && !bisect) fhi *= 0.5;
        side = -1;
      } else {
        hi = x;
        fhi = fx;
        if (side > 0 && !bisect && !std::isnan(flo)) flo *= 0.5;
        side = 1;
      }
      if (hi - lo <= 0.5 * width_ref) {
        width_ref = hi - lo;
        since_halving = 0;
      } else {
        ++since_halving;
      }
      if (hi - lo <= 1e-14 * hi) break;
    }
  }

  best.inner_iters = inner_total;
  best.outer_iters = static_cast<long>(trace.size());
  best.outer_trace = std::move(trace);
  finish(best, spec, v, tau, tol);
  return best;
}

StepResult direct_step(const IntegrandSpec& spec, const GridFunction& v, double tau, double tol,
                       const StepOptions& options, const WarmStart* warm) {
  require(tau > 0.0 && std::isfinite(tau), "time step must be positive");
  require(tol > 0.0, "tolerance must be positive");
  const GridGeometry& g = v.geometry();
  const double phi_v = eval_energy(spec, v);
  require(std::isfinite(phi_v), "initial energy must be finite");
  const double eps = selection_weight(spec, options);
  PdhgSolver solver(spec, g, v.ghost());
  const double c = g.volume_element() / tau;
  detail::SquaredL1Term term(v.values(), c, eps);
  const PdhgOptions po = pdhg_options(tol * (1.0 + std::abs(phi_v)), options);

  PdhgState state;
  state.u.assign(v.values().begin(), v.values().end());
  if (warm && warm->dual.geometry == g) state.z = warm->dual.data;
  else if (spec.smooth()) state.z = smooth_dual(spec, v).data;
  const auto res = detail::solve_refined(spec, solver, term, state, po, detail::kCoarseGap * (1.0 + std::abs(phi_v)),
                                 [&](const detail::QuadraticKkt& k, std::vector<double>& u) {
                                   return k.refine_squared_l1(v.values(), c, u);
                                 });

  StepResult r;
  r.u = v.with_values(std::move(state.u));
  r.dual = DualField(g);
  r.dual.data = std::move(state.z);
  r.epsilon = eps;
  r.inner_iters = res.iterations;
  r.outer_iters = 0;
  finish(r, spec, v, tau, tol);
  return r;
}

// ---------------------------------------------------------------------------

bool StepVerification::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

std::string StepVerification::to_json() const {
  nlohmann::json j;
  j["all_pass"] = all_pass();
  j["checks"] = nlohmann::json::array();
  for (const auto& c : checks)
    j["checks"].push_back({{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"pass", c.pass}});
  return j.dump(2);
}

StepVerification verify_step(const IntegrandSpec& spec, const GridFunction& v, const StepResult& result, double tau,
                             double tol) {
  const GridGeometry& g = v.geometry();
  require(result.u.geometry() == g && result.dual.geometry == g, "step result does not match the data geometry");
  StepVerification out;
  auto add = [&](std::string name, double value, double threshold) {
    out.checks.push_back(make_check(std::move(name), value, threshold));
  };

  const double m = l1_distance(result.u, v);
  const double lambda = m / tau;
  add("lambda-consistency", std::abs(lambda - result.lambda), 1e-8 * (1.0 + lambda));

  const auto sub = subgradient_from_dual(spec, result.dual, result.u);
  add("fenchel-young", sub.residual, tol);

  double bound = 0.0;
  double sign = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double q = sub.q[i] + result.epsilon * result.u[i];
    bound = std::max(bound, std::abs(q) - lambda);
    const double diff = result.u[i] - v[i];
    if (std::abs(diff) > tol) sign = std::max(sign, std::abs(q + lambda * (diff > 0.0 ? 1.0 : -1.0)));
  }
  add("subgradient-bound", bound, tol);
  add("sign-inclusion", sign, tol);

  const double objective = eval_energy(spec, result.u) + m * m / (2.0 * tau);
  add("objective-dominance", objective - eval_energy(spec, v), tol);
  return out;
}

}  // namespace l1flow
