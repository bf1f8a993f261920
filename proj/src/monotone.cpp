#include "l1flow/monotone.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>

#include <math.h>  // the Boost 1.74 pchip header calls unqualified isnan

#include <boost/math/interpolators/pchip.hpp>

#include "l1flow/common.hpp"
#include "refine.hpp"

namespace l1flow {

const char* to_string(SubsolutionVerdict v) {
  switch (v) {
    case SubsolutionVerdict::certified_by_laplacian:
      return "certified-by-laplacian";
    case SubsolutionVerdict::probe_passed:
      return "probe-passed";
    case SubsolutionVerdict::refuted:
      return "refuted";
  }
  return "?";
}

namespace {

bool boundary_node(const GridGeometry& g, std::size_t k) {
  const int i = static_cast<int>(k % static_cast<std::size_t>(g.nx));
  const int j = static_cast<int>(k / static_cast<std::size_t>(g.nx));
  if (i == 0 || i == g.nx - 1) return true;
  return g.dim() == 2 && (j == 0 || j == g.ny - 1);
}

}  // namespace

SubsolutionResult is_subsolution(const IntegrandSpec& spec, const GridFunction& u0, int n_probes, unsigned seed) {
  require(n_probes >= 0, "probe count must be non-negative");
  const GridGeometry& g = u0.geometry();
  // Under Neumann conditions the outermost nodes carry the boundary, so probes stay off them.
  const bool neumann = g.bc == Boundary::neumann;
  std::vector<std::size_t> interior;
  for (std::size_t k = 0; k < u0.size(); ++k)
    if (!neumann || !boundary_node(g, k)) interior.push_back(k);

  SubsolutionResult out;
  const double phi0 = eval_energy(spec, u0);
  const double scale = 1.0 + max_abs(u0.values());
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  out.worst_energy_change = kInfinity;
  bool refuted = false;
  for (int p = 0; p < n_probes && !interior.empty(); ++p) {
    // tent bump of random centre, width and amplitude
    const std::size_t c = interior[static_cast<std::size_t>(unit(rng) * static_cast<double>(interior.size())) % interior.size()];
    const double ci = static_cast<double>(c % static_cast<std::size_t>(g.nx));
    const double cj = static_cast<double>(c / static_cast<std::size_t>(g.nx));
    const double width = 1.0 + unit(rng) * std::max(1.0, 0.25 * g.nx);
    const double amp = scale * std::pow(10.0, -1.0 - 5.0 * unit(rng));
    std::vector<double> v(u0.values().begin(), u0.values().end());
    for (std::size_t k : interior) {
      const double di = static_cast<double>(k % static_cast<std::size_t>(g.nx)) - ci;
      const double dj = static_cast<double>(k / static_cast<std::size_t>(g.nx)) - cj;
      v[k] -= amp * std::max(0.0, 1.0 - std::hypot(di, dj) / width);
    }
    const double change = eval_energy(spec, u0.with_values(std::move(v))) - phi0;
    out.worst_energy_change = std::min(out.worst_energy_change, change);
    if (change < -1e-10) refuted = true;
    ++out.probes;
  }
  if (out.probes == 0) out.worst_energy_change = 0.0;

  bool certified = false;
  if (spec.family == Family::quadratic) {
    const auto lap = divergence(smooth_dual(spec, u0));
    out.min_laplacian = kInfinity;
    for (std::size_t k : interior) out.min_laplacian = std::min(out.min_laplacian, lap[k]);
    if (interior.empty()) out.min_laplacian = 0.0;
    certified = out.min_laplacian >= -1e-10;
  }
  if (refuted) out.verdict = SubsolutionVerdict::refuted;
  else if (certified) out.verdict = SubsolutionVerdict::certified_by_laplacian;
  else out.verdict = SubsolutionVerdict::probe_passed;
  return out;
}

double contact_multiplier(const IntegrandSpec& spec, const GridFunction& u0) {
  require(spec.smooth(), "the contact multiplier needs a smooth integrand");
  const auto div = divergence(smooth_dual(spec, u0));
  double m = 0.0;
  for (double x : div) m = std::max(m, x);
  return m;
}

ObstacleSolution solve_obstacle(const IntegrandSpec& spec, const GridFunction& u0, double lambda, double tol,
                                const StepOptions& options) {
  require(spec.strictly_convex_superlinear(), "obstacle problems need a strictly convex superlinear integrand");
  require(u0.geometry().bc == Boundary::dirichlet, "obstacle problems need Dirichlet boundary data");
  require(std::isfinite(lambda), "multiplier must be finite");
  require(tol > 0.0, "tolerance must be positive");
  const GridGeometry& g = u0.geometry();
  const double phi0 = eval_energy(spec, u0);

  // Maximum principle: v never exceeds the larger of the obstacle and the boundary data.
  double upper = -kInfinity;
  for (double x : u0.values()) upper = std::max(upper, x);
  for (double x : u0.ghost()) upper = std::max(upper, x);

  detail::PdhgSolver solver(spec, g, u0.ghost());
  detail::ObstacleTerm term(u0.values(), upper, lambda);
  detail::PdhgOptions po;
  po.gap_tol = tol * (1.0 + std::abs(phi0));
  po.max_iter = options.max_inner;
  po.restarted = options.restarted;
  detail::PdhgState state;
  state.u.assign(u0.values().begin(), u0.values().end());
  if (spec.smooth()) state.z = smooth_dual(spec, u0).data;
  const auto res = detail::solve_refined(spec, solver, term, state, po, detail::kCoarseGap * (1.0 + std::abs(phi0)),
                                         [&](const detail::QuadraticKkt& k, std::vector<double>& u) {
                                           return k.refine_obstacle(u0.values(), upper, lambda, u);
                                         });
  // clamping happens inside the prox, so this only removes rounding
  for (std::size_t i = 0; i < state.u.size(); ++i) state.u[i] = std::max(state.u[i], u0[i]);

  ObstacleSolution out;
  out.lambda = lambda;
  out.v = u0.with_values(std::move(state.u));
  std::vector<double> diff(u0.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = out.v[i] - u0[i];
  out.mass = g.volume_element() * tree_sum(diff);
  out.energy = eval_energy(spec, out.v);
  out.gap = res.gap;
  out.iterations = res.iterations;
  return out;
}

std::vector<double> default_lambda_grid(double lambda_max, int samples) {
  require(lambda_max > 0.0 && std::isfinite(lambda_max), "lambda_max must be positive");
  require(samples >= 3, "at least three samples are needed");
  std::vector<double> grid;
  const int geometric = samples - 1;
  const double ratio = std::pow(1e-3, 1.0 / (geometric - 1));
  for (int k = 0; k < geometric; ++k) grid.push_back(lambda_max * std::pow(ratio, k));
  grid.push_back(0.0);
  return grid;
}

// ---------------------------------------------------------------------------

VolumeFunction::VolumeFunction(std::vector<VolumeSample> samples) {
  require(!samples.empty(), "a volume function needs at least one sample");
  std::sort(samples.begin(), samples.end(), [](const VolumeSample& a, const VolumeSample& b) {
    return a.mass < b.mass || (a.mass == b.mass && a.lambda < b.lambda);
  });
  // equal masses (every lambda above the contact value gives m = 0) keep the smallest multiplier
  for (const auto& s : samples) {
    if (!samples_.empty() && std::abs(s.mass - samples_.back().mass) <= 1e-15 * (1.0 + std::abs(s.mass))) continue;
    samples_.push_back(s);
  }
  std::vector<double> m, lam;
  for (const auto& s : samples_) {
    m.push_back(s.mass);
    lam.push_back(s.lambda);
  }
  if (m.size() == 1) {
    // u0 already solves every obstacle problem in the sweep
    interp_ = [l = lam[0]](double) { return l; };
  } else if (m.size() >= 4) {
    interp_ = boost::math::interpolators::pchip<std::vector<double>>(std::move(m), std::move(lam));
  } else {
    // too few points for a cubic; piecewise linear is still monotone
    interp_ = [m = std::move(m), lam = std::move(lam)](double x) {
      const auto it = std::upper_bound(m.begin(), m.end(), x);
      const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - m.begin()), m.size() - 1) - 1;
      const double w = (x - m[i]) / (m[i + 1] - m[i]);
      return (1.0 - w) * lam[i] + w * lam[i + 1];
    };
  }
}

double VolumeFunction::lambda_of_mass(double m) const {
  require(!samples_.empty(), "empty volume function");
  if (m <= samples_.front().mass) return samples_.front().lambda;
  if (m >= samples_.back().mass) return samples_.back().lambda;
  return interp_(m);
}

Report VolumeFunction::validate(double tol) const {
  Report rep;
  rep.name = "volume-function";
  const auto& s = samples_;
  double chord = -kInfinity, mono = -kInfinity, sub = -kInfinity;
  long chord_at = -1, mono_at = -1, sub_at = -1;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    const double w = (s[i].mass - s[i - 1].mass) / (s[i + 1].mass - s[i - 1].mass);
    const double excess = s[i].energy - ((1.0 - w) * s[i - 1].energy + w * s[i + 1].energy);
    if (excess > chord) chord = excess, chord_at = static_cast<long>(i);
  }
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if (s[i + 1].lambda - s[i].lambda > mono) mono = s[i + 1].lambda - s[i].lambda, mono_at = static_cast<long>(i + 1);
    // -lambda_i is a subgradient of f at m_i, on both neighbours
    const double fwd = s[i].energy - s[i].lambda * (s[i + 1].mass - s[i].mass) - s[i + 1].energy;
    const double bwd = s[i + 1].energy + s[i + 1].lambda * (s[i + 1].mass - s[i].mass) - s[i].energy;
    if (std::max(fwd, bwd) > sub) sub = std::max(fwd, bwd), sub_at = static_cast<long>(i);
  }
  if (s.size() >= 3) rep.add("convexity-chord", chord, tol, chord_at);
  if (s.size() >= 2) {
    rep.add("multiplier-nonincreasing", mono, tol, mono_at);
    rep.add("subgradient-inequality", sub, tol, sub_at);
  }
  rep.metrics["samples"] = static_cast<double>(s.size());
  rep.metrics["max_mass"] = s.back().mass;
  return rep;
}

VolumeFunction build_volume_function(const IntegrandSpec& spec, const GridFunction& u0,
                                     const std::vector<double>& lambda_grid, double tol, const StepOptions& options) {
  require(!lambda_grid.empty(), "lambda grid is empty");
  for (std::size_t i = 0; i + 1 < lambda_grid.size(); ++i)
    require(lambda_grid[i] > lambda_grid[i + 1], "lambda grid must be strictly decreasing");
  require(lambda_grid.back() >= 0.0, "lambda grid must be non-negative");

  std::vector<VolumeSample> samples(lambda_grid.size());
  std::vector<std::string> errors(lambda_grid.size());
  std::vector<ErrorCode> codes(lambda_grid.size(), ErrorCode::internal);
  parallel_for_chunked(lambda_grid.size(), [&](std::size_t k) {
    try {
      const auto sol = solve_obstacle(spec, u0, lambda_grid[k], tol, options);
      samples[k] = {sol.mass, sol.energy, lambda_grid[k]};
    } catch (const Error& e) {
      errors[k] = e.what();
      codes[k] = e.code();
    }
  });
  for (std::size_t k = 0; k < errors.size(); ++k)
    if (!errors[k].empty()) fail(codes[k], "obstacle solve at lambda index " + std::to_string(k) + ": " + errors[k]);
  return VolumeFunction(std::move(samples));
}

std::vector<ScalarSample> scalar_flow(const VolumeFunction& vf, double tau, double T) {
  require(tau > 0.0 && std::isfinite(tau), "time step must be positive");
  require(T > 0.0 && std::isfinite(T), "final time must be positive");
  const long steps = std::max<long>(1, static_cast<long>(std::ceil(T / tau * (1.0 - 1e-12))));
  std::vector<ScalarSample> out;
  double m = vf.samples().front().mass;
  out.push_back({0.0, m, vf.lambda_of_mass(m)});
  const double top = vf.max_mass();
  for (long n = 1; n <= steps; ++n) {
    // phi(x) = x - tau lambda(x) - m is increasing, phi(m) <= 0 and phi(top) >= 0
    double lo = m, hi = std::max(top, m);
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid - tau * vf.lambda_of_mass(mid) - m < 0.0) lo = mid;
      else hi = mid;
    }
    m = 0.5 * (lo + hi);
    out.push_back({static_cast<double>(n) * tau, m, vf.lambda_of_mass(m)});
  }
  return out;
}

Report scalar_flow_report(const std::vector<ScalarSample>& flow, double tol) {
  require(!flow.empty(), "empty scalar flow");
  Report rep;
  rep.name = "scalar-flow";
  double mass_drop = -kInfinity, lam_rise = -kInfinity, integ = 0.0, integral = 0.0;
  long mass_at = -1, lam_at = -1, integ_at = -1;
  for (std::size_t n = 1; n < flow.size(); ++n) {
    const double dm = flow[n - 1].mass - flow[n].mass;
    if (dm > mass_drop) mass_drop = dm, mass_at = static_cast<long>(n);
    const double dl = flow[n].lambda - flow[n - 1].lambda;
    if (dl > lam_rise) lam_rise = dl, lam_at = static_cast<long>(n);
    integral += (flow[n].t - flow[n - 1].t) * flow[n].lambda;
    // the bisection stops at 1e-12 in mass, so the identity holds to that level per step
    const double e = std::abs(flow[n].mass - flow[0].mass - integral);
    if (e > integ) integ = e, integ_at = static_cast<long>(n);
  }
  if (flow.size() > 1) {
    rep.add("mass-nondecreasing", mass_drop, tol, mass_at);
    rep.add("multiplier-nonincreasing", lam_rise, tol, lam_at);
    rep.add("integrated-multiplier", integ, 2e-12 * static_cast<double>(flow.size()), integ_at);
  }
  rep.metrics["final_mass"] = flow.back().mass;
  rep.metrics["final_lambda"] = flow.back().lambda;
  return rep;
}

double scalar_lambda_at(const std::vector<ScalarSample>& flow, double t) {
  require(!flow.empty(), "empty scalar flow");
  if (t <= flow.front().t) return flow.front().lambda;
  if (t >= flow.back().t) return flow.back().lambda;
  const auto it = std::upper_bound(flow.begin(), flow.end(), t, [](double x, const ScalarSample& s) { return x < s.t; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double w = (t - a.t) / (b.t - a.t);
  return (1.0 - w) * a.lambda + w * b.lambda;
}

Report reconstruct_and_crosscheck(const IntegrandSpec& spec, const GridFunction& u0,
                                  const std::vector<ScalarSample>& flow, const VolumeFunction& vf,
                                  const FlowTrace& trace, double tol, int time_samples, SubsolutionVerdict verdict) {
  require(!flow.empty() && !trace.steps.empty(), "both flows are needed");
  require(time_samples >= 1, "at least one time sample is needed");
  require(trace.geometry() == u0.geometry(), "trace geometry does not match u0");
  Report rep;
  rep.name = "monotone-crosscheck";
  rep.labels["subsolution"] = to_string(verdict);
  rep.labels["conclusion"] = verdict == SubsolutionVerdict::certified_by_laplacian ? "asserted" : "assumed";

  const double end = std::min(flow.back().t, trace.time(trace.last()));
  double dist = 0.0;
  long dist_at = -1;
  for (int k = 0; k <= time_samples; ++k) {
    const double t = end * k / time_samples;
    const auto v = solve_obstacle(spec, u0, scalar_lambda_at(flow, t), std::min(trace.tol, 1e-10));
    const double d = sup_distance(v.v, interpolate(trace, t, Interpolation::affine));
    if (d > dist) dist = d, dist_at = k;
  }
  rep.add("reconstruction-distance", dist, tol, dist_at);

  double drop = -kInfinity, ident = 0.0;
  long drop_at = -1, ident_at = -1;
  const double w = u0.geometry().volume_element();
  for (std::size_t n = 1; n < trace.steps.size(); ++n) {
    for (std::size_t i = 0; i < u0.size(); ++i) {
      const double d = trace.steps[n - 1].u[i] - trace.steps[n].u[i];
      if (d > drop) drop = d, drop_at = static_cast<long>(n);
    }
    std::vector<double> diff(u0.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = trace.steps[n].u[i] - u0[i];
    const double e = std::abs(trace.steps[n].lambda - vf.lambda_of_mass(w * tree_sum(diff)));
    if (e > ident) ident = e, ident_at = static_cast<long>(n);
  }
  rep.add("iterates-nondecreasing", drop, 1e-8, drop_at);
  rep.add("multiplier-identity", ident, tol * (1.0 + (trace.steps.size() > 1 ? trace.steps[1].lambda : 0.0)), ident_at);
  rep.metrics["window"] = end;
  return rep;
}

void write_volume_csv(std::ostream& os, const VolumeFunction& vf) {
  os << "m,f,lambda\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& s : vf.samples()) os << s.mass << ',' << s.energy << ',' << s.lambda << '\n';
}

void write_scalar_csv(std::ostream& os, const std::vector<ScalarSample>& flow) {
  os << "t,m,lambda\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& s : flow) os << s.t << ',' << s.mass << ',' << s.lambda << '\n';
}

}  // namespace l1flow
