#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "l1flow/energy.hpp"
#include "l1flow/grid.hpp"
#include "l1flow/report.hpp"
#include "l1flow/step.hpp"

namespace l1flow {

enum class StepMethod {
  automatic,  // mm for smooth integrands, direct for aniso-norm
  mm,
  direct,
};

const char* to_string(StepMethod m);
StepMethod parse_step_method(const std::string& name);

struct FlowOptions {
  StepOptions step;
  StepMethod method = StepMethod::automatic;
  /// A step is certified when fenchel_gap <= cert_gap * tol * (1 + Phi(u^{n-1})) ...
  double cert_gap = 10.0;
  /// ... and el_residual <= cert_el.
  double cert_el = 1e-4;
};

struct FlowStep {
  GridFunction u;
  double lambda = 0.0;  // ||u^n - u^{n-1}||_1 / tau; 0 for n = 0
  double energy = 0.0;
  double l1_step = 0.0;
  double fenchel_gap = 0.0;
  double el_residual = 0.0;
  double q_sup = 0.0;  // ||K^T z_n||_inf
  DualField dual;
  long inner_iters = 0;
  long outer_iters = 0;
  bool certified = true;
};

struct FlowTrace {
  IntegrandSpec spec;
  double tau = 0.0;
  double tol = 0.0;
  StepMethod method = StepMethod::automatic;
  std::vector<FlowStep> steps;  // steps[0] holds u^0
  bool aborted = false;
  std::string abort_reason;

  std::size_t last() const { return steps.empty() ? 0 : steps.size() - 1; }
  double time(std::size_t n) const { return static_cast<double>(n) * tau; }
  const GridGeometry& geometry() const { return steps.front().u.geometry(); }
};

/// ceil(T / tau) steps from u0. Stops early, keeping the partial trace, when a step fails or is not certified.
FlowTrace run_flow(const IntegrandSpec& spec, const GridFunction& u0, double tau, double T, double tol,
                   const FlowOptions& options = {});

enum class Interpolation { constant, affine };

GridFunction interpolate(const FlowTrace& trace, double t, Interpolation mode);

// Diagnostics. Each is a pure function of the trace.

/// Multiplier monotonicity, the sqrt(2 Phi(u^0) / t) bound and, given q0, the bound by ||q0||_inf.
Report check_speed(const FlowTrace& trace, double tol, const std::vector<double>* q0 = nullptr);

/// One-step energy inequality and the cumulative dissipation ledger.
Report dissipation_report(const FlowTrace& trace, double tol);

/// Gradient-speed bounds for a gamma-convex integrand; window_start < 0 selects N / 2.
Report strong_convexity_report(const FlowTrace& trace, double gamma, double tol, long window_start = -1);

/// Pointwise residual of the limit equation for smooth strictly convex integrands.
Report pde_residual_report(const FlowTrace& trace, double tol);

/// Smallest eigenvalue of -Delta_h (smallest nonzero one under Neumann conditions).
double poincare_eigenvalue(const GridGeometry& g, double tol = 1e-10);

/// Exponential energy decay with rate 1 / c, c = |Omega_h| / mu_1.
Report dirichlet_decay_report(const FlowTrace& trace, double tol_decay = 1e-3);

/// ||grad(u^n - u'^n)||_2 non-increasing in n for two runs with the same boundary data.
Report h1_contraction_report(const FlowTrace& a, const FlowTrace& b, double tol);

/// ||u^n - u^m||_1 <= sqrt(2 Phi(u^0)) sqrt((n - m) tau), plus the interpolant form on sampled pairs.
Report holder_report(const FlowTrace& trace, double tol, int samples = 200, unsigned seed = 1);

/// Energy monotonicity, multiplier monotonicity and the slope identity at each step.
Report trace_invariants_report(const FlowTrace& trace, double tol);

// Serialization.

/// n,t,lambda,energy,l1_step,fenchel_gap,el_residual,q_sup
void write_ledger_csv(std::ostream& os, const FlowTrace& trace);
void write_trace_json(std::ostream& os, const FlowTrace& trace);
FlowTrace read_trace_json(std::istream& is);

struct TraceDistance {
  double t = 0.0;
  double sup = 0.0;
  double l1 = 0.0;
};

/// Distances between affine interpolants at the multiples of the larger step in the common window.
std::vector<TraceDistance> compare_traces(const FlowTrace& a, const FlowTrace& b);

}  // namespace l1flow
