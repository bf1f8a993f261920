#pragma once

#include <optional>
#include <string>
#include <vector>

#include "l1flow/energy.hpp"
#include "l1flow/grid.hpp"
#include "l1flow/report.hpp"

namespace l1flow {

struct StepOptions {
  double tol = 1e-8;            // relative to 1 + |Phi(v)|
  long max_inner = 200000;      // primal-dual iteration cap per solve
  int max_outer = 200;          // multiplier root-finding evaluations
  double epsilon = 1e-8;        // quadratic selection weight for aniso-norm
  int max_doublings = 60;
  bool restarted = true;        // restarted Halpern variant of the primal-dual iteration
};

/// Previous-step data used to seed a solve.
struct WarmStart {
  DualField dual;
  double lambda = 0.0;
};

struct InnerResult {
  GridFunction u;
  DualField dual;
  double gap = 0.0;
  double epsilon = 0.0;
  long iterations = 0;
};

/// (lambda, tau lambda - ||u_lambda - v||_1) recorded by the multiplier search.
struct OuterSample {
  double lambda = 0.0;
  double value = 0.0;
};

struct StepResult {
  GridFunction u;
  double lambda = 0.0;  // ||u - v||_1 / tau
  DualField dual;
  double fenchel_gap = 0.0;
  double el_residual = 0.0;
  long inner_iters = 0;
  long outer_iters = 0;
  double epsilon = 0.0;
  double objective = 0.0;  // Phi(u) + ||u - v||_1^2 / (2 tau)
  std::vector<OuterSample> outer_trace;
};

/// Minimises Phi(u) + lambda ||u - v||_1 (+ eps ||u||^2 / 2 for aniso-norm).
InnerResult inner_solve(const IntegrandSpec& spec, const GridFunction& v, double lambda, double tol,
                        const StepOptions& options = {}, const DualField* warm_dual = nullptr);

/// One minimizing-movement step by root-finding on the multiplier.
StepResult mm_step(const IntegrandSpec& spec, const GridFunction& v, double tau, double tol,
                   const StepOptions& options = {}, const WarmStart* warm = nullptr);

/// The same step by a primal-dual iteration with the exact prox of ||u - v||_1^2 / (2 tau).
StepResult direct_step(const IntegrandSpec& spec, const GridFunction& v, double tau, double tol,
                       const StepOptions& options = {}, const WarmStart* warm = nullptr);

/// Fenchel gap of (u, z) for the unregularised step problem, h^d-weighted.
double step_fenchel_gap(const IntegrandSpec& spec, const GridFunction& v, double tau, const GridFunction& u,
                        const DualField& z);

/// max over nodes of dist(-q / lambda, sign(u - v)), q = -div z + eps u.
double sign_inclusion_residual(const GridFunction& v, const GridFunction& u, std::span<const double> q,
                               double lambda, double zero_tol);

struct StepVerification {
  std::vector<Check> checks;
  bool all_pass() const;
  std::string to_json() const;
};

StepVerification verify_step(const IntegrandSpec& spec, const GridFunction& v, const StepResult& result, double tau,
                             double tol = 1e-6);

}  // namespace l1flow
