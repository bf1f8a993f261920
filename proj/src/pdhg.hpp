#pragma once

// Internal primal-dual engine shared by the step and monotone modules.
//
// Solves min_u G(u) + sum_cells F(K u + b) with K the forward-difference
// gradient and b its ghost offset. Sums are unweighted here; callers convert
// with the h^d volume element.

#include <span>
#include <vector>

#include "l1flow/energy.hpp"
#include "l1flow/grid.hpp"

namespace l1flow::detail {

class PrimalTerm {
 public:
  virtual ~PrimalTerm() = default;
  /// u <- prox_{t G}(u), in place.
  virtual void prox(std::span<double> u, double t) const = 0;
  virtual double value(std::span<const double> u) const = 0;
  /// G*(w).
  virtual double conjugate(std::span<const double> w) const = 0;
  /// Factor in (0, 1] that maps z into dom G*(-K^T z) when that domain is bounded.
  virtual double feasibility_scale(std::span<const double> ktz) const {
    (void)ktz;
    return 1.0;
  }
};

/// lambda sum |u - v| + eps sum u^2 / 2.
class ShrinkTerm final : public PrimalTerm {
 public:
  ShrinkTerm(std::span<const double> v, double lambda, double eps) : v_(v), lambda_(lambda), eps_(eps) {}
  void prox(std::span<double> u, double t) const override;
  double value(std::span<const double> u) const override;
  double conjugate(std::span<const double> w) const override;
  double feasibility_scale(std::span<const double> ktz) const override;

 private:
  std::span<const double> v_;
  double lambda_, eps_;
};

/// c (sum |u - v|)^2 / 2 + eps sum u^2 / 2, with c = h^d / tau.
class SquaredL1Term final : public PrimalTerm {
 public:
  SquaredL1Term(std::span<const double> v, double c, double eps) : v_(v), c_(c), eps_(eps) {}
  void prox(std::span<double> u, double t) const override;
  double value(std::span<const double> u) const override;
  double conjugate(std::span<const double> w) const override;

  /// Exact prox threshold: returns m = sum |u - v| at the prox point.
  double prox_with_mass(std::span<double> u, double t) const;

 private:
  std::span<const double> v_;
  double c_, eps_;
};

/// lambda sum u + indicator(lo <= u <= hi).
class ObstacleTerm final : public PrimalTerm {
 public:
  ObstacleTerm(std::span<const double> lo, double hi, double lambda) : lo_(lo), hi_(hi), lambda_(lambda) {}
  void prox(std::span<double> u, double t) const override;
  double value(std::span<const double> u) const override;
  double conjugate(std::span<const double> w) const override;

 private:
  std::span<const double> lo_;
  double hi_, lambda_;
};

struct PdhgOptions {
  double gap_tol = 1e-8;  // absolute, in h^d-weighted units
  long max_iter = 200000;
  int check_every = 10;
  /// Strong convexity modulus of F* (enables the accelerated step rule).
  double dual_modulus = 0.0;
  /// Primal/dual step ratio: tau_p = ratio * s, sigma = s / ratio with s^2 L^2 < 1.
  double step_ratio = 1.0;
  /// Stop on the fixed-point residual instead of the gap (for problems whose dual is degenerate).
  bool fixed_point_stop = false;
  /// Reflected Halpern iteration with adaptive restarts and primal weight updates. Converges
  /// linearly on piecewise-linear problems where the plain iteration stalls.
  bool restarted = false;
};

struct PdhgState {
  std::vector<double> u;
  std::vector<double> z;
};

struct PdhgResult {
  double gap = 0.0;     // weighted
  double primal = 0.0;  // weighted
  double dual = 0.0;    // weighted
  long iterations = 0;
};

class PdhgSolver {
 public:
  PdhgSolver(const IntegrandSpec& spec, const GridGeometry& geometry, std::span<const double> ghost);

  const Stencil& stencil() const { return stencil_; }
  std::span<const double> offset() const { return b_; }

  /// Weighted primal value, dual value and gap of (u, z) for the given term.
  PdhgResult evaluate(const PrimalTerm& term, std::span<const double> u, std::span<const double> z) const;

  /// Runs from the warm start in state; throws convergence_failure at the iteration cap.
  PdhgResult solve(const PrimalTerm& term, PdhgState& state, const PdhgOptions& options) const;

 private:
  PdhgResult solve_plain(const PrimalTerm& term, PdhgState& state, const PdhgOptions& options) const;
  PdhgResult solve_restarted(const PrimalTerm& term, PdhgState& state, const PdhgOptions& options) const;
  PdhgResult check(const PrimalTerm& term, std::span<const double> u, std::span<const double> z,
                   std::span<const double> u_prev, std::span<const double> z_prev, const PdhgOptions& opt,
                   long it) const;

  const IntegrandSpec& spec_;
  GridGeometry geometry_;
  Stencil stencil_;
  std::vector<double> ghost_;
  std::vector<double> b_;
};

}  // namespace l1flow::detail
