#pragma once

#include "active_set.hpp"
#include "l1flow/common.hpp"
#include "pdhg.hpp"

namespace l1flow::detail {

/// Relative gap at which the sign pattern is usually settled enough for the active-set refinement.
inline constexpr double kCoarseGap = 1e-4;

// Runs the primal-dual iteration; for the quadratic integrand a coarse solve only has to expose the
// sign pattern, after which the active-set refinement lands on the exact minimiser. The refined point
// is kept only when its gap meets the requested tolerance.
template <class Refine>
PdhgResult solve_refined(const IntegrandSpec& spec, const PdhgSolver& solver, const PrimalTerm& term,
                         PdhgState& state, const PdhgOptions& po, double coarse_tol, Refine&& refine) {
  if (spec.family != Family::quadratic) return solver.solve(term, state, po);
  const QuadraticKkt kkt(solver.stencil(), solver.offset());
  long spent = 0;
  auto attempt = [&](PdhgResult& res) {
    std::vector<double> u = state.u;
    if (!refine(kkt, u)) return false;
    auto z = kkt.dual(u);
    auto r = solver.evaluate(term, u, z);
    if (!(r.gap <= po.gap_tol)) return false;
    state.u = std::move(u);
    state.z = std::move(z);
    r.iterations = res.iterations;
    res = r;
    return true;
  };
  if (coarse_tol > po.gap_tol) {
    PdhgOptions coarse = po;
    coarse.gap_tol = coarse_tol;
    try {
      auto res = solver.solve(term, state, coarse);
      spent = res.iterations;
      if (attempt(res)) return res;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::convergence_failure) throw;
      spent = po.max_iter;
    }
  }
  PdhgOptions rest = po;
  rest.max_iter = std::max<long>(po.max_iter - spent, po.check_every);
  auto res = solver.solve(term, state, rest);
  res.iterations += spent;
  attempt(res);
  return res;
}

}  // namespace l1flow::detail
