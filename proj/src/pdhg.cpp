#include "pdhg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "l1flow/common.hpp"

namespace l1flow::detail {

namespace {

double shrink(double x, double k) {
  if (x > k) return x - k;
  if (x < -k) return x + k;
  return 0.0;
}

// u <- v + shrink(u / (1 + t eps) - v, t c m / (1 + t eps)) where m solves
// m = sum max(|u_i / (1 + t eps) - v_i| - c' m, 0); returns m.
double squared_l1_prox(std::span<double> u, std::span<const double> v, double c, double eps, double t) {
  const double s = 1.0 / (1.0 + t * eps);
  const double cp = t * c * s;
  const std::size_t n = u.size();
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] *= s;
    a[i] = std::abs(u[i] - v[i]);
  }
  std::sort(a.begin(), a.end(), std::greater<>());
  double m = 0.0;
  double partial = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (a[k] == 0.0) break;
    partial += a[k];
    const double mk = partial / (1.0 + static_cast<double>(k + 1) * cp);
    const double next = k + 1 < n ? a[k + 1] : 0.0;
    m = mk;
    if (next <= cp * mk) break;
  }
  const double kappa = cp * m;
  for (std::size_t i = 0; i < n; ++i) u[i] = v[i] + shrink(u[i] - v[i], kappa);
  return m;
}

double sum_abs_diff(std::span<const double> u, std::span<const double> v) {
  std::vector<double> t(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) t[i] = std::abs(u[i] - v[i]);
  return tree_sum(t);
}

double sum_sq(std::span<const double> u) {
  std::vector<double> t(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) t[i] = u[i] * u[i];
  return tree_sum(t);
}

double dot(std::span<const double> a, std::span<const double> b) {
  std::vector<double> t(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) t[i] = a[i] * b[i];
  return tree_sum(t);
}

}  // namespace

// ---------------------------------------------------------------------------

void ShrinkTerm::prox(std::span<double> u, double t) const {
  const double s = 1.0 / (1.0 + t * eps_);
  const double k = t * lambda_ * s;
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = v_[i] + shrink(u[i] * s - v_[i], k);
}

double ShrinkTerm::value(std::span<const double> u) const {
  return lambda_ * sum_abs_diff(u, v_) + (eps_ > 0.0 ? 0.5 * eps_ * sum_sq(u) : 0.0);
}

double ShrinkTerm::conjugate(std::span<const double> w) const {
  std::vector<double> t(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double r = w[i] - eps_ * v_[i];
    if (std::abs(r) <= lambda_) {
      t[i] = w[i] * v_[i] - 0.5 * eps_ * v_[i] * v_[i];
    } else if (eps_ == 0.0) {
      return kInfinity;
    } else if (r > 0.0) {
      t[i] = (w[i] - lambda_) * (w[i] - lambda_) / (2.0 * eps_) + lambda_ * v_[i];
    } else {
      t[i] = (w[i] + lambda_) * (w[i] + lambda_) / (2.0 * eps_) - lambda_ * v_[i];
    }
  }
  return tree_sum(t);
}

double ShrinkTerm::feasibility_scale(std::span<const double> ktz) const {
  const double m = max_abs(ktz);
  if (m <= lambda_) return 1.0;
  return lambda_ / m;
}

void SquaredL1Term::prox(std::span<double> u, double t) const { squared_l1_prox(u, v_, c_, eps_, t); }

double SquaredL1Term::prox_with_mass(std::span<double> u, double t) const {
  return squared_l1_prox(u, v_, c_, eps_, t);
}

double SquaredL1Term::value(std::span<const double> u) const {
  const double m = sum_abs_diff(u, v_);
  return 0.5 * c_ * m * m + (eps_ > 0.0 ? 0.5 * eps_ * sum_sq(u) : 0.0);
}

double SquaredL1Term::conjugate(std::span<const double> w) const {
  if (eps_ == 0.0) {
    const double m = max_abs(w);
    return dot(w, v_) + m * m / (2.0 * c_);
  }
  // the maximiser of <w, u> - G(u) is prox_{G0 / eps}(w / eps), G0 the eps-free part
  std::vector<double> u(w.begin(), w.end());
  for (double& x : u) x /= eps_;
  squared_l1_prox(u, v_, c_, 0.0, 1.0 / eps_);
  return dot(w, u) - value(u);
}

void ObstacleTerm::prox(std::span<double> u, double t) const {
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::clamp(u[i] - t * lambda_, lo_[i], std::max(lo_[i], hi_));
}

double ObstacleTerm::value(std::span<const double> u) const {
  std::vector<double> t(u.begin(), u.end());
  return lambda_ * tree_sum(t);
}

double ObstacleTerm::conjugate(std::span<const double> w) const {
  std::vector<double> t(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double r = w[i] - lambda_;
    t[i] = r * (r > 0.0 ? std::max(lo_[i], hi_) : lo_[i]);
  }
  return tree_sum(t);
}

// ---------------------------------------------------------------------------

PdhgSolver::PdhgSolver(const IntegrandSpec& spec, const GridGeometry& geometry, std::span<const double> ghost)
    : spec_(spec), geometry_(geometry), stencil_(geometry), ghost_(ghost.begin(), ghost.end()) {
  b_.assign(geometry.cell_count() * geometry.dim(), 0.0);
  const std::vector<double> zeros(geometry.node_count(), 0.0);
  stencil_.gradient(zeros, ghost_, b_);
}

PdhgResult PdhgSolver::evaluate(const PrimalTerm& term, std::span<const double> u, std::span<const double> z) const {
  const double w = geometry_.volume_element();
  const int d = geometry_.dim();
  std::vector<double> p(b_.size());
  stencil_.gradient(u, ghost_, p);
  const double primal = energy_from_gradient(spec_, p, geometry_) / w + term.value(u);

  std::vector<double> ktz(geometry_.node_count());
  stencil_.transpose(z, ktz);
  auto dual_at = [&](double s) {
    std::vector<double> zs(z.begin(), z.end());
    std::vector<double> nk(ktz.size());
    for (double& x : zs) x *= s;
    for (std::size_t i = 0; i < nk.size(); ++i) nk[i] = -s * ktz[i];
    std::vector<double> fs(zs.size() / d);
    for (std::size_t c = 0; c < fs.size(); ++c) fs[c] = cell_conjugate(spec_, &zs[c * d], d);
    for (double f : fs)
      if (f == kInfinity) return -kInfinity;
    const double g = term.conjugate(nk);
    if (g == kInfinity) return -kInfinity;
    return dot(zs, b_) - tree_sum(fs) - g;
  };
  double dual = dual_at(1.0);
  const double theta = term.feasibility_scale(ktz);
  if (theta < 1.0) dual = std::max(dual, dual_at(theta));

  PdhgResult r;
  r.primal = w * primal;
  r.dual = w * dual;
  r.gap = r.primal - r.dual;
  return r;
}

PdhgResult PdhgSolver::solve(const PrimalTerm& term, PdhgState& state, const PdhgOptions& opt) const {
  const std::size_t n = geometry_.node_count();
  if (state.u.size() != n) fail(ErrorCode::internal, "primal warm start has the wrong size");
  if (state.z.size() != b_.size()) state.z.assign(b_.size(), 0.0);
  return opt.restarted ? solve_restarted(term, state, opt) : solve_plain(term, state, opt);
}

PdhgResult PdhgSolver::check(const PrimalTerm& term, std::span<const double> u, std::span<const double> z,
                             std::span<const double> u_prev, std::span<const double> z_prev, const PdhgOptions& opt,
                             long it) const {
  PdhgResult r = evaluate(term, u, z);
  r.iterations = it;
  if (opt.fixed_point_stop) {
    double du = 0.0, dz = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) du = std::max(du, std::abs(u[i] - u_prev[i]));
    for (std::size_t k = 0; k < z.size(); ++k) dz = std::max(dz, std::abs(z[k] - z_prev[k]));
    r.gap = std::max(du, geometry_.h * dz);
  }
  return r;
}

PdhgResult PdhgSolver::solve_plain(const PrimalTerm& term, PdhgState& state, const PdhgOptions& opt) const {
  const std::size_t n = geometry_.node_count();
  const std::size_t m = b_.size();
  const int d = geometry_.dim();
  const double s0 = 0.99 / stencil_.norm_bound();
  double tau = s0 * opt.step_ratio;
  double sigma = s0 / opt.step_ratio;

  std::vector<double>& u = state.u;
  std::vector<double>& z = state.z;
  std::vector<double> zbar = z, z_old(m), u_old(n), ktz(n), p(m);

  PdhgResult last;
  last.gap = kInfinity;
  for (long it = 1; it <= opt.max_iter; ++it) {
    stencil_.transpose(zbar, ktz);
    u_old = u;
    for (std::size_t i = 0; i < n; ++i) u[i] -= tau * ktz[i];
    term.prox(u, tau);

    stencil_.gradient(u, ghost_, p);
    z_old = z;
    for (std::size_t k = 0; k < m; ++k) z[k] += sigma * p[k];
    parallel_for(m / d, [&](std::size_t c) { cell_prox_conjugate(spec_, &z[c * d], d, sigma); });

    double theta = 1.0;
    if (opt.dual_modulus > 0.0) {
      theta = 1.0 / std::sqrt(1.0 + 2.0 * opt.dual_modulus * sigma);
      sigma *= theta;
      tau /= theta;
    }
    for (std::size_t k = 0; k < m; ++k) zbar[k] = z[k] + theta * (z[k] - z_old[k]);

    if (it % opt.check_every == 0 || it == opt.max_iter) {
      last = check(term, u, z, u_old, z_old, opt, it);
      if (last.gap <= opt.gap_tol) return last;
    }
  }
  fail(ErrorCode::convergence_failure, "primal-dual iteration reached its cap", last.gap);
}

PdhgResult PdhgSolver::solve_restarted(const PrimalTerm& term, PdhgState& state, const PdhgOptions& opt) const {
  const std::size_t n = geometry_.node_count();
  const std::size_t m = b_.size();
  const int d = geometry_.dim();
  const double s0 = 0.99 / stencil_.norm_bound();
  double ratio = opt.step_ratio;

  // w = (u, z) is the Halpern iterate, (up, zp) = T(w) the plain step from it, which is always
  // feasible and is what gets evaluated and returned.
  std::vector<double>& u = state.u;
  std::vector<double>& z = state.z;
  std::vector<double> up(n), zp(m), ua = u, za = z, ktz(n), p(m), ext(n);

  PdhgResult last;
  last.gap = kInfinity;
  long k = 0;
  double r0 = 0.0, r_prev = 0.0;
  long since_restart_limit = opt.max_iter;
  for (long it = 1; it <= opt.max_iter; ++it) {
    const double tau = s0 * ratio, sigma = s0 / ratio;
    stencil_.transpose(z, ktz);
    for (std::size_t i = 0; i < n; ++i) up[i] = u[i] - tau * ktz[i];
    term.prox(up, tau);
    for (std::size_t i = 0; i < n; ++i) ext[i] = 2.0 * up[i] - u[i];
    stencil_.gradient(ext, ghost_, p);
    for (std::size_t q = 0; q < m; ++q) zp[q] = z[q] + sigma * p[q];
    parallel_for(m / d, [&](std::size_t c) { cell_prox_conjugate(spec_, &zp[c * d], d, sigma); });

    double ru = 0.0, rz = 0.0;
    for (std::size_t i = 0; i < n; ++i) ru += (up[i] - u[i]) * (up[i] - u[i]);
    for (std::size_t q = 0; q < m; ++q) rz += (zp[q] - z[q]) * (zp[q] - z[q]);
    const double r = std::sqrt(ru / tau + rz / sigma);

    if (it % opt.check_every == 0 || it == opt.max_iter) {
      last = check(term, up, zp, u, z, opt, it);
      if (last.gap <= opt.gap_tol) {
        u = up;
        z = zp;
        return last;
      }
    }

    if (k == 0) r0 = r;
    const bool restart = k > 0 && (r <= 0.2 * r0 || (r <= 0.8 * r0 && r > r_prev) || k >= since_restart_limit);
    if (restart) {
      // rebalance primal and dual steps by the movement since the last anchor
      double du = 0.0, dz = 0.0;
      for (std::size_t i = 0; i < n; ++i) du += (up[i] - ua[i]) * (up[i] - ua[i]);
      for (std::size_t q = 0; q < m; ++q) dz += (zp[q] - za[q]) * (zp[q] - za[q]);
      if (du > 1e-300 && dz > 1e-300) {
        const double target = std::sqrt(du / dz);
        ratio = std::clamp(std::exp(0.5 * std::log(target) + 0.5 * std::log(ratio)), 1e-4, 1e4);
      }
      ua = up;
      za = zp;
      u = up;
      z = zp;
      since_restart_limit = std::max<long>(64, static_cast<long>(0.36 * static_cast<double>(it)));
      k = 0;
      continue;
    }
    r_prev = r;
    const double wk = static_cast<double>(k + 1) / static_cast<double>(k + 2);
    for (std::size_t i = 0; i < n; ++i) u[i] = wk * (2.0 * up[i] - u[i]) + (1.0 - wk) * ua[i];
    for (std::size_t q = 0; q < m; ++q) z[q] = wk * (2.0 * zp[q] - z[q]) + (1.0 - wk) * za[q];
    ++k;
  }
  u = up;
  z = zp;
  fail(ErrorCode::convergence_failure, "primal-dual iteration reached its cap", last.gap);
}

}  // namespace l1flow::detail
