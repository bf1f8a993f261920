#include "active_set.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseCholesky>

#include "l1flow/common.hpp"

namespace l1flow::detail {

namespace {

constexpr int kMaxSweeps = 200;

double sup(std::span<const double> x) {
  double m = 0.0;
  for (double a : x) m = std::max(m, std::abs(a));
  return m;
}

}  // namespace

QuadraticKkt::QuadraticKkt(const Stencil& stencil, std::span<const double> offset)
    : neumann_(stencil.geometry().bc == Boundary::neumann),
      noise_(1e-13 * stencil.norm_bound() * stencil.norm_bound()),
      nodes_(stencil.geometry().node_count()) {
  const auto rows = static_cast<Eigen::Index>(offset.size());
  std::vector<Eigen::Triplet<double>> trip;
  for (const auto& e : stencil.matrix_entries()) trip.emplace_back(e.row, e.col, e.value);
  k_.resize(rows, static_cast<Eigen::Index>(nodes_));
  k_.setFromTriplets(trip.begin(), trip.end());
  b_ = Eigen::Map<const Eigen::VectorXd>(offset.data(), rows);
}

std::vector<double> QuadraticKkt::dual(std::span<const double> u) const {
  const Eigen::VectorXd z = k_ * Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size())) + b_;
  return {z.data(), z.data() + z.size()};
}

std::vector<double> QuadraticKkt::gradient(std::span<const double> u) const {
  const Eigen::VectorXd z = k_ * Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size())) + b_;
  const Eigen::VectorXd g = k_.transpose() * z;
  return {g.data(), g.data() + g.size()};
}

bool QuadraticKkt::solve(const std::vector<char>& fixed, std::span<const double> value,
                         const std::vector<std::vector<double>>& forces,
                         std::vector<std::vector<double>>& out, bool homogeneous) const {
  std::vector<int> free_index(nodes_, -1);
  int nfree = 0;
  Eigen::VectorXd ufix = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nodes_));
  for (std::size_t i = 0; i < nodes_; ++i) {
    if (!fixed[i]) free_index[i] = nfree++;
    else if (!homogeneous) ufix[static_cast<Eigen::Index>(i)] = value[i];
  }
  out.assign(forces.size(), std::vector<double>(ufix.data(), ufix.data() + ufix.size()));
  if (nfree == 0) return true;
  // Without a fixed node the Neumann system has the constants in its kernel.
  if (neumann_ && nfree == static_cast<int>(nodes_)) return false;

  std::vector<Eigen::Triplet<double>> trip;
  for (int col = 0; col < k_.outerSize(); ++col) {
    if (free_index[static_cast<std::size_t>(col)] < 0) continue;
    for (Sparse::InnerIterator it(k_, col); it; ++it)
      trip.emplace_back(static_cast<int>(it.row()), free_index[static_cast<std::size_t>(col)], it.value());
  }
  Sparse kf(k_.rows(), nfree);
  kf.setFromTriplets(trip.begin(), trip.end());
  const Sparse m = Sparse(kf.transpose() * kf);
  Eigen::SimplicialLDLT<Sparse> ldlt(m);
  if (ldlt.info() != Eigen::Success) return false;

  Eigen::VectorXd base = Eigen::VectorXd::Zero(nfree);
  if (!homogeneous) base = -(kf.transpose() * (k_ * ufix + b_));
  for (std::size_t f = 0; f < forces.size(); ++f) {
    Eigen::VectorXd rhs = base;
    for (std::size_t i = 0; i < nodes_; ++i)
      if (free_index[i] >= 0) rhs[free_index[i]] -= forces[f][i];
    const Eigen::VectorXd x = ldlt.solve(rhs);
    if (ldlt.info() != Eigen::Success || !x.allFinite()) return false;
    const double res = (m * x - rhs).lpNorm<Eigen::Infinity>();
    if (!(res <= 1e-9 * (1.0 + rhs.lpNorm<Eigen::Infinity>()))) return false;
    for (std::size_t i = 0; i < nodes_; ++i)
      if (free_index[i] >= 0) out[f][i] = x[free_index[i]];
  }
  return true;
}

bool QuadraticKkt::refine_shrink(std::span<const double> v, double lambda, std::vector<double>& u) const {
  // s = 0 pins u to v; s = +-1 frees the node with force lambda s.
  std::vector<int> s(nodes_);
  for (std::size_t i = 0; i < nodes_; ++i) s[i] = u[i] > v[i] ? 1 : (u[i] < v[i] ? -1 : 0);
  const double dtol = 1e-13 * (1.0 + sup(v));
  const double gnoise = noise_ * (1.0 + sup(v));
  std::vector<char> fixed(nodes_);
  std::vector<std::vector<double>> force(1, std::vector<double>(nodes_)), sol;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    for (std::size_t i = 0; i < nodes_; ++i) {
      fixed[i] = s[i] == 0;
      force[0][i] = lambda * s[i];
    }
    if (!solve(fixed, v, force, sol)) return false;
    const auto g = gradient(sol[0]);
    bool changed = false;
    for (std::size_t i = 0; i < nodes_; ++i) {
      const double d = sol[0][i] - v[i];
      if (s[i] != 0 && s[i] * d < -dtol) {
        s[i] = 0;
        changed = true;
      } else if (s[i] == 0 && std::abs(g[i]) > lambda * (1.0 + 1e-12) + gnoise) {
        // decreasing u_i lowers the objective when g_i > lambda
        s[i] = g[i] > 0.0 ? -1 : 1;
        changed = true;
      }
    }
    if (!changed) {
      u = std::move(sol[0]);
      return true;
    }
  }
  return false;
}

bool QuadraticKkt::refine_squared_l1(std::span<const double> v, double c, std::vector<double>& u) const {
  std::vector<int> s(nodes_);
  for (std::size_t i = 0; i < nodes_; ++i) s[i] = u[i] > v[i] ? 1 : (u[i] < v[i] ? -1 : 0);
  const double dtol = 1e-13 * (1.0 + sup(v));
  const double gnoise = noise_ * (1.0 + sup(v));
  std::vector<char> fixed(nodes_);
  std::vector<std::vector<double>> none(1, std::vector<double>(nodes_, 0.0)), sign(1, std::vector<double>(nodes_));
  std::vector<std::vector<double>> x0, y;
  std::vector<double> x(nodes_);
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    for (std::size_t i = 0; i < nodes_; ++i) {
      fixed[i] = s[i] == 0;
      sign[0][i] = s[i];
    }
    // With force c m s the solution is x0 + c m y, y = -M^{-1} s, and m = sum s (u - v) closes the system.
    if (!solve(fixed, v, none, x0) || !solve(fixed, v, sign, y, true)) return false;
    double a = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < nodes_; ++i) {
      if (s[i] == 0) continue;
      a += s[i] * (x0[0][i] - v[i]);
      sy += s[i] * y[0][i];
    }
    const double m = std::max(a / (1.0 - c * sy), 0.0);
    const double lam = c * m;
    for (std::size_t i = 0; i < nodes_; ++i) x[i] = x0[0][i] + lam * y[0][i];
    const auto g = gradient(x);
    bool changed = false;
    for (std::size_t i = 0; i < nodes_; ++i) {
      const double d = x[i] - v[i];
      if (s[i] != 0 && s[i] * d < -dtol) {
        s[i] = 0;
        changed = true;
      } else if (s[i] == 0 && std::abs(g[i]) > lam * (1.0 + 1e-12) + gnoise) {
        s[i] = g[i] > 0.0 ? -1 : 1;
        changed = true;
      }
    }
    if (!changed) {
      u = x;
      return true;
    }
  }
  return false;
}

bool QuadraticKkt::refine_obstacle(std::span<const double> lo, double hi, double lambda, std::vector<double>& u) const {
  // 0 free, -1 at the lower obstacle, +1 at the upper bound
  std::vector<int> state(nodes_);
  std::vector<double> up(nodes_), target(nodes_);
  for (std::size_t i = 0; i < nodes_; ++i) {
    up[i] = std::max(lo[i], hi);
    state[i] = u[i] <= lo[i] ? -1 : (u[i] >= up[i] ? 1 : 0);
  }
  const double dtol = 1e-13 * (1.0 + sup(lo) + std::abs(hi));
  std::vector<char> fixed(nodes_);
  std::vector<std::vector<double>> force(1, std::vector<double>(nodes_, lambda)), sol;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    for (std::size_t i = 0; i < nodes_; ++i) {
      fixed[i] = state[i] != 0;
      target[i] = state[i] > 0 ? up[i] : lo[i];
    }
    if (!solve(fixed, target, force, sol)) return false;
    const auto g = gradient(sol[0]);
    const double gtol = 1e-12 * std::abs(lambda) + noise_ * (1.0 + sup(lo) + std::abs(hi));
    bool changed = false;
    for (std::size_t i = 0; i < nodes_; ++i) {
      const double gi = g[i] + lambda;  // derivative of the objective in u_i
      int next = state[i];
      if (state[i] == 0) {
        if (sol[0][i] < lo[i] - dtol) next = -1;
        else if (sol[0][i] > up[i] + dtol) next = 1;
      } else if (lo[i] < up[i]) {
        if (state[i] < 0 && gi < -gtol) next = 0;
        if (state[i] > 0 && gi > gtol) next = 0;
      }
      if (next != state[i]) {
        state[i] = next;
        changed = true;
      }
    }
    if (!changed) {
      for (std::size_t i = 0; i < nodes_; ++i) sol[0][i] = std::clamp(sol[0][i], lo[i], up[i]);
      u = std::move(sol[0]);
      return true;
    }
  }
  return false;
}

}  // namespace l1flow::detail
