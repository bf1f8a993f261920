#pragma once

// Exact refinement for the quadratic integrand F(p) = |p|^2 / 2.
//
// Each method takes a primal point from the first-order solver and runs a
// primal-dual active-set iteration on the KKT system of
//     min_u 1/2 |K u + b|^2 + G(u).
// It returns true only once the sign or contact pattern is self-consistent, so
// the returned u satisfies the KKT conditions to rounding error. On false, u is
// left unchanged.

#include <span>
#include <vector>

#include <Eigen/SparseCore>

#include "l1flow/grid.hpp"

namespace l1flow::detail {

class QuadraticKkt {
 public:
  QuadraticKkt(const Stencil& stencil, std::span<const double> offset);

  /// G(u) = lambda sum |u - v|.
  bool refine_shrink(std::span<const double> v, double lambda, std::vector<double>& u) const;
  /// G(u) = c (sum |u - v|)^2 / 2.
  bool refine_squared_l1(std::span<const double> v, double c, std::vector<double>& u) const;
  /// G(u) = lambda sum u restricted to lo <= u <= max(lo, hi).
  bool refine_obstacle(std::span<const double> lo, double hi, double lambda, std::vector<double>& u) const;

  /// The optimal dual z = K u + b.
  std::vector<double> dual(std::span<const double> u) const;
  /// K^T (K u + b).
  std::vector<double> gradient(std::span<const double> u) const;

 private:
  using Sparse = Eigen::SparseMatrix<double>;

  // Nodes with fixed[i] hold value[i]; the others solve (K^T (K u + b))_i = -force_i for each force.
  // A homogeneous solve drops b and the fixed values, giving the linear response to the force alone.
  bool solve(const std::vector<char>& fixed, std::span<const double> value,
             const std::vector<std::vector<double>>& forces, std::vector<std::vector<double>>& out,
             bool homogeneous = false) const;

  bool neumann_;
  double noise_;  // rounding level of K^T K u per unit |u|
  std::size_t nodes_;
  Sparse k_;
  Eigen::VectorXd b_;
};

}  // namespace l1flow::detail
