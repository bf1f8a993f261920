#pragma once

#include <span>
#include <string>
#include <vector>

#include "l1flow/grid.hpp"
#include "l1flow/norm.hpp"

namespace l1flow {

enum class Family { quadratic, aniso_norm, area, power };

const char* to_string(Family f);

/**
 * A convex integrand F on gradients together with its conjugate and the
 * proximal map of the conjugate.
 *
 * quadratic  F(p) = |p|^2 / 2
 * aniso-norm F(p) = phi(p)
 * area       F(p) = sqrt(1 + |p|^2) - shift, shift in {0, 1}
 * power      F(p) = |p|^s / s, s in (1, 4]
 *
 * On 1D grids F acts on the x-component only; conjugates and proxes are those
 * of the restriction t -> F(t e_1).
 */
struct IntegrandSpec {
  Family family = Family::quadratic;
  Norm norm;              // aniso-norm only
  double exponent = 2.0;  // power only
  double gamma = 1.0;     // strong convexity modulus, 0 if none
  bool separable = true;  // F(p) = F_1(p_1) + F_2(p_2)
  double shift = 0.0;     // area only: constant subtracted by eval_energy

  static IntegrandSpec quadratic();
  static IntegrandSpec aniso_norm(Norm phi);
  /// shifted = true stores F - 1 so that F(0) = 0.
  static IntegrandSpec area(bool shifted = false);
  static IntegrandSpec power(double s);

  std::string name() const;
  /// C^1 families, for which grad F is available.
  bool smooth() const { return family != Family::aniso_norm; }
  bool strictly_convex_superlinear() const { return family == Family::quadratic || family == Family::power; }
};

/// F(p); the area family returns the unshifted value sqrt(1 + |p|^2).
double eval_integrand(const IntegrandSpec& spec, Vec2 p);
/// F*(q), kInfinity outside the domain.
double eval_conjugate(const IntegrandSpec& spec, Vec2 q);
/// argmin_w |w - q|^2 / (2 sigma) + F*(w).
Vec2 prox_conjugate(const IntegrandSpec& spec, Vec2 q, double sigma);
/// grad F(p) for smooth families.
Vec2 integrand_gradient(const IntegrandSpec& spec, Vec2 p);

// Cell-level versions acting on d = 1 or 2 components, including the shift.
double cell_integrand(const IntegrandSpec& spec, const double* p, int d);
double cell_conjugate(const IntegrandSpec& spec, const double* q, int d);
void cell_prox_conjugate(const IntegrandSpec& spec, double* q, int d, double sigma);
void cell_gradient(const IntegrandSpec& spec, const double* p, double* g, int d);

/// Phi(u) = h^d sum_cells (F(grad_h u) - shift), fixed tree reduction.
double eval_energy(const IntegrandSpec& spec, const GridFunction& u);
double energy_from_gradient(const IntegrandSpec& spec, std::span<const double> p, const GridGeometry& g);
/// h^d sum_cells F*(z).
double conjugate_sum(const IntegrandSpec& spec, std::span<const double> z, const GridGeometry& g);

struct SubgradientReport {
  std::vector<double> q;  // -div_h z
  double residual = 0.0;  // max_cells F(grad u) + F*(z) - z . grad u
  double min_residual = 0.0;
};

SubgradientReport subgradient_from_dual(const IntegrandSpec& spec, const DualField& z, const GridFunction& u);

/// z = grad F(grad_h u), the exact certificate for smooth families.
DualField smooth_dual(const IntegrandSpec& spec, const GridFunction& u);

/// Phi(u min v) + Phi(u max v) - Phi(u) - Phi(v).
double check_submodularity(const IntegrandSpec& spec, const GridFunction& u, const GridFunction& v);

}  // namespace l1flow
