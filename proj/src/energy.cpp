#include "l1flow/energy.hpp"

#include <algorithm>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <cstdint>
#include <sstream>

#include "l1flow/common.hpp"

namespace l1flow {

const char* to_string(Family f) {
  switch (f) {
    case Family::quadratic:
      return "quadratic";
    case Family::aniso_norm:
      return "aniso-norm";
    case Family::area:
      return "area";
    case Family::power:
      return "power";
  }
  return "?";
}

IntegrandSpec IntegrandSpec::quadratic() { return IntegrandSpec{}; }

IntegrandSpec IntegrandSpec::aniso_norm(Norm phi) {
  IntegrandSpec s;
  s.family = Family::aniso_norm;
  s.separable = phi.separable();
  s.norm = std::move(phi);
  s.gamma = 0.0;
  return s;
}

IntegrandSpec IntegrandSpec::area(bool shifted) {
  IntegrandSpec s;
  s.family = Family::area;
  s.gamma = 0.0;
  s.separable = false;
  s.shift = shifted ? 1.0 : 0.0;
  return s;
}

IntegrandSpec IntegrandSpec::power(double exponent) {
  require(exponent > 1.0 && exponent <= 4.0, "power exponent must lie in (1, 4]");
  IntegrandSpec s;
  s.family = Family::power;
  s.exponent = exponent;
  s.gamma = exponent == 2.0 ? 1.0 : 0.0;
  s.separable = exponent == 2.0;
  return s;
}

std::string IntegrandSpec::name() const {
  std::ostringstream os;
  os << to_string(family);
  if (family == Family::aniso_norm) os << '(' << norm.name() << ')';
  if (family == Family::power) os << '(' << exponent << ')';
  if (family == Family::area && shift != 0.0) os << "(shifted)";
  return os.str();
}

namespace {

// Root t in [0, r / sigma] of chi(t) = k(t) + sigma t - r, k increasing with k(0) = 0.
template <class K, class DK>
double radial_root(double r, double sigma, K k, DK dk, const char* what) {
  if (r == 0.0) return 0.0;
  auto chi = [&](double t) { return k(t) + sigma * t - r; };
  const double hi = r / sigma;
  std::uintmax_t iters = 200;
  const double t = boost::math::tools::newton_raphson_iterate(
      [&](double x) { return std::make_pair(chi(x), dk(x) + sigma); }, r / (1.0 + sigma), 0.0, hi,
      std::numeric_limits<double>::digits - 2, iters);
  const double res = std::abs(chi(t));
  if (!(res <= 1e-12 * std::max(1.0, r)))
    fail(ErrorCode::convergence_failure, std::string(what) + " proximal Newton iteration did not converge", res);
  return t;
}

double radius(const double* q, int d) { return d == 1 ? std::abs(q[0]) : std::hypot(q[0], q[1]); }

double dual_exponent(double s) { return s / (s - 1.0); }

}  // namespace

double cell_integrand(const IntegrandSpec& spec, const double* p, int d) {
  switch (spec.family) {
    case Family::quadratic:
      return 0.5 * (d == 1 ? p[0] * p[0] : p[0] * p[0] + p[1] * p[1]);
    case Family::aniso_norm:
      return d == 1 ? spec.norm(Vec2{std::abs(p[0]), 0.0}) : spec.norm(Vec2{p[0], p[1]});
    case Family::area: {
      const double r = radius(p, d);
      return std::sqrt(1.0 + r * r) - spec.shift;
    }
    case Family::power:
      return std::pow(radius(p, d), spec.exponent) / spec.exponent;
  }
  return 0.0;
}

double cell_conjugate(const IntegrandSpec& spec, const double* q, int d) {
  switch (spec.family) {
    case Family::quadratic:
      return 0.5 * (d == 1 ? q[0] * q[0] : q[0] * q[0] + q[1] * q[1]);
    case Family::aniso_norm: {
      const double g = d == 1 ? std::abs(q[0]) / spec.norm(Vec2{1.0, 0.0}) : spec.norm.dual(Vec2{q[0], q[1]});
      return g <= 1.0 + 1e-9 ? 0.0 : kInfinity;
    }
    case Family::area: {
      const double r = radius(q, d);
      if (r > 1.0) return kInfinity;
      return -std::sqrt(std::max(0.0, 1.0 - r * r)) + spec.shift;
    }
    case Family::power: {
      const double sd = dual_exponent(spec.exponent);
      return std::pow(radius(q, d), sd) / sd;
    }
  }
  return 0.0;
}

void cell_prox_conjugate(const IntegrandSpec& spec, double* q, int d, double sigma) {
  switch (spec.family) {
    case Family::quadratic: {
      const double f = 1.0 / (1.0 + sigma);
      for (int k = 0; k < d; ++k) q[k] *= f;
      return;
    }
    case Family::aniso_norm: {
      if (d == 1) {
        const double c = spec.norm(Vec2{1.0, 0.0});
        q[0] = std::clamp(q[0], -c, c);
      } else {
        const Vec2 w = spec.norm.project_dual_ball(Vec2{q[0], q[1]});
        q[0] = w.x;
        q[1] = w.y;
      }
      return;
    }
    case Family::area: {
      // Moreau: w = q - sigma prox_{F/sigma}(q/sigma); the primal radius t
      // solves t / sqrt(1 + t^2) + sigma t = r and |w| = t / sqrt(1 + t^2) < 1.
      const double r = radius(q, d);
      if (r == 0.0) return;
      const double t = radial_root(
          r, sigma, [](double x) { return x / std::sqrt(1.0 + x * x); },
          [](double x) { return 1.0 / ((1.0 + x * x) * std::sqrt(1.0 + x * x)); }, "area");
      const double f = (t / std::sqrt(1.0 + t * t)) / r;
      for (int k = 0; k < d; ++k) q[k] *= f;
      return;
    }
    case Family::power: {
      // primal radius t solves t^(s-1) + sigma t = r, and |w| = t^(s-1)
      const double r = radius(q, d);
      if (r == 0.0) return;
      const double a = spec.exponent - 1.0;
      const double t = radial_root(
          r, sigma, [a](double x) { return std::pow(x, a); },
          [a](double x) { return x > 0.0 ? a * std::pow(x, a - 1.0) : 0.0; },
          "power");
      const double f = std::pow(t, a) / r;
      for (int k = 0; k < d; ++k) q[k] *= f;
      return;
    }
  }
}

void cell_gradient(const IntegrandSpec& spec, const double* p, double* g, int d) {
  switch (spec.family) {
    case Family::quadratic:
      for (int k = 0; k < d; ++k) g[k] = p[k];
      return;
    case Family::area: {
      const double r = radius(p, d);
      const double f = 1.0 / std::sqrt(1.0 + r * r);
      for (int k = 0; k < d; ++k) g[k] = f * p[k];
      return;
    }
    case Family::power: {
      const double r = radius(p, d);
      const double f = r > 0.0 ? std::pow(r, spec.exponent - 2.0) : 0.0;
      for (int k = 0; k < d; ++k) g[k] = f * p[k];
      return;
    }
    case Family::aniso_norm:
      fail(ErrorCode::invalid_argument, "the aniso-norm integrand is not differentiable");
  }
}

double eval_integrand(const IntegrandSpec& spec, Vec2 p) {
  const double v[2] = {p.x, p.y};
  return cell_integrand(spec, v, 2) + spec.shift;
}

double eval_conjugate(const IntegrandSpec& spec, Vec2 q) {
  const double v[2] = {q.x, q.y};
  const double c = cell_conjugate(spec, v, 2);
  return c == kInfinity ? c : c - spec.shift;
}

Vec2 prox_conjugate(const IntegrandSpec& spec, Vec2 q, double sigma) {
  require(sigma > 0.0, "prox step must be positive");
  double v[2] = {q.x, q.y};
  cell_prox_conjugate(spec, v, 2, sigma);
  return {v[0], v[1]};
}

Vec2 integrand_gradient(const IntegrandSpec& spec, Vec2 p) {
  const double v[2] = {p.x, p.y};
  double g[2] = {0.0, 0.0};
  cell_gradient(spec, v, g, 2);
  return {g[0], g[1]};
}

double energy_from_gradient(const IntegrandSpec& spec, std::span<const double> p, const GridGeometry& g) {
  const int d = g.dim();
  const std::size_t cells = p.size() / d;
  std::vector<double> terms(cells);
  parallel_for(cells, [&](std::size_t c) { terms[c] = cell_integrand(spec, &p[c * d], d); });
  return g.volume_element() * tree_sum(terms);
}

double conjugate_sum(const IntegrandSpec& spec, std::span<const double> z, const GridGeometry& g) {
  const int d = g.dim();
  const std::size_t cells = z.size() / d;
  std::vector<double> terms(cells);
  parallel_for(cells, [&](std::size_t c) { terms[c] = cell_conjugate(spec, &z[c * d], d); });
  for (double t : terms)
    if (t == kInfinity) return kInfinity;
  return g.volume_element() * tree_sum(terms);
}

double eval_energy(const IntegrandSpec& spec, const GridFunction& u) {
  const GridGeometry& g = u.geometry();
  std::vector<double> p(g.cell_count() * g.dim());
  Stencil(g).gradient(u.values(), u.ghost(), p);
  return energy_from_gradient(spec, p, g);
}

SubgradientReport subgradient_from_dual(const IntegrandSpec& spec, const DualField& z, const GridFunction& u) {
  const GridGeometry& g = u.geometry();
  require(z.geometry == g, "dual field and grid function have different geometry");
  const Stencil st(g);
  SubgradientReport rep;
  rep.q.resize(g.node_count());
  st.transpose(z.data, rep.q);

  const int d = g.dim();
  std::vector<double> p(g.cell_count() * d);
  st.gradient(u.values(), u.ghost(), p);
  rep.residual = -kInfinity;
  rep.min_residual = kInfinity;
  for (std::size_t c = 0; c < st.cells(); ++c) {
    double zp = 0.0;
    for (int k = 0; k < d; ++k) zp += z.data[c * d + k] * p[c * d + k];
    const double r = cell_integrand(spec, &p[c * d], d) + cell_conjugate(spec, &z.data[c * d], d) - zp;
    rep.residual = std::max(rep.residual, r);
    rep.min_residual = std::min(rep.min_residual, r);
  }
  return rep;
}

DualField smooth_dual(const IntegrandSpec& spec, const GridFunction& u) {
  const GridGeometry& g = u.geometry();
  DualField z(g);
  std::vector<double> p(z.data.size());
  Stencil(g).gradient(u.values(), u.ghost(), p);
  const int d = g.dim();
  for (std::size_t c = 0; c < z.cells(); ++c) cell_gradient(spec, &p[c * d], &z.data[c * d], d);
  return z;
}

double check_submodularity(const IntegrandSpec& spec, const GridFunction& u, const GridFunction& v) {
  require(u.geometry() == v.geometry(), "submodularity needs a common geometry");
  require(std::equal(u.ghost().begin(), u.ghost().end(), v.ghost().begin(), v.ghost().end()),
          "submodularity needs a common boundary trace");
  std::vector<double> lo(u.size()), hi(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    lo[i] = std::min(u[i], v[i]);
    hi[i] = std::max(u[i], v[i]);
  }
  const double a = eval_energy(spec, u.with_values(std::move(lo))) + eval_energy(spec, u.with_values(std::move(hi)));
  const double b = eval_energy(spec, u) + eval_energy(spec, v);
  return a - b;
}

}  // namespace l1flow
