#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "l1flow/energy.hpp"
#include "l1flow/flow.hpp"
#include "l1flow/grid.hpp"
#include "l1flow/report.hpp"
#include "l1flow/step.hpp"

namespace l1flow {

enum class SubsolutionVerdict { certified_by_laplacian, probe_passed, refuted };

const char* to_string(SubsolutionVerdict v);

struct SubsolutionResult {
  SubsolutionVerdict verdict = SubsolutionVerdict::probe_passed;
  double worst_energy_change = 0.0;  // min over probes of Phi(probe) - Phi(u0)
  double min_laplacian = 0.0;        // quadratic family only, over interior nodes
  int probes = 0;
};

/// Random downward compactly supported probes, plus the Delta_h u0 >= 0 certificate for the quadratic family.
SubsolutionResult is_subsolution(const IntegrandSpec& spec, const GridFunction& u0, int n_probes, unsigned seed = 1);

struct ObstacleSolution {
  double lambda = 0.0;
  GridFunction v;
  double mass = 0.0;    // h^d sum (v - u0)
  double energy = 0.0;  // Phi(v)
  double gap = 0.0;
  long iterations = 0;
};

/// argmin { Phi(v) + lambda h^d sum v : v >= u0 } with the boundary data of u0 (Dirichlet grids only).
ObstacleSolution solve_obstacle(const IntegrandSpec& spec, const GridFunction& u0, double lambda, double tol,
                                const StepOptions& options = {});

/// Smallest multiplier at which u0 itself solves the obstacle problem: max over nodes of div grad F(grad u0).
double contact_multiplier(const IntegrandSpec& spec, const GridFunction& u0);

/// Geometric grid from lambda_max down to 1e-3 lambda_max, followed by 0.
std::vector<double> default_lambda_grid(double lambda_max, int samples = 64);

struct VolumeSample {
  double mass = 0.0;
  double energy = 0.0;
  double lambda = 0.0;
};

class VolumeFunction {
 public:
  VolumeFunction() = default;
  /// Samples in any order; they are sorted by mass and duplicates in mass are merged.
  explicit VolumeFunction(std::vector<VolumeSample> samples);

  const std::vector<VolumeSample>& samples() const { return samples_; }
  double max_mass() const { return samples_.back().mass; }
  /// Monotone piecewise cubic Hermite interpolant of lambda(m), clamped to the sampled range.
  double lambda_of_mass(double m) const;

  /// Convexity, multiplier monotonicity and the subgradient inequality on consecutive samples.
  Report validate(double tol = 1e-8) const;

 private:
  std::vector<VolumeSample> samples_;
  std::function<double(double)> interp_;
};

/// Sweeps solve_obstacle over a strictly decreasing lambda grid (in parallel across lambda).
VolumeFunction build_volume_function(const IntegrandSpec& spec, const GridFunction& u0,
                                     const std::vector<double>& lambda_grid, double tol,
                                     const StepOptions& options = {});

struct ScalarSample {
  double t = 0.0;
  double mass = 0.0;
  double lambda = 0.0;
};

/// Implicit Euler for m' = lambda(m): m_n = m_{n-1} + tau lambda(m_n), each step by bisection to 1e-12.
std::vector<ScalarSample> scalar_flow(const VolumeFunction& vf, double tau, double T);

/// Mass non-decreasing, multiplier non-increasing, and m(t_n) = sum_k tau lambda(t_k) (right endpoints,
/// which implicit Euler satisfies exactly).
Report scalar_flow_report(const std::vector<ScalarSample>& flow, double tol = 1e-12);

/// Multiplier at time t by linear interpolation of the scalar samples.
double scalar_lambda_at(const std::vector<ScalarSample>& flow, double t);

/// Compares v^{lambda(t)} with the generic trace at sampled times and checks that its iterates increase.
Report reconstruct_and_crosscheck(const IntegrandSpec& spec, const GridFunction& u0,
                                  const std::vector<ScalarSample>& flow, const VolumeFunction& vf,
                                  const FlowTrace& trace, double tol, int time_samples = 16,
                                  SubsolutionVerdict verdict = SubsolutionVerdict::certified_by_laplacian);

void write_volume_csv(std::ostream& os, const VolumeFunction& vf);
void write_scalar_csv(std::ostream& os, const std::vector<ScalarSample>& flow);

}  // namespace l1flow
