#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "l1flow/energy.hpp"
#include "l1flow/flow.hpp"
#include "l1flow/geom.hpp"
#include "l1flow/grid.hpp"
#include "l1flow/report.hpp"

namespace l1flow {

enum class ExperimentKind { flow, monotone, geom, step_oracle, cheeger };

const char* to_string(ExperimentKind k);

/// A validated experiment. Every input (profiles, CSV files, builtin names) is resolved at parse time,
/// so a config that parses never fails for configuration reasons later.
struct ExperimentConfig {
  std::string name;
  ExperimentKind kind = ExperimentKind::flow;
  std::string output;
  unsigned seed = 1;
  std::string canonical;  // the merged JSON config, echoed into reports.json

  // grid experiments
  IntegrandSpec spec;
  GridFunction u0;
  std::optional<GridFunction> u0_perturbed;  // second run for the contraction check
  double tau = 1e-3;
  double T = 0.1;
  double tol = 1e-10;
  double assert_tol = 1e-6;
  double decay_tol = 1e-3;
  StepMethod method = StepMethod::automatic;
  int snapshot_stride = 0;  // 0 writes the first and last iterate only

  // monotone
  double scalar_tau = 1e-4;
  int lambda_samples = 64;
  int probes = 64;
  double crosscheck_tol = 1e-3;

  // step-oracle
  int instances = 20;
  double tau_min = 1e-3;
  double tau_max = 1e-1;

  // geometry: a polygon flow and/or discrete ball steps
  ConvexPolygon body;  // empty when no polygon flow is configured
  std::string body_name;
  std::optional<WulffShape> wulff;
  double dt = 1e-3;
  double ball_law_floor = 0.3;  // disc bodies only
  double ball_law_tol = 5e-3;
  std::vector<std::pair<double, double>> ball_cases;  // a zero second radius is a single ball
  double ball_tau = 1e-4;
  int ball_steps = 10;
  double expansion_tol = 1e-9;
  int scan_points = 64;
};

/// Parses JSON config text. Relative CSV paths resolve against base_dir. Throws configuration_error.
ExperimentConfig parse_config(const std::string& text, const std::string& base_dir = ".");

/// A path to a JSON config, or "builtin:<name>".
ExperimentConfig load_config(const std::string& source);

std::vector<std::string> builtin_names();
/// JSON text of a builtin config; throws configuration_error for unknown names.
std::string builtin_config(const std::string& name);

struct ExperimentOutcome {
  bool pass = false;           // every enabled assertion passed
  bool solver_failure = false;  // a flow aborted; its partial outputs were still written
  std::string failure;
  std::vector<Report> reports;
  std::vector<std::string> files;  // written, relative to the output directory
};

/// Runs the experiment and writes its outputs into output_dir (the config's output when empty).
/// Solver errors other than aborted flows propagate as Error.
ExperimentOutcome run_experiment(const ExperimentConfig& config, const std::string& output_dir = "");

}  // namespace l1flow
