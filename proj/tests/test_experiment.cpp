#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "l1flow/common.hpp"
#include "l1flow/experiment.hpp"

using namespace l1flow;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("l1flow_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

ErrorCode code_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::internal;
}

}  // namespace

TEST_CASE("builtins parse") {
  const auto names = builtin_names();
  for (const char* required : {"sin1d-dirichlet", "parabola-subsolution", "square-cheeger", "disc-flow", "two-balls"})
    CHECK(std::find(names.begin(), names.end(), required) != names.end());
  for (const auto& n : names) {
    const auto c = load_config("builtin:" + n);
    CHECK(c.name == n);
    CHECK(c.output == "out/" + n);
  }
  CHECK_THROWS_AS(builtin_config("nope"), Error);
}

TEST_CASE("config fields") {
  const auto c = parse_config(R"({"builtin": "sin1d-dirichlet", "tau": 0.002, "seed": 7})");
  CHECK(c.kind == ExperimentKind::flow);
  CHECK(c.tau == 0.002);
  CHECK(c.seed == 7);
  CHECK(c.u0.geometry().nx == 64);
  CHECK(c.u0.geometry().h == doctest::Approx(1.0 / 65));
  REQUIRE(c.u0_perturbed.has_value());
  for (std::size_t k = 0; k < c.u0.ghost().size(); ++k) CHECK(c.u0.ghost()[k] == c.u0_perturbed->ghost()[k]);

  const auto g = parse_config(R"({"kind": "geom", "polygon": {"rectangle": [0, 0, 2, 1]}, "norm": "l1", "dt": 0.01, "T": 1})");
  CHECK(g.body.area() == doctest::Approx(2.0));
  CHECK(g.wulff->phi.kind() == NormKind::l1);

  const auto n = parse_config(R"({"kind": "flow", "integrand": "quadratic", "grid": {"nx": 8, "ny": 4}, "u0": "random-smooth", "tau": 0.01, "T": 0.1})");
  CHECK(n.u0.geometry().bc == Boundary::neumann);
  CHECK(n.u0.geometry().h == doctest::Approx(1.0 / 8));
}

TEST_CASE("config errors") {
  CHECK(code_of("{") == ErrorCode::configuration_error);
  CHECK(code_of("[]") == ErrorCode::configuration_error);
  CHECK(code_of(R"({"builtin": "sin1d-dirichlet", "tau": -1})") == ErrorCode::configuration_error);
  CHECK(code_of(R"({"builtin": "sin1d-dirichlet", "T": 0})") == ErrorCode::configuration_error);
  CHECK(code_of(R"({"builtin": "sin1d-dirichlet", "bogus": 1})") == ErrorCode::configuration_error);
  CHECK(code_of(R"({"builtin": "missing"})") == ErrorCode::configuration_error);
  CHECK(code_of(R"({"kind": "banana"})") == ErrorCode::configuration_error);
  CHECK(code_of(R"({"builtin": "sin1d-dirichlet", "u0": "wiggle"})") == ErrorCode::configuration_error);
  CHECK(code_of(R"({"builtin": "sin1d-dirichlet", "u0": {"csv": "/nonexistent.csv"}})") == ErrorCode::configuration_error);
  CHECK(code_of(R"({"builtin": "sin1d-dirichlet", "grid": {"nx": 0, "bc": "dirichlet"}})") == ErrorCode::configuration_error);
  CHECK(code_of(R"({"builtin": "sin1d-dirichlet", "integrand": "cubic"})") == ErrorCode::configuration_error);
  CHECK(code_of(R"({"builtin": "parabola-subsolution", "integrand": {"family": "aniso-norm", "norm": "l1"}})") ==
        ErrorCode::configuration_error);
  CHECK(code_of(R"({"builtin": "square-cheeger", "polygon": {"vertices": [[0, 0], [0, 1], [1, 1], [1, 0]]}})") ==
        ErrorCode::configuration_error);
  CHECK(code_of(R"({"builtin": "two-balls", "ball_steps": {"radii": [[-1, 1]]}})") == ErrorCode::configuration_error);
  CHECK(code_of(R"({"builtin": "sin1d-dirichlet", "method": "newton"})") == ErrorCode::configuration_error);
  CHECK(code_of(R"({"kind": "cheeger", "polygon": {"rectangle": ["a", 0, 1, 1]}})") == ErrorCode::configuration_error);
  CHECK(code_of(R"({"kind": "cheeger", "polygon": {"csv": 7}})") == ErrorCode::configuration_error);
  // keys of another kind are rejected rather than ignored
  CHECK(code_of(R"({"builtin": "two-balls", "tau": 0.1})") == ErrorCode::configuration_error);
  CHECK(code_of(R"({"builtin": "parabola-subsolution", "perturbation": "sin-pi"})") == ErrorCode::configuration_error);
  CHECK(code_of(R"({"builtin": "square-cheeger", "dt": 0.1})") == ErrorCode::configuration_error);
}

TEST_CASE("csv inputs resolve against the config directory") {
  const auto dir = scratch("csv");
  fs::create_directories(dir);
  const GridGeometry g{8, 1, 1.0 / 9, Boundary::dirichlet};
  {
    std::ofstream os(dir / "u0.csv");
    write_csv(os, GridFunction::sample(g, [](double x, double) { return x * x; }));
    std::ofstream ps(dir / "body.csv");
    ps << "x,y\n0,0\n1,0\n0,1\n";
  }
  const auto c = parse_config(R"({"kind": "flow", "integrand": "quadratic", "grid": {"nx": 8, "bc": "dirichlet"},
                                   "u0": {"csv": "u0.csv"}, "tau": 0.01, "T": 0.05})",
                              dir.string());
  CHECK(c.u0[3] == doctest::Approx(std::pow(4.0 / 9, 2)));
  const auto mismatch = R"({"kind": "flow", "integrand": "quadratic", "grid": {"nx": 9, "bc": "dirichlet"},
                            "u0": {"csv": "u0.csv"}, "tau": 0.01, "T": 0.05})";
  CHECK_THROWS_AS(parse_config(mismatch, dir.string()), Error);
  const auto p = parse_config(R"({"kind": "cheeger", "polygon": {"csv": "body.csv"}})", dir.string());
  CHECK(p.body.area() == doctest::Approx(0.5));
  fs::remove_all(dir);
}

TEST_CASE("runs write their outputs and are reproducible") {
  for (const char* name : {"square-cheeger", "two-balls", "sin1d-dirichlet"}) {
    const auto c = load_config(std::string("builtin:") + name);
    const auto a = scratch(std::string(name) + "_a"), b = scratch(std::string(name) + "_b");
    set_thread_count(1);
    const auto oa = run_experiment(c, a.string());
    set_thread_count(4);
    const auto ob = run_experiment(c, b.string());
    set_thread_count(1);
    CHECK_MESSAGE(oa.pass, name);
    CHECK(oa.files == ob.files);
    CHECK(std::find(oa.files.begin(), oa.files.end(), "reports.json") != oa.files.end());
    CHECK(std::find(oa.files.begin(), oa.files.end(), "ledger.csv") != oa.files.end());
    for (const auto& f : oa.files) CHECK_MESSAGE(slurp(a / f) == slurp(b / f), name, "/", f);
    fs::remove_all(a);
    fs::remove_all(b);
  }
}

TEST_CASE("report content") {
  const auto dir = scratch("cheeger_report");
  const auto o = run_experiment(load_config("builtin:square-cheeger"), dir.string());
  const auto text = slurp(dir / "reports.json");
  CHECK(text.find("\"lambda_star\": 3.7724") != std::string::npos);
  CHECK(text.find("\"pass\": true") != std::string::npos);
  fs::remove_all(dir);

  const auto flow = scratch("flow_report");
  run_experiment(load_config("builtin:sin1d-dirichlet"), flow.string());
  std::ifstream ledger(flow / "ledger.csv");
  std::string line;
  std::getline(ledger, line);
  double prev = kInfinity;
  int n = 0;
  while (std::getline(ledger, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (n++ >= 1) {
      CHECK(row[2] <= prev + 1e-6);
      prev = row[2];
    }
  }
  CHECK(n == 501);
  CHECK(fs::exists(flow / "snapshots" / "u_00000.csv"));
  CHECK(fs::exists(flow / "snapshots" / "u_00500.csv"));
  fs::remove_all(flow);
}

TEST_CASE("a failing assertion is an outcome, not an error") {
  const auto dir = scratch("refuted");
  const auto c = parse_config(R"({"builtin": "parabola-subsolution", "u0": "neg-parabola", "T": 0.01})");
  const auto o = run_experiment(c, dir.string());
  CHECK_FALSE(o.pass);
  CHECK_FALSE(o.solver_failure);
  CHECK(o.failure == "assertions failed");
  fs::remove_all(dir);
}
