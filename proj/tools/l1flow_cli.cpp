// Command-line runner over the C API.
//
// Exit codes: 0 all assertions passed, 1 an assertion failed, 2 a solver failed or a flow aborted,
// 3 invalid config or arguments, 4 I/O error, 5 internal error. Every non-zero exit writes one JSON
// object to stderr.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "l1flow.h"

namespace {

using Json = nlohmann::ordered_json;

enum Exit { kPass = 0, kAssertion = 1, kSolver = 2, kConfig = 3, kIo = 4, kInternal = 5 };

int exit_for(l1f_status s) {
  switch (s) {
    case L1F_OK:
      return kPass;
    case L1F_ERR_CONVERGENCE:
      return kSolver;
    case L1F_ERR_CONFIG:
    case L1F_ERR_INVALID_ARGUMENT:
      return kConfig;
    case L1F_ERR_IO:
      return kIo;
    case L1F_ERR_INTERNAL:
      return kInternal;
  }
  return kInternal;
}

const char* kind_of(int code) {
  switch (code) {
    case kAssertion:
      return "assertion";
    case kSolver:
      return "solver";
    case kConfig:
      return "config";
    case kIo:
      return "io";
    default:
      return "internal";
  }
}

int diagnose(int code, const std::string& message, Json extra = Json::object()) {
  Json j;
  j["error"] = kind_of(code);
  j["exit_code"] = code;
  j["message"] = message;
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  std::cerr << j.dump() << '\n';
  return code;
}

int diagnose_last(const std::string& context) {
  const int code = exit_for(l1f_last_status());
  Json extra;
  extra["context"] = context;
  if (l1f_last_status() == L1F_ERR_CONVERGENCE) extra["last_value"] = l1f_last_error_value();
  return diagnose(code, l1f_last_error(), extra);
}

struct RunArgs {
  std::string config;
  std::string output;
  bool quiet = false;
};

int cmd_run(const RunArgs& a) {
  l1f_config* cfg = nullptr;
  if (l1f_config_load(a.config.c_str(), &cfg) != L1F_OK) return diagnose_last("config");
  const std::string out_dir = a.output.empty() ? l1f_config_output(cfg) : a.output;

  l1f_outcome* o = nullptr;
  const l1f_status s = l1f_experiment_run(cfg, out_dir.c_str(), &o);
  l1f_config_free(cfg);
  if (s != L1F_OK) return diagnose_last("run");

  const Json reports = Json::parse(l1f_outcome_reports_json(o));
  Json failed = Json::array();
  for (const auto& r : reports) {
    for (const auto& c : r["checks"]) {
      const bool pass = c["pass"].get<bool>();
      if (!pass) failed.push_back({{"report", r["name"]}, {"check", c["name"]}, {"value", c["value"]},
                                   {"threshold", c["threshold"]}});
      if (!a.quiet) {
        std::printf("%s  %s/%s  %s <= %s\n", pass ? "PASS" : "FAIL", r["name"].get<std::string>().c_str(),
                    c["name"].get<std::string>().c_str(), c["value"].dump().c_str(), c["threshold"].dump().c_str());
      }
    }
  }
  const bool pass = l1f_outcome_pass(o) != 0;
  const bool solver = l1f_outcome_solver_failure(o) != 0;
  const std::string failure = l1f_outcome_failure(o);
  if (!a.quiet) std::printf("%s: %s (outputs in %s)\n", pass ? "PASS" : "FAIL", a.config.c_str(), out_dir.c_str());
  l1f_outcome_free(o);

  if (pass) return kPass;
  Json extra;
  extra["output"] = out_dir;
  extra["failed_checks"] = failed;
  return diagnose(solver ? kSolver : kAssertion, failure, extra);
}

struct CompareArgs {
  std::string a, b;
  std::string mode = "sup";
  std::optional<double> threshold;
};

int cmd_compare(const CompareArgs& a) {
  l1f_trace* ta = nullptr;
  l1f_trace* tb = nullptr;
  if (l1f_trace_load(a.a.c_str(), &ta) != L1F_OK) return diagnose_last("trace " + a.a);
  if (l1f_trace_load(a.b.c_str(), &tb) != L1F_OK) {
    l1f_trace_free(ta);
    return diagnose_last("trace " + a.b);
  }
  l1f_comparison* c = nullptr;
  const l1f_status s = l1f_compare(ta, tb, &c);
  l1f_trace_free(ta);
  l1f_trace_free(tb);
  if (s != L1F_OK) return diagnose_last("compare");

  const bool sup = a.mode == "sup";
  double worst = 0.0, worst_t = 0.0;
  std::printf("t,%s\n", a.mode.c_str());
  for (size_t i = 0; i < l1f_comparison_size(c); ++i) {
    l1f_distance d;
    l1f_comparison_at(c, i, &d);
    const double v = sup ? d.sup : d.l1;
    if (v > worst) worst = v, worst_t = d.t;
    std::printf("%.17g,%.17g\n", d.t, v);
  }
  l1f_comparison_free(c);

  if (a.threshold && worst > *a.threshold) {
    Json extra;
    extra["mode"] = a.mode;
    extra["max_distance"] = worst;
    extra["at_t"] = worst_t;
    extra["threshold"] = *a.threshold;
    return diagnose(kAssertion, "trace distance exceeds the threshold", extra);
  }
  return kPass;
}

int cmd_builtins(const std::string& print) {
  if (!print.empty()) {
    const char* text = l1f_builtin_json(print.c_str());
    if (text == nullptr) return diagnose_last("builtins");
    std::printf("%s\n", text);
    return kPass;
  }
  for (size_t i = 0; i < l1f_builtin_count(); ++i) std::printf("%s\n", l1f_builtin_name(i));
  return kPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"L1 minimizing-movement flows: experiments, traces and comparisons"};
  app.require_subcommand(1);
  app.set_version_flag("--version", l1f_version());
  unsigned threads = 0;
  app.add_option("--threads", threads, "worker threads (default: L1FLOW_THREADS or 1)")->check(CLI::PositiveNumber);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "run an experiment config (a JSON path or builtin:<name>)");
  run_cmd->add_option("config", run.config, "config file or builtin:<name>")->required();
  run_cmd->add_option("-o,--output", run.output, "output directory (overrides the config)");
  run_cmd->add_flag("-q,--quiet", run.quiet, "print nothing on success");

  CompareArgs cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "distances between two trace.json files at common times");
  cmp_cmd->add_option("a", cmp.a, "first trace.json")->required();
  cmp_cmd->add_option("b", cmp.b, "second trace.json")->required();
  cmp_cmd->add_option("--mode", cmp.mode, "distance")->check(CLI::IsMember({"sup", "l1"}));
  cmp_cmd->add_option("--threshold", cmp.threshold, "fail (exit 1) when the largest distance exceeds this");

  std::string print;
  auto* bi_cmd = app.add_subcommand("builtins", "list builtin configs");
  bi_cmd->add_option("--print", print, "print the JSON of one builtin");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return diagnose(kConfig, e.what(), Json{{"context", "arguments"}, {"usage", "l1flow --help"}});
  }

  if (threads > 0 && l1f_set_threads(threads) != L1F_OK) return diagnose_last("threads");
  if (*run_cmd) return cmd_run(run);
  if (*cmp_cmd) return cmd_compare(cmp);
  return cmd_builtins(print);
}
