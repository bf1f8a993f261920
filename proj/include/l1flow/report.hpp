#pragma once

#include <map>
#include <string>
#include <vector>

namespace l1flow {

/// One assertion: passes when value <= threshold.
struct Check {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
  long index = -1;  // worst offending step or sample, -1 when not applicable
};

Check make_check(std::string name, double value, double threshold, long index = -1);

/// A named bundle of checks plus free-form scalar metrics.
struct Report {
  std::string name;
  std::vector<Check> checks;
  std::map<std::string, double> metrics;
  std::map<std::string, std::string> labels;

  bool pass() const;
  void add(std::string check_name, double value, double threshold, long index = -1);
  std::string to_json() const;
};

}  // namespace l1flow
