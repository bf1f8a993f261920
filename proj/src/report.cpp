#include "l1flow/report.hpp"

#include <algorithm>
#include <cmath>

#include "json_io.hpp"

namespace l1flow {

Check make_check(std::string name, double value, double threshold, long index) {
  // NaN never passes
  return {std::move(name), value, threshold, value <= threshold, index};
}

bool Report::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

void Report::add(std::string check_name, double value, double threshold, long index) {
  checks.push_back(make_check(std::move(check_name), value, threshold, index));
}

std::string Report::to_json() const {
  detail::Json j;
  j["name"] = name;
  j["pass"] = pass();
  j["checks"] = detail::Json::array();
  for (const auto& c : checks) {
    detail::Json e;
    e["name"] = c.name;
    e["value"] = detail::number(c.value);
    e["threshold"] = detail::number(c.threshold);
    e["pass"] = c.pass;
    if (c.index >= 0) e["index"] = c.index;
    j["checks"].push_back(std::move(e));
  }
  detail::Json m = detail::Json::object();
  for (const auto& [k, v] : metrics) m[k] = detail::number(v);
  j["metrics"] = std::move(m);
  if (!labels.empty()) {
    detail::Json l = detail::Json::object();
    for (const auto& [k, v] : labels) l[k] = v;
    j["labels"] = std::move(l);
  }
  return j.dump(2);
}

}  // namespace l1flow
