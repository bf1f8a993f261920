#include "json_io.hpp"

#include <cmath>

#include "l1flow/common.hpp"

namespace l1flow::detail {

namespace {

template <class T>
T field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) fail(ErrorCode::configuration_error, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::configuration_error, std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

Json number(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

double number_from(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInfinity;
    if (s == "-inf") return -kInfinity;
    if (s == "nan") return std::nan("");
  }
  fail(ErrorCode::configuration_error, "expected a number");
}

Json to_json(const Norm& phi) {
  Json j;
  j["kind"] = phi.name();
  if (phi.kind() == NormKind::elliptic) {
    j["a"] = phi.elliptic_a();
    j["b"] = phi.elliptic_b();
  } else if (phi.kind() == NormKind::crystalline) {
    Json v = Json::array();
    for (const auto& w : phi.wulff_vertices()) v.push_back({w.x, w.y});
    j["wulff_vertices"] = std::move(v);
  }
  return j;
}

Norm norm_from_json(const Json& j) {
  const auto kind = j.is_string() ? j.get<std::string>() : field<std::string>(j, "kind");
  if (kind == "euclidean") return Norm::euclidean();
  if (kind == "l1") return Norm::l1();
  if (kind == "linf") return Norm::linf();
  if (kind == "elliptic") return Norm::elliptic(field<double>(j, "a"), field<double>(j, "b"));
  if (kind == "crystalline") {
    std::vector<Vec2> w;
    for (const auto& p : field<Json>(j, "wulff_vertices")) {
      if (!p.is_array() || p.size() != 2) fail(ErrorCode::configuration_error, "Wulff vertices must be pairs");
      w.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    return Norm::crystalline(std::move(w));
  }
  fail(ErrorCode::configuration_error, "unknown norm '" + kind + "'");
}

Json to_json(const IntegrandSpec& spec) {
  Json j;
  j["family"] = to_string(spec.family);
  switch (spec.family) {
    case Family::aniso_norm: j["norm"] = to_json(spec.norm); break;
    case Family::power: j["exponent"] = spec.exponent; break;
    case Family::area: j["shifted"] = spec.shift != 0.0; break;
    case Family::quadratic: break;
  }
  return j;
}

IntegrandSpec spec_from_json(const Json& j) {
  const auto family = j.is_string() ? j.get<std::string>() : field<std::string>(j, "family");
  try {
    if (family == "quadratic") return IntegrandSpec::quadratic();
    if (family == "aniso-norm") return IntegrandSpec::aniso_norm(norm_from_json(field<Json>(j, "norm")));
    if (family == "area") return IntegrandSpec::area(j.is_object() && j.value("shifted", false));
    if (family == "power") return IntegrandSpec::power(field<double>(j, "exponent"));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::invalid_argument) fail(ErrorCode::configuration_error, e.what());
    throw;
  }
  fail(ErrorCode::configuration_error, "unknown integrand family '" + family + "'");
}

Json to_json(const GridGeometry& g) {
  Json j;
  j["nx"] = g.nx;
  j["ny"] = g.ny;
  j["h"] = g.h;
  j["bc"] = to_string(g.bc);
  return j;
}

GridGeometry geometry_from_json(const Json& j) {
  GridGeometry g;
  g.nx = field<int>(j, "nx");
  g.ny = j.value("ny", 1);
  g.h = field<double>(j, "h");
  try {
    g.bc = parse_boundary(field<std::string>(j, "bc"));
  } catch (const Error& e) {
    fail(ErrorCode::configuration_error, e.what());
  }
  if (g.nx < 1 || g.ny < 1 || !(g.h > 0.0) || !std::isfinite(g.h))
    fail(ErrorCode::configuration_error, "grid dimensions and spacing must be positive");
  return g;
}

}  // namespace l1flow::detail
