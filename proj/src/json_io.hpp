#pragma once

// JSON codecs for the value types shared by traces, configs and the C API.

#include <json.hpp>

#include "l1flow/energy.hpp"
#include "l1flow/grid.hpp"

namespace l1flow::detail {

using Json = nlohmann::ordered_json;

Json to_json(const Norm& phi);
Norm norm_from_json(const Json& j);

/// {"family": ..., plus "norm" / "exponent" / "shifted" as the family requires}
Json to_json(const IntegrandSpec& spec);
IntegrandSpec spec_from_json(const Json& j);

Json to_json(const GridGeometry& g);
GridGeometry geometry_from_json(const Json& j);

/// Finite doubles as numbers, others as "inf", "-inf", "nan".
Json number(double x);
double number_from(const Json& j);

}  // namespace l1flow::detail
