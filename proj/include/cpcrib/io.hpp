#pragma once

#include <json.hpp>
#include <string>

#include "cpcrib/crib.hpp"
#include "cpcrib/solver.hpp"
#include "cpcrib/tensor.hpp"

namespace cpcrib {

using json = nlohmann::json;

// {"dims":[...], "rank":R, "factors":[row-major 2-D arrays]}
json model_to_json(const KruskalModel& m);
KruskalModel model_from_json(const json& j);

// {"dims":[...], "values":[column-major flat]}
json tensor_to_json(const DenseTensor& t);
DenseTensor tensor_from_json(const json& j);

// {crib, crib_db, angle_deg, finite, method, epsilon_applied}; dB and angle
// rounded to 4 decimals, linear value at full precision, non-finite -> null.
json report_to_json(const CribReport& r);

json fit_to_json(const FitResult& f);

json load_json(const std::string& path);
void save_json(const json& j, const std::string& path);  // empty path -> stdout

}  // namespace cpcrib
