#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "hpm/shape_data.hpp"

namespace hpm::detail {

ComponentPartition partition_from_json(const nlohmann::json& j, const std::string& context);
nlohmann::json partition_json(const ComponentPartition& p);

}  // namespace hpm::detail
