#pragma once

#include <vector>

#include "hpm/network.hpp"

namespace hpm::detail {

// Counts indexed [parent row * card(node) + value], marginalized from a table
// over the full configuration space.
std::vector<double> family_counts_of(const std::vector<double>& table, const ConfigSpace& space, int node,
                                     ParentMask parents);

}  // namespace hpm::detail
