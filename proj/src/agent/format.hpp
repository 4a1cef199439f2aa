// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amsizer/netlist.hpp"

#include <map>
#include <string>

namespace amsizer {

/// Parameter value in netlist notation: W/L in microns, DC in volts.
std::string format_param(std::string_view param, double v);
std::string render_values(const std::map<ParamKey, double>& values);

} // namespace amsizer
