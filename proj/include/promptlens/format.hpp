#pragma once

#include <string>

namespace promptlens {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

/// Fixed-point with `precision` decimals; "-0.00" is printed as "0.00".
std::string format_fixed(double value, int precision);

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

}  // namespace promptlens
