#pragma once

#include <string>

namespace cocylab {

// 17 significant digits, so every double survives a text round trip.
// Infinities print as "inf" / "-inf".
std::string format_real(double value);

}  // namespace cocylab
