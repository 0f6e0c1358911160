#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

namespace taxreg {

/// Shortest decimal form that parses back to exactly the same double.
/// Locale-independent, so serialized artifacts are byte-stable.
inline std::string format_double(double x) {
    char buf[40];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    return buf;
}

}  // namespace taxreg
