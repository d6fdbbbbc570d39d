#pragma once

#include <cmath>
#include <limits>

namespace eegcsr {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

// log(exp(a) + exp(b)) without overflow; -inf represents zero mass.
inline double logaddexp(double a, double b) {
    if (a == kLogZero) return b;
    if (b == kLogZero) return a;
    if (a < b) {
        const double t = a;
        a = b;
        b = t;
    }
    return a + std::log1p(std::exp(b - a));
}

} // namespace eegcsr
