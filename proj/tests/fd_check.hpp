#pragma once

#include <functional>

// Central finite differences: independent oracle for the analytic gradients.
inline double central_difference(std::function<double(double)> f, double x0, double h) {
    return (f(x0 + h) - f(x0 - h)) / (2.0 * h);
}

inline double rel_error(double a, double b) {
    const double denom = std::max(std::abs(a), std::abs(b));
    if (denom < 1e-12) return 0.0;
    return std::abs(a - b) / denom;
}
