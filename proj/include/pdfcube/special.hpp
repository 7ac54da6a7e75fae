#pragma once

#include <cmath>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "error.hpp"

namespace pdfcube::special {

[[nodiscard]] inline double erf(double x) { return std::erf(x); }

/// P(a, x), the regularized lower incomplete gamma function.
[[nodiscard]] inline double regularized_lower_incomplete_gamma(double a, double x) {
    if (!(a > 0.0)) throw ValidationError("incomplete gamma: a must be > 0");
    if (!(x >= 0.0)) throw ValidationError("incomplete gamma: x must be >= 0");
    return boost::math::gamma_p(a, x);
}

/// I_x(a, b), the regularized incomplete beta function.
[[nodiscard]] inline double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw ValidationError("incomplete beta: a and b must be > 0");
    if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("incomplete beta: x must be in [0, 1]");
    return boost::math::ibeta(a, b, x);
}

} // namespace pdfcube::special
