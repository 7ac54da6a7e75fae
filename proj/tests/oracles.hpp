#pragma once

// Independent reference implementations used only by tests. None of these
// call into the library's numerical code.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

using real = long double;

/// erf(x) = 2/sqrt(pi) * exp(-x^2) * sum 2^n x^(2n+1) / (1*3*...*(2n+1)).
/// Every term is positive, so there is no cancellation.
inline real erf_series(real x) {
    if (x < 0) return -erf_series(-x);
    real term = x, sum = x;
    for (int n = 1; n < 2000; ++n) {
        term *= 2 * x * x / (2 * n + 1);
        sum += term;
        if (term < sum * 1e-22L) break;
    }
    return 2 / std::sqrt(std::numbers::pi_v<real>) * std::exp(-x * x) * sum;
}

/// P(a, x) = x^a e^-x / Gamma(a+1) * sum_n x^n / ((a+1)...(a+n)).
inline real lower_gamma_series(real a, real x) {
    if (x <= 0) return 0;
    real term = 1, sum = 1;
    for (int n = 1; n < 100000; ++n) {
        term *= x / (a + n);
        sum += term;
        if (term < sum * 1e-22L) break;
    }
    return std::exp(a * std::log(x) - x - std::lgamma(a + 1)) * sum;
}

/// I_x(a, b) = x^a (1-x)^b / (a B(a,b)) * sum_n (a+b)_n / (a+1)_n x^n,
/// positive terms; evaluated on the side where x <= 1/2 for convergence.
inline real incomplete_beta_series(real a, real b, real x) {
    if (x <= 0) return 0;
    if (x >= 1) return 1;
    if (x > 0.5L) return 1 - incomplete_beta_series(b, a, 1 - x);
    real term = 1, sum = 1;
    for (int n = 0; n < 200000; ++n) {
        term *= (a + b + n) / (a + 1 + n) * x;
        sum += term;
        if (term < sum * 1e-22L) break;
    }
    const real log_front = a * std::log(x) + b * std::log1p(-x) - std::log(a) -
                           (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
    return std::exp(log_front) * sum;
}

/// Adaptive Simpson quadrature in long double.
inline real integrate(const std::function<real(real)>& f, real lo, real hi, real tol = 1e-15L) {
    std::function<real(real, real, real, real, real, real, int)> step =
        [&](real a, real b, real fa, real fm, real fb, real whole, int depth) -> real {
        const real m = (a + b) / 2, lm = (a + m) / 2, rm = (m + b) / 2;
        const real flm = f(lm), frm = f(rm);
        const real left = (m - a) / 6 * (fa + 4 * flm + fm);
        const real right = (b - m) / 6 * (fm + 4 * frm + fb);
        if (depth <= 0 || std::fabs(left + right - whole) <= 15 * tol)
            return left + right + (left + right - whole) / 15;
        return step(a, m, fa, flm, fm, left, depth - 1) + step(m, b, fm, frm, fb, right, depth - 1);
    };
    const real m = (lo + hi) / 2;
    const real fa = f(lo), fm = f(m), fb = f(hi);
    return step(lo, hi, fa, fm, fb, (hi - lo) / 6 * (fa + 4 * fm + fb), 50);
}

/// Kahan-compensated mean in long double.
inline real mean(const std::vector<double>& v) {
    real sum = 0, c = 0;
    for (double x : v) {
        const real y = x - c;
        const real t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    return sum / v.size();
}

/// Splitmix-based deterministic generator for test inputs.
struct TestRng {
    std::uint64_t s;
    explicit TestRng(std::uint64_t seed) : s(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (s += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    double uniform() { return (next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() {
        const double u1 = (next() >> 11) * 0x1.0p-53 + 0x1.0p-54;
        const double u2 = uniform();
        return std::sqrt(-2 * std::log(u1)) * std::cos(2 * std::numbers::pi * u2);
    }
    std::uint64_t below(std::uint64_t n) { return next() % n; }
};

} // namespace oracle
