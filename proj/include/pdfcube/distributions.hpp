#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "special.hpp"
#include "stats.hpp"

namespace pdfcube {

/// Candidate families. Declaration order is the tie-break order.
/// PointMass is not a candidate; it is the result for constant samples.
enum class DistributionKind : int {
    Normal = 0,
    LogNormal,
    Exponential,
    Uniform,
    Cauchy,
    Gamma,
    Geometric,
    Logistic,
    StudentT,
    Weibull,
    PointMass,
};

inline constexpr std::size_t kCandidateKindCount = 10;

inline constexpr std::array<DistributionKind, kCandidateKindCount> kAllCandidateKinds{
    DistributionKind::Normal,   DistributionKind::LogNormal, DistributionKind::Exponential,
    DistributionKind::Uniform,  DistributionKind::Cauchy,    DistributionKind::Gamma,
    DistributionKind::Geometric, DistributionKind::Logistic, DistributionKind::StudentT,
    DistributionKind::Weibull,
};

[[nodiscard]] constexpr int kind_rank(DistributionKind k) { return static_cast<int>(k); }

[[nodiscard]] constexpr std::string_view kind_name(DistributionKind k) {
    switch (k) {
    case DistributionKind::Normal: return "Normal";
    case DistributionKind::LogNormal: return "LogNormal";
    case DistributionKind::Exponential: return "Exponential";
    case DistributionKind::Uniform: return "Uniform";
    case DistributionKind::Cauchy: return "Cauchy";
    case DistributionKind::Gamma: return "Gamma";
    case DistributionKind::Geometric: return "Geometric";
    case DistributionKind::Logistic: return "Logistic";
    case DistributionKind::StudentT: return "StudentT";
    case DistributionKind::Weibull: return "Weibull";
    case DistributionKind::PointMass: return "PointMass";
    }
    return "?";
}

[[nodiscard]] inline DistributionKind parse_kind(std::string_view name) {
    for (auto k : kAllCandidateKinds)
        if (kind_name(k) == name) return k;
    if (name == kind_name(DistributionKind::PointMass)) return DistributionKind::PointMass;
    throw ValidationError("unknown distribution kind '" + std::string(name) + "'");
}

/// Ordered set of candidate kinds.
class KindSet {
public:
    KindSet() = default;
    KindSet(std::initializer_list<DistributionKind> kinds) {
        for (auto k : kinds) insert(k);
    }

    static KindSet four_types() {
        return {DistributionKind::Normal, DistributionKind::Exponential, DistributionKind::Uniform,
                DistributionKind::LogNormal};
    }
    static KindSet ten_types() {
        KindSet s;
        for (auto k : kAllCandidateKinds) s.insert(k);
        return s;
    }
    /// 4 or 10, as on the command line.
    static KindSet from_count(int types) {
        if (types == 4) return four_types();
        if (types == 10) return ten_types();
        throw ValidationError("kind set must be 4 or 10 types, got " + std::to_string(types));
    }

    void insert(DistributionKind k) {
        if (k == DistributionKind::PointMass) throw ValidationError("PointMass is not a candidate kind");
        if (contains(k)) return;
        kinds_.insert(std::upper_bound(kinds_.begin(), kinds_.end(), k,
                                       [](auto a, auto b) { return kind_rank(a) < kind_rank(b); }),
                      k);
    }
    [[nodiscard]] bool contains(DistributionKind k) const {
        return std::find(kinds_.begin(), kinds_.end(), k) != kinds_.end();
    }
    [[nodiscard]] bool empty() const { return kinds_.empty(); }
    [[nodiscard]] std::size_t size() const { return kinds_.size(); }
    [[nodiscard]] auto begin() const { return kinds_.begin(); }
    [[nodiscard]] auto end() const { return kinds_.end(); }

    friend bool operator==(const KindSet&, const KindSet&) = default;

private:
    std::vector<DistributionKind> kinds_;
};

/// Family parameters. Meaning per kind:
///   Normal mean/sd, LogNormal log-mean/log-sd, Exponential rate,
///   Uniform a/b, Cauchy location/scale, Gamma shape/rate, Geometric p,
///   Logistic location/scale, StudentT location/scale/df (p3),
///   Weibull shape/scale, PointMass value.
struct DistributionParams {
    DistributionKind kind = DistributionKind::Normal;
    double p1 = 0.0;
    double p2 = 0.0;
    double p3 = 0.0;

    friend bool operator==(const DistributionParams&, const DistributionParams&) = default;
};

/// Number of meaningful parameters for the kind.
[[nodiscard]] constexpr int param_count(DistributionKind k) {
    switch (k) {
    case DistributionKind::Exponential:
    case DistributionKind::Geometric:
    case DistributionKind::PointMass: return 1;
    case DistributionKind::StudentT: return 3;
    default: return 2;
    }
}

struct FittedPdf {
    DistributionParams params;
    double error = 0.0;
    /// Set when the requested kind was inapplicable and a best fit was used instead.
    bool fallback = false;

    [[nodiscard]] DistributionKind kind() const { return params.kind; }
    friend bool operator==(const FittedPdf&, const FittedPdf&) = default;
};

inline constexpr std::size_t kDefaultIntervals = 100;

namespace detail {

[[nodiscard]] inline bool all_positive(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0; });
}

[[nodiscard]] inline bool valid_scale(double s) { return std::isfinite(s) && s > 0.0; }

/// Linear-interpolation quantile of sorted data (R type 7).
[[nodiscard]] inline double quantile_sorted(std::span<const double> sorted, double q) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct WeibullFit {
    double shape = 0.0;
    double scale = 0.0;
    bool converged = false;
};

/// Maximum-likelihood Weibull shape by safeguarded Newton on the profile
/// score, scale in closed form. Values must be positive.
[[nodiscard]] inline WeibullFit weibull_mle(std::span<const double> values) {
    const auto n = static_cast<double>(values.size());
    std::vector<double> logs(values.size());
    std::transform(values.begin(), values.end(), logs.begin(), [](double x) { return std::log(x); });
    const double log_max = *std::max_element(logs.begin(), logs.end());
    double log_mean = 0.0;
    for (double y : logs) log_mean += y;
    log_mean /= n;

    // score(k) = sum(w y)/sum(w) - 1/k - mean(y), w = x^k scaled by max^-k.
    // Increasing in k, derivative = weighted variance of y + 1/k^2.
    auto eval = [&](double k, double& score, double& slope, double& sum_w) {
        double sw = 0.0, swy = 0.0, swyy = 0.0;
        for (double y : logs) {
            const double w = std::exp(k * (y - log_max));
            sw += w;
            swy += w * y;
            swyy += w * y * y;
        }
        const double a = swy / sw;
        score = a - 1.0 / k - log_mean;
        slope = std::max(swyy / sw - a * a, 0.0) + 1.0 / (k * k);
        sum_w = sw;
    };

    double log_sd = 0.0;
    for (double y : logs) log_sd += (y - log_mean) * (y - log_mean);
    log_sd = std::sqrt(log_sd / (n - 1.0));

    double lo = 1e-6, hi = 1e6;
    double k = log_sd > 0.0 ? std::clamp(1.2825 / log_sd, lo, hi) : 1.0;
    WeibullFit fit;
    for (int iter = 0; iter < 100; ++iter) {
        double score = 0.0, slope = 0.0, sw = 0.0;
        eval(k, score, slope, sw);
        if (score > 0.0) hi = k; else lo = k;
        double next = k - score / slope;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const bool done = std::abs(next - k) <= 1e-10 * std::max(1.0, k);
        k = next;
        if (done) {
            fit.converged = true;
            break;
        }
    }
    if (!fit.converged || !valid_scale(k)) return fit;
    double sw = 0.0;
    for (double y : logs) sw += std::exp(k * (y - log_max));
    fit.shape = k;
    fit.scale = std::exp(log_max) * std::pow(sw / n, 1.0 / k);
    fit.converged = valid_scale(fit.scale);
    return fit;
}

[[nodiscard]] inline WeibullFit weibull_moments(double mean, double sd) {
    WeibullFit fit;
    fit.shape = std::pow(sd / mean, -1.086);
    fit.scale = mean / std::tgamma(1.0 + 1.0 / fit.shape);
    fit.converged = valid_scale(fit.shape) && valid_scale(fit.scale);
    return fit;
}

} // namespace detail

/// Estimates the family's parameters from the sample. Returns nullopt when
/// the sample lies outside the family's support or yields invalid parameters.
[[nodiscard]] inline std::optional<DistributionParams> estimate(DistributionKind kind,
                                                                std::span<const double> values) {
    using detail::valid_scale;
    if (values.size() < 2) throw ValidationError("distribution fitting needs at least 2 values");
    const auto n = static_cast<double>(values.size());

    DistributionParams p{kind};
    switch (kind) {
    case DistributionKind::Normal: {
        p.p1 = mean(values);
        p.p2 = sample_std(values);
        if (!valid_scale(p.p2)) return std::nullopt;
        break;
    }
    case DistributionKind::LogNormal: {
        if (!detail::all_positive(values)) return std::nullopt;
        std::vector<double> logs(values.size());
        std::transform(values.begin(), values.end(), logs.begin(), [](double x) { return std::log(x); });
        p.p1 = mean(logs);
        p.p2 = sample_std(logs);
        if (!valid_scale(p.p2)) return std::nullopt;
        break;
    }
    case DistributionKind::Exponential: {
        if (std::any_of(values.begin(), values.end(), [](double x) { return x < 0.0; }))
            return std::nullopt;
        const double m = mean(values);
        if (!(m > 0.0)) return std::nullopt;
        p.p1 = 1.0 / m;
        break;
    }
    case DistributionKind::Uniform: {
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        if (!(*hi > *lo)) return std::nullopt;
        p.p1 = *lo;
        p.p2 = *hi;
        break;
    }
    case DistributionKind::Cauchy: {
        std::vector<double> sorted(values.begin(), values.end());
        std::sort(sorted.begin(), sorted.end());
        p.p1 = detail::quantile_sorted(sorted, 0.5);
        p.p2 = 0.5 * (detail::quantile_sorted(sorted, 0.75) - detail::quantile_sorted(sorted, 0.25));
        if (!valid_scale(p.p2)) return std::nullopt;
        break;
    }
    case DistributionKind::Gamma: {
        if (!detail::all_positive(values)) return std::nullopt;
        const double m = mean(values);
        const double s = sample_std(values);
        const double var = s * s;
        p.p1 = m * m / var;
        p.p2 = m / var;
        if (!valid_scale(p.p1) || !valid_scale(p.p2)) return std::nullopt;
        break;
    }
    case DistributionKind::Geometric: {
        const bool counts = std::all_of(values.begin(), values.end(), [](double x) {
            return x > -1e-6 && std::abs(x - std::round(x)) <= 1e-6;
        });
        if (!counts) return std::nullopt;
        p.p1 = 1.0 / (1.0 + std::max(mean(values), 0.0));
        break;
    }
    case DistributionKind::Logistic: {
        p.p1 = mean(values);
        p.p2 = sample_std(values) * std::numbers::sqrt3 / std::numbers::pi;
        if (!valid_scale(p.p2)) return std::nullopt;
        break;
    }
    case DistributionKind::StudentT: {
        const double m = mean(values);
        double m2 = 0.0, m4 = 0.0;
        for (double x : values) {
            const double d2 = (x - m) * (x - m);
            m2 += d2;
            m4 += d2 * d2;
        }
        m2 /= n;
        m4 /= n;
        if (!(m2 > 0.0)) return std::nullopt;
        const double kurtosis = m4 / (m2 * m2);
        if (!(kurtosis > 3.0)) return std::nullopt;
        const double df = std::clamp((4.0 * kurtosis - 6.0) / (kurtosis - 3.0), 2.1, 200.0);
        p.p1 = m;
        p.p2 = sample_std(values) * std::sqrt((df - 2.0) / df);
        p.p3 = df;
        if (!valid_scale(p.p2)) return std::nullopt;
        break;
    }
    case DistributionKind::Weibull: {
        if (!detail::all_positive(values)) return std::nullopt;
        auto fit = detail::weibull_mle(values);
        if (!fit.converged) fit = detail::weibull_moments(mean(values), sample_std(values));
        if (!fit.converged) return std::nullopt;
        p.p1 = fit.shape;
        p.p2 = fit.scale;
        break;
    }
    case DistributionKind::PointMass:
        throw ValidationError("PointMass is not estimated; it results from constant samples");
    }
    return p;
}

/// Density (probability mass for Geometric).
[[nodiscard]] inline double pdf(const DistributionParams& p, double x) {
    using std::numbers::pi;
    switch (p.kind) {
    case DistributionKind::Normal: {
        const double z = (x - p.p1) / p.p2;
        return std::exp(-0.5 * z * z) / (p.p2 * std::sqrt(2.0 * pi));
    }
    case DistributionKind::LogNormal: {
        if (x <= 0.0) return 0.0;
        const double z = (std::log(x) - p.p1) / p.p2;
        return std::exp(-0.5 * z * z) / (x * p.p2 * std::sqrt(2.0 * pi));
    }
    case DistributionKind::Exponential: return x < 0.0 ? 0.0 : p.p1 * std::exp(-p.p1 * x);
    case DistributionKind::Uniform: return (x < p.p1 || x > p.p2) ? 0.0 : 1.0 / (p.p2 - p.p1);
    case DistributionKind::Cauchy: {
        const double z = (x - p.p1) / p.p2;
        return 1.0 / (pi * p.p2 * (1.0 + z * z));
    }
    case DistributionKind::Gamma: {
        if (x <= 0.0) return 0.0;
        return std::exp(p.p1 * std::log(p.p2) + (p.p1 - 1.0) * std::log(x) - p.p2 * x -
                        std::lgamma(p.p1));
    }
    case DistributionKind::Geometric: {
        if (x < 0.0 || x != std::floor(x)) return 0.0;
        return p.p1 * std::pow(1.0 - p.p1, x);
    }
    case DistributionKind::Logistic: {
        const double e = std::exp(-std::abs(x - p.p1) / p.p2);
        return e / (p.p2 * (1.0 + e) * (1.0 + e));
    }
    case DistributionKind::StudentT: {
        const double df = p.p3;
        const double t = (x - p.p1) / p.p2;
        const double log_norm = std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) -
                                0.5 * std::log(df * pi) - std::log(p.p2);
        return std::exp(log_norm - 0.5 * (df + 1.0) * std::log1p(t * t / df));
    }
    case DistributionKind::Weibull: {
        if (x < 0.0) return 0.0;
        const double z = x / p.p2;
        return p.p1 / p.p2 * std::pow(z, p.p1 - 1.0) * std::exp(-std::pow(z, p.p1));
    }
    case DistributionKind::PointMass: return x == p.p1 ? 1.0 : 0.0;
    }
    return 0.0;
}

/// P(X <= x).
[[nodiscard]] inline double cdf(const DistributionParams& p, double x) {
    using std::numbers::pi;
    switch (p.kind) {
    case DistributionKind::Normal:
        return 0.5 * std::erfc(-(x - p.p1) / (p.p2 * std::numbers::sqrt2));
    case DistributionKind::LogNormal:
        if (x <= 0.0) return 0.0;
        return 0.5 * std::erfc(-(std::log(x) - p.p1) / (p.p2 * std::numbers::sqrt2));
    case DistributionKind::Exponential: return x <= 0.0 ? 0.0 : -std::expm1(-p.p1 * x);
    case DistributionKind::Uniform: return std::clamp((x - p.p1) / (p.p2 - p.p1), 0.0, 1.0);
    case DistributionKind::Cauchy: return 0.5 + std::atan((x - p.p1) / p.p2) / pi;
    case DistributionKind::Gamma:
        if (x <= 0.0) return 0.0;
        return special::regularized_lower_incomplete_gamma(p.p1, p.p2 * x);
    case DistributionKind::Geometric:
        if (x < 0.0) return 0.0;
        if (p.p1 >= 1.0) return 1.0;
        return -std::expm1((std::floor(x) + 1.0) * std::log1p(-p.p1));
    case DistributionKind::Logistic: return 1.0 / (1.0 + std::exp(-(x - p.p1) / p.p2));
    case DistributionKind::StudentT: {
        const double df = p.p3;
        const double t = (x - p.p1) / p.p2;
        const double tail =
            0.5 * special::regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
        return t < 0.0 ? tail : 1.0 - tail;
    }
    case DistributionKind::Weibull:
        if (x <= 0.0) return 0.0;
        return -std::expm1(-std::pow(x / p.p2, p.p1));
    case DistributionKind::PointMass: return x < p.p1 ? 0.0 : 1.0;
    }
    return 0.0;
}

/// P(X < x). Differs from cdf only for the discrete kinds.
[[nodiscard]] inline double cdf_left(const DistributionParams& p, double x) {
    switch (p.kind) {
    case DistributionKind::Geometric:
        if (x <= 0.0) return 0.0;
        if (p.p1 >= 1.0) return 1.0;
        return -std::expm1(std::ceil(x) * std::log1p(-p.p1));
    case DistributionKind::PointMass: return x <= p.p1 ? 0.0 : 1.0;
    default: return cdf(p, x);
    }
}

[[nodiscard]] constexpr bool is_discrete(DistributionKind k) {
    return k == DistributionKind::Geometric || k == DistributionKind::PointMass;
}

/// Model probability of each histogram interval. Continuous kinds use
/// cdf(upper) - cdf(lower). Discrete kinds follow the histogram's half-open
/// bins, [lower, upper) with the last bin closed.
[[nodiscard]] inline std::vector<double> interval_probs(const DistributionParams& p,
                                                        const Histogram& hist) {
    const auto bins = hist.bin_count();
    std::vector<double> probs(bins);
    const bool discrete = is_discrete(p.kind);
    double prev = discrete ? cdf_left(p, hist.edge(0)) : cdf(p, hist.edge(0));
    for (std::size_t k = 0; k < bins; ++k) {
        const double upper = hist.edge(k + 1);
        const double cur = (discrete && k + 1 < bins) ? cdf_left(p, upper) : cdf(p, upper);
        probs[k] = std::max(cur - prev, 0.0);
        prev = cur;
    }
    return probs;
}

[[nodiscard]] inline double fit_error(const DistributionParams& p, const Histogram& hist) {
    return empirical_vs_model_error(hist, interval_probs(p, hist));
}

/// Every candidate's fit for one sample, indexed by kind rank. Inapplicable
/// kinds and kinds outside the set are empty.
struct FitTable {
    std::array<std::optional<FittedPdf>, kCandidateKindCount> entries;

    [[nodiscard]] const std::optional<FittedPdf>& at(DistributionKind k) const {
        return entries.at(static_cast<std::size_t>(kind_rank(k)));
    }

    /// Minimum error; ties go to the earlier kind.
    [[nodiscard]] std::optional<FittedPdf> best() const {
        std::optional<FittedPdf> out;
        for (const auto& e : entries)
            if (e && (!out || e->error < out->error)) out = e;
        return out;
    }
};

[[nodiscard]] inline FittedPdf point_mass(double value) {
    return FittedPdf{DistributionParams{DistributionKind::PointMass, value}, 0.0, false};
}

[[nodiscard]] inline FitTable fit_all(std::span<const double> values, const KindSet& kinds,
                                      std::size_t intervals = kDefaultIntervals) {
    if (values.size() < 2) throw ValidationError("distribution fitting needs at least 2 values");
    const Histogram hist = histogram(values, intervals);
    FitTable table;
    for (auto kind : kinds) {
        const auto params = estimate(kind, values);
        if (!params) continue;
        table.entries[static_cast<std::size_t>(kind_rank(kind))] =
            FittedPdf{*params, fit_error(*params, hist), false};
    }
    return table;
}

/// Best-fitting family among `kinds` by interval error. Constant samples give
/// a point mass with error 0. If no kind applies, Uniform over [min, max] is
/// returned with `fallback` set.
[[nodiscard]] inline FittedPdf fit_best(std::span<const double> values, const KindSet& kinds,
                                        std::size_t intervals = kDefaultIntervals) {
    if (values.size() < 2) throw ValidationError("distribution fitting needs at least 2 values");
    if (kinds.empty()) throw ValidationError("fit_best needs at least one candidate kind");
    if (is_degenerate(values)) return point_mass(values.front());
    if (auto best = fit_all(values, kinds, intervals).best()) return *best;

    const Histogram hist = histogram(values, intervals);
    const auto params = *estimate(DistributionKind::Uniform, values);
    return FittedPdf{params, fit_error(params, hist), true};
}

/// Fits one family. If the sample is outside that family's support the best
/// fit over `fallback_kinds` is returned with `fallback` set.
[[nodiscard]] inline FittedPdf fit_with_kind(std::span<const double> values, DistributionKind kind,
                                             const KindSet& fallback_kinds,
                                             std::size_t intervals = kDefaultIntervals) {
    if (values.size() < 2) throw ValidationError("distribution fitting needs at least 2 values");
    if (is_degenerate(values)) return point_mass(values.front());
    if (const auto params = estimate(kind, values)) {
        const Histogram hist = histogram(values, intervals);
        return FittedPdf{*params, fit_error(*params, hist), false};
    }
    auto fit = fit_best(values, fallback_kinds, intervals);
    fit.fallback = true;
    return fit;
}

} // namespace pdfcube
