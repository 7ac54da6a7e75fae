#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace pdfcube {

/// Observation values of one point, one per simulation run.
using ObservationSet = std::vector<double>;

struct PointStats {
    double mean = 0.0;
    double std = 0.0;

    friend bool operator==(const PointStats&, const PointStats&) = default;
};

[[nodiscard]] inline double mean(std::span<const double> values) {
    if (values.empty()) throw ValidationError("mean of an empty sample");
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

/// Sample standard deviation, n - 1 denominator.
[[nodiscard]] inline double sample_std(std::span<const double> values) {
    if (values.size() < 2) throw ValidationError("standard deviation needs at least 2 values");
    const double mu = mean(values);
    double ss = 0.0;
    for (double v : values) ss += (v - mu) * (v - mu);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

[[nodiscard]] inline PointStats point_stats(std::span<const double> values) {
    return PointStats{mean(values), sample_std(values)};
}

/// Unnormalized central moment: sum of (x_i - mean)^order. Order 2 gives
/// (n - 1) * variance.
[[nodiscard]] inline double central_moment(std::span<const double> values, int order) {
    if (order < 2) throw ValidationError("central moment order must be >= 2");
    const double mu = mean(values);
    double sum = 0.0;
    for (double v : values) {
        const double d = v - mu;
        double p = d;
        for (int i = 1; i < order; ++i) p *= d;
        sum += p;
    }
    return sum;
}

/// Equal-width histogram over [min, max] of the sample. The last bin is
/// closed on the right so the maximum is counted exactly once.
struct Histogram {
    double min = 0.0;
    double max = 0.0;
    std::vector<std::uint64_t> freqs;
    std::uint64_t total = 0;

    [[nodiscard]] std::size_t bin_count() const { return freqs.size(); }

    /// Lower edge of bin k (0-based); edge(bin_count()) is max.
    [[nodiscard]] double edge(std::size_t k) const {
        if (k == 0) return min;
        if (k >= freqs.size()) return max;
        return min + (max - min) * static_cast<double>(k) / static_cast<double>(freqs.size());
    }
};

[[nodiscard]] inline bool is_degenerate(std::span<const double> values) {
    if (values.empty()) return true;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    return *lo == *hi;
}

[[nodiscard]] inline Histogram histogram(std::span<const double> values, std::size_t bins) {
    if (values.empty()) throw ValidationError("histogram of an empty sample");
    if (bins == 0) throw ValidationError("histogram needs at least one bin");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (!(*hi > *lo)) throw ValidationError("degenerate sample: max equals min");

    Histogram h;
    h.min = *lo;
    h.max = *hi;
    h.freqs.assign(bins, 0);
    h.total = values.size();
    const double width = h.max - h.min;
    const auto last = bins - 1;
    for (double v : values) {
        const double pos = (v - h.min) / width * static_cast<double>(bins);
        auto k = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(last)));
        // Settle rounding at the edges against the same edge formula interval
        // probabilities use.
        while (k > 0 && v < h.edge(k)) --k;
        while (k < last && v >= h.edge(k + 1)) ++k;
        ++h.freqs[k];
    }
    return h;
}

/// Sum over intervals of |empirical fraction - model probability|.
[[nodiscard]] inline double empirical_vs_model_error(const Histogram& hist,
                                                     std::span<const double> interval_probs) {
    if (interval_probs.size() != hist.bin_count())
        throw ValidationError("interval probabilities: expected " +
                              std::to_string(hist.bin_count()) + " values, got " +
                              std::to_string(interval_probs.size()));
    const auto n = static_cast<double>(hist.total);
    double err = 0.0;
    for (std::size_t k = 0; k < interval_probs.size(); ++k)
        err += std::abs(static_cast<double>(hist.freqs[k]) / n - interval_probs[k]);
    return err;
}

struct SliceAverages {
    double avg_mean = 0.0;
    double avg_std = 0.0;
};

[[nodiscard]] inline SliceAverages slice_averages(std::span<const PointStats> stats) {
    if (stats.empty()) throw ValidationError("slice averages of an empty collection");
    double m = 0.0, s = 0.0;
    for (const auto& p : stats) {
        m += p.mean;
        s += p.std;
    }
    const auto n = static_cast<double>(stats.size());
    return {m / n, s / n};
}

[[nodiscard]] inline double average_error(std::span<const double> errors) {
    if (errors.empty()) throw ValidationError("average error of an empty collection");
    return mean(errors);
}

} // namespace pdfcube
