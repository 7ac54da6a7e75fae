#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cube_io.hpp"
#include "distributions.hpp"
#include "dtree.hpp"
#include "error.hpp"
#include "format.hpp"
#include "grouping.hpp"
#include "parallel.hpp"
#include "stats.hpp"

namespace pdfcube {

enum class Sampler { Random, KMeans };

struct SamplingConfig {
    double rate = 0.1;
    Sampler sampler = Sampler::Random;
    std::uint64_t seed = 0;
    bool group_before_predict = false;
    GroupingOptions grouping{};
    unsigned threads = 1;

    void validate() const {
        if (!(rate > 0.0 && rate <= 1.0)) throw ValidationError("sampling rate must be in (0, 1]");
    }
};

/// Fraction of points per class, indexed by kind rank (PointMass last).
using TypePercentages = std::array<double, kCandidateKindCount + 1>;

struct SliceFeatures {
    double avg_mean = 0.0;
    double avg_std = 0.0;
    TypePercentages type_percentages{};
    std::uint64_t sampled_count = 0;
    std::uint64_t predicted_count = 0;
    double loading_seconds = 0.0;
    double compute_seconds = 0.0;

    [[nodiscard]] double percentage(DistributionKind k) const {
        return type_percentages[static_cast<std::size_t>(kind_rank(k))];
    }

    /// Single-line record; timings excluded so equal inputs give equal text.
    [[nodiscard]] std::string record() const {
        KeyValueRecord r;
        r.add("avg_mean", avg_mean).add("avg_std", avg_std).add("sampled_count", sampled_count);
        for (std::size_t k = 0; k < type_percentages.size(); ++k)
            r.add("pct_" + std::string(kind_name(static_cast<DistributionKind>(k))), type_percentages[k]);
        return r.str();
    }
};

/// ceil(rate * n), guarded against products like 0.07 * 100 = 7.000000000000001.
[[nodiscard]] inline std::size_t sample_size(double rate, std::size_t n) {
    const double raw = rate * static_cast<double>(n);
    const auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
    return std::clamp<std::size_t>(k, 1, n);
}

/// ceil(rate * N) ids drawn uniformly without replacement, returned sorted.
[[nodiscard]] inline std::vector<PointId> random_sample(std::span<const PointId> ids, double rate,
                                                        std::uint64_t seed) {
    if (ids.empty()) throw ValidationError("cannot sample an empty slice");
    if (!(rate > 0.0 && rate <= 1.0)) throw ValidationError("sampling rate must be in (0, 1]");
    const auto k = sample_size(rate, ids.size());
    std::vector<PointId> pool(ids.begin(), ids.end());
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

struct StatPoint {
    PointId id;
    double mean = 0.0;
    double std = 0.0;
};

struct KMeansOptions {
    std::uint32_t max_iterations = 50;
    double tolerance = 1e-6;
};

struct KMeansResult {
    std::vector<PointId> representatives;
    /// Final centroids in standardized (mean, sd) space.
    std::vector<std::array<double, 2>> centroids;
    std::uint32_t iterations = 0;
};

/// k = ceil(rate * N) clusters over z-scored (mean, sd); returns the point
/// nearest each centroid, all distinct, sorted by id.
[[nodiscard]] inline KMeansResult kmeans_cluster(std::span<const StatPoint> points, double rate,
                                                 std::uint64_t seed, const KMeansOptions& opts = {}) {
    if (points.empty()) throw ValidationError("k-means sampling needs at least one point");
    if (!(rate > 0.0 && rate <= 1.0)) throw ValidationError("sampling rate must be in (0, 1]");
    const auto n = points.size();
    const auto k = sample_size(rate, n);

    auto standardize = [&](auto get) {
        double m = 0.0;
        for (const auto& p : points) m += get(p);
        m /= static_cast<double>(n);
        double ss = 0.0;
        for (const auto& p : points) ss += (get(p) - m) * (get(p) - m);
        const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
        std::vector<double> z(n);
        for (std::size_t i = 0; i < n; ++i) z[i] = sd > 0.0 ? (get(points[i]) - m) / sd : 0.0;
        return z;
    };
    const auto zm = standardize([](const StatPoint& p) { return p.mean; });
    const auto zs = standardize([](const StatPoint& p) { return p.std; });
    auto dist2 = [&](std::size_t i, const std::array<double, 2>& c) {
        const double a = zm[i] - c[0], b = zs[i] - c[1];
        return a * a + b * b;
    };
    auto id_less = [&](std::size_t a, std::size_t b) { return points[a].id < points[b].id; };

    // Seeded farthest-point initialization.
    std::vector<char> taken(n, 0);
    std::vector<std::array<double, 2>> centroids;
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::mt19937_64 rng(seed);
    std::size_t next = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    for (std::size_t c = 0; c < k; ++c) {
        taken[next] = 1;
        centroids.push_back({zm[next], zs[next]});
        std::size_t far = n;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], dist2(i, centroids.back()));
            if (taken[i]) continue;
            if (far == n || nearest[i] > nearest[far] || (nearest[i] == nearest[far] && id_less(i, far)))
                far = i;
        }
        if (far == n) break;
        next = far;
    }

    // Lloyd iterations.
    std::vector<std::size_t> assign(n, 0);
    KMeansResult result;
    for (std::uint32_t iter = 0; iter < opts.max_iterations; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double bd = dist2(i, centroids[0]);
            for (std::size_t c = 1; c < centroids.size(); ++c) {
                const double d = dist2(i, centroids[c]);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            assign[i] = best;
        }
        std::vector<std::array<double, 3>> sums(centroids.size(), {0.0, 0.0, 0.0});
        for (std::size_t i = 0; i < n; ++i) {
            sums[assign[i]][0] += zm[i];
            sums[assign[i]][1] += zs[i];
            sums[assign[i]][2] += 1.0;
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < centroids.size(); ++c) {
            if (sums[c][2] == 0.0) continue;
            const std::array<double, 2> moved{sums[c][0] / sums[c][2], sums[c][1] / sums[c][2]};
            shift = std::max(shift, std::hypot(moved[0] - centroids[c][0], moved[1] - centroids[c][1]));
            centroids[c] = moved;
        }
        result.iterations = iter + 1;
        if (shift < opts.tolerance) break;
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        double bd = dist2(i, centroids[0]);
        for (std::size_t c = 1; c < centroids.size(); ++c)
            if (const double d = dist2(i, centroids[c]); d < bd) {
                bd = d;
                best = c;
            }
        assign[i] = best;
    }

    // Member nearest each centroid; if a cluster has no free member, the
    // nearest free point overall.
    std::fill(taken.begin(), taken.end(), 0);
    auto pick = [&](std::size_t c, bool members_only) {
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i] || (members_only && assign[i] != c)) continue;
            if (best == n) {
                best = i;
                continue;
            }
            const double d = dist2(i, centroids[c]), bd = dist2(best, centroids[c]);
            if (d < bd || (d == bd && id_less(i, best))) best = i;
        }
        return best;
    };
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        auto best = pick(c, true);
        if (best == n) best = pick(c, false);
        if (best == n) break;
        taken[best] = 1;
        result.representatives.push_back(points[best].id);
    }
    std::sort(result.representatives.begin(), result.representatives.end());
    result.centroids = std::move(centroids);
    return result;
}

[[nodiscard]] inline std::vector<PointId> kmeans_sample(std::span<const StatPoint> points, double rate,
                                                        std::uint64_t seed) {
    return kmeans_cluster(points, rate, seed).representatives;
}

/// Euclidean distance between two type-percentage vectors.
[[nodiscard]] inline double percentage_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ValidationError("type percentages over different kind sets");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(sum);
}

[[nodiscard]] inline double percentage_distance(const TypePercentages& a, const TypePercentages& b) {
    return percentage_distance(std::span<const double>(a), std::span<const double>(b));
}

/// Estimates slice features from a sample: statistics of the sampled points
/// and the share of each predicted kind. No distribution fitting is done.
[[nodiscard]] inline SliceFeatures slice_features(const Dataset& data, std::uint32_t slice_index,
                                                  const SamplingConfig& config,
                                                  const DecisionTreeModel& model) {
    using clock = std::chrono::steady_clock;
    config.validate();
    if (!model.trained()) throw ValidationError("slice features need a trained decision tree model");
    const auto& geom = data.geometry();
    if (slice_index >= geom.slice_count)
        throw BoundsError("slice " + std::to_string(slice_index) + " out of bounds");

    const auto slice = whole_slice(geom, slice_index);
    const auto first = slice.first_point(geom).linear_index;
    const auto n = slice.point_count(geom);

    const auto load_start = clock::now();
    std::vector<PointRecord> records;
    if (config.sampler == Sampler::Random) {
        std::vector<PointId> ids(n);
        for (std::uint64_t i = 0; i < n; ++i) ids[i] = PointId{first + i};
        const auto chosen = random_sample(ids, config.rate, config.seed);
        records.resize(chosen.size());
        parallel_for(chosen.size(), config.threads,
                     [&](std::size_t i) { records[i] = data.load_point(chosen[i]); });
    } else {
        // Clustering needs every point's statistics.
        auto all = data.load_window(slice, LoadOptions{config.threads});
        std::vector<StatPoint> stats(all.size());
        for (std::size_t i = 0; i < all.size(); ++i)
            stats[i] = StatPoint{all[i].id, all[i].stats.mean, all[i].stats.std};
        const auto chosen = kmeans_sample(stats, config.rate, config.seed);
        for (auto id : chosen) records.push_back(std::move(all[id.linear_index - first]));
    }
    const auto load_end = clock::now();

    SliceFeatures f;
    f.sampled_count = records.size();
    std::vector<double> weights(kCandidateKindCount + 1, 0.0);
    if (config.group_before_predict) {
        const auto groups = group_window(records, config.grouping, config.threads);
        f.predicted_count = groups.size();
        for (const auto& g : groups) {
            const auto kind = model.predict(g.representative.stats.mean, g.representative.stats.std);
            weights[static_cast<std::size_t>(kind_rank(kind))] += static_cast<double>(g.member_ids.size());
        }
    } else {
        f.predicted_count = records.size();
        for (const auto& r : records)
            weights[static_cast<std::size_t>(kind_rank(model.predict(r.stats.mean, r.stats.std)))] += 1.0;
    }
    for (std::size_t k = 0; k < weights.size(); ++k)
        f.type_percentages[k] = weights[k] / static_cast<double>(records.size());

    std::vector<PointStats> stats(records.size());
    std::transform(records.begin(), records.end(), stats.begin(), [](const PointRecord& r) { return r.stats; });
    const auto avg = slice_averages(stats);
    f.avg_mean = avg.avg_mean;
    f.avg_std = avg.avg_std;
    f.loading_seconds = std::chrono::duration<double>(load_end - load_start).count();
    f.compute_seconds = std::chrono::duration<double>(clock::now() - load_end).count();
    return f;
}

} // namespace pdfcube
