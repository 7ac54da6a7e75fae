#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cube_io.hpp"
#include "distributions.hpp"
#include "error.hpp"
#include "parallel.hpp"

namespace pdfcube {

enum class KeyMode {
    /// Quantized (mean, sd).
    Stats,
    /// Quantized (mean, sd) plus a 64-bit hash of the full observation vector,
    /// so only identical vectors share a key.
    Strict,
};

struct GroupingOptions {
    KeyMode mode = KeyMode::Stats;
    int significant_digits = 9;
    /// When > 0, (mean, sd) are snapped to multiples of epsilon instead of
    /// being rounded to significant digits, merging near-equal points.
    double epsilon = 0.0;
};

struct GroupKey {
    double mean_q = 0.0;
    double std_q = 0.0;
    std::uint64_t content_hash = 0;

    friend bool operator==(const GroupKey&, const GroupKey&) = default;
};

struct GroupKeyHash {
    std::size_t operator()(const GroupKey& k) const noexcept {
        auto mix = [](std::uint64_t h, std::uint64_t v) {
            h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
            return h;
        };
        std::uint64_t h = std::bit_cast<std::uint64_t>(k.mean_q);
        h = mix(h, std::bit_cast<std::uint64_t>(k.std_q));
        h = mix(h, k.content_hash);
        return static_cast<std::size_t>(h);
    }
};

[[nodiscard]] inline double quantize_significant(double x, int digits) {
    if (x == 0.0 || !std::isfinite(x)) return x == 0.0 ? 0.0 : x;
    const int exponent = static_cast<int>(std::floor(std::log10(std::abs(x))));
    const double scale = std::pow(10.0, digits - 1 - exponent);
    const double q = std::round(x * scale) / scale;
    return q == 0.0 ? 0.0 : q;
}

/// FNV-1a over the bit patterns of the values.
[[nodiscard]] inline std::uint64_t content_hash(std::span<const double> values) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (double v : values) {
        auto bits = std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v);
        for (int i = 0; i < 8; ++i) {
            h ^= bits & 0xffu;
            h *= 0x100000001b3ull;
            bits >>= 8;
        }
    }
    return h;
}

[[nodiscard]] inline GroupKey make_group_key(const PointRecord& rec, const GroupingOptions& opts) {
    GroupKey key;
    if (opts.epsilon > 0.0) {
        key.mean_q = std::round(rec.stats.mean / opts.epsilon) * opts.epsilon;
        key.std_q = std::round(rec.stats.std / opts.epsilon) * opts.epsilon;
    } else {
        key.mean_q = quantize_significant(rec.stats.mean, opts.significant_digits);
        key.std_q = quantize_significant(rec.stats.std, opts.significant_digits);
    }
    if (opts.mode == KeyMode::Strict) key.content_hash = content_hash(rec.values);
    return key;
}

/// Points sharing a key. The representative is the member with the smallest id.
struct PointGroup {
    GroupKey key;
    PointRecord representative;
    std::vector<PointId> member_ids;
};

/// Partitions records by key. Groups come out ordered by representative id,
/// independent of input order and thread count.
[[nodiscard]] inline std::vector<PointGroup> group_window(std::span<const PointRecord> records,
                                                          const GroupingOptions& opts = {},
                                                          unsigned threads = 1) {
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return records[a].id < records[b].id; });

    std::vector<GroupKey> keys(records.size());
    parallel_for(records.size(), threads,
                 [&](std::size_t i) { keys[i] = make_group_key(records[i], opts); });

    std::vector<PointGroup> groups;
    std::unordered_map<GroupKey, std::size_t, GroupKeyHash> index;
    index.reserve(records.size());
    for (auto i : order) {
        const auto [it, inserted] = index.try_emplace(keys[i], groups.size());
        if (inserted) groups.push_back(PointGroup{keys[i], records[i], {}});
        groups[it->second].member_ids.push_back(records[i].id);
    }
    return groups;
}

struct PointFit {
    PointId id;
    FittedPdf fit;

    friend bool operator==(const PointFit&, const PointFit&) = default;
};

using GroupFits = std::unordered_map<GroupKey, FittedPdf, GroupKeyHash>;

/// Assigns each group's fit to all of its members, ordered by PointId.
[[nodiscard]] inline std::vector<PointFit> expand_results(std::span<const PointGroup> groups,
                                                          const GroupFits& fits) {
    std::vector<PointFit> out;
    for (const auto& g : groups) {
        const auto it = fits.find(g.key);
        if (it == fits.end())
            throw ValidationError("no fit for the group represented by point " +
                                  std::to_string(g.representative.id.linear_index));
        for (auto id : g.member_ids) out.push_back(PointFit{id, it->second});
    }
    std::sort(out.begin(), out.end(), [](const PointFit& a, const PointFit& b) { return a.id < b.id; });
    return out;
}

/// Cross-window memo of fits. The first completed fit for a key is kept.
class ReuseCache {
public:
    struct Lookup {
        FittedPdf fit;
        bool hit = false;
    };

    template <class FitFn>
    Lookup get_or_fit(const GroupKey& key, FitFn&& fit_fn) {
        {
            std::lock_guard lock(mutex_);
            if (const auto it = entries_.find(key); it != entries_.end()) {
                ++hits_;
                return {it->second, true};
            }
        }
        FittedPdf computed = fit_fn();
        std::lock_guard lock(mutex_);
        ++misses_;
        const auto [it, inserted] = entries_.try_emplace(key, computed);
        return {it->second, false};
    }

    void clear() {
        std::lock_guard lock(mutex_);
        entries_.clear();
        hits_ = 0;
        misses_ = 0;
    }

    [[nodiscard]] std::uint64_t hits() const { return hits_; }
    [[nodiscard]] std::uint64_t misses() const { return misses_; }
    [[nodiscard]] std::size_t size() const {
        std::lock_guard lock(mutex_);
        return entries_.size();
    }

private:
    mutable std::mutex mutex_;
    std::unordered_map<GroupKey, FittedPdf, GroupKeyHash> entries_;
    std::atomic<std::uint64_t> hits_{0};
    std::atomic<std::uint64_t> misses_{0};
};

} // namespace pdfcube
