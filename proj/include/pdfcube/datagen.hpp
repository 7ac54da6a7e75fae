#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "cube.hpp"
#include "cube_io.hpp"
#include "distributions.hpp"
#include "dtree.hpp"
#include "error.hpp"
#include "format.hpp"
#include "parallel.hpp"
#include "stats.hpp"

namespace pdfcube {

/// Distribution of one depth band. `base_location` is the family's location
/// (mean for Normal/Uniform/Exponential/Gamma/Geometric, log-mean for
/// LogNormal, location for Cauchy/Logistic/StudentT, scale for Weibull) and
/// `base_scale` its spread (sd, log-sd, scale, or Weibull shape).
struct LayerSpec {
    std::uint32_t layer_index = 0;
    DistributionKind kind = DistributionKind::Normal;
    double base_location = 0.0;
    double base_scale = 1.0;
};

inline constexpr double kStudentTGeneratorDf = 5.0;

/// Per-kind defaults placing the four basic families in separate (mean, sd)
/// regions.
[[nodiscard]] inline LayerSpec default_layer(std::uint32_t index, DistributionKind kind) {
    LayerSpec l{index, kind, 0.0, 1.0};
    switch (kind) {
    case DistributionKind::Normal: l.base_location = 0.0; l.base_scale = 1.0; break;
    case DistributionKind::LogNormal: l.base_location = 1.0; l.base_scale = 0.6; break;
    case DistributionKind::Exponential: l.base_location = 5.0; l.base_scale = 5.0; break;
    case DistributionKind::Uniform: l.base_location = 20.0; l.base_scale = 3.0; break;
    case DistributionKind::Cauchy: l.base_location = -10.0; l.base_scale = 0.5; break;
    case DistributionKind::Gamma: l.base_location = 10.0; l.base_scale = 4.0; break;
    case DistributionKind::Geometric: l.base_location = 3.0; l.base_scale = 1.0; break;
    case DistributionKind::Logistic: l.base_location = -30.0; l.base_scale = 2.0; break;
    case DistributionKind::StudentT: l.base_location = 40.0; l.base_scale = 1.0; break;
    case DistributionKind::Weibull: l.base_location = 8.0; l.base_scale = 2.0; break;
    case DistributionKind::PointMass: throw ValidationError("PointMass layers are not supported");
    }
    return l;
}

/// `count` layers cycling Normal, LogNormal, Exponential, Uniform.
[[nodiscard]] inline std::vector<LayerSpec> default_layers(std::uint32_t count = 16) {
    constexpr std::array cycle{DistributionKind::Normal, DistributionKind::LogNormal,
                               DistributionKind::Exponential, DistributionKind::Uniform};
    std::vector<LayerSpec> layers;
    for (std::uint32_t i = 0; i < count; ++i) layers.push_back(default_layer(i, cycle[i % 4]));
    return layers;
}

struct GenConfig {
    CubeGeometry geometry;
    std::vector<LayerSpec> layers = default_layers();
    std::uint32_t run_count = 100;
    std::uint64_t seed = 0;
    double duplicate_fraction = 0.3;
    /// Location shift per unit of (x + y).
    double spatial_gradient = 0.001;

    void validate() const {
        geometry.validate();
        if (layers.empty()) throw ValidationError("generator needs at least one layer");
        if (run_count < 2) throw ValidationError("generator needs at least 2 runs");
        if (!(duplicate_fraction >= 0.0 && duplicate_fraction <= 1.0))
            throw ValidationError("duplicate fraction must be in [0, 1]");
        if (!std::isfinite(spatial_gradient)) throw ValidationError("spatial gradient must be finite");
        for (const auto& l : layers) {
            if (!(l.base_scale > 0.0)) throw ValidationError("layer scale must be > 0");
            if (l.kind == DistributionKind::PointMass)
                throw ValidationError("PointMass layers are not supported");
        }
    }
};

namespace detail {

[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Draw stream keyed by (seed, run, point); independent of generation order.
class CounterStream {
public:
    CounterStream(std::uint64_t seed, std::uint64_t run, std::uint64_t point)
        : state_(splitmix64(splitmix64(splitmix64(seed) ^ run) ^ point)) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        return splitmix64(state_);
    }
    /// Uniform in the open interval (0, 1).
    double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
    /// Gamma(shape, 1), Marsaglia-Tsang.
    double gamma(double shape) {
        if (shape < 1.0) return gamma(shape + 1.0) * std::pow(uniform(), 1.0 / shape);
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double z = 0.0, v = 0.0;
            do {
                z = normal();
                v = 1.0 + c * z;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (std::log(u) < 0.5 * z * z + d - d * v + d * std::log(v)) return d * v;
        }
    }

private:
    std::uint64_t state_;
};

} // namespace detail

/// Known generating distribution of every point.
class GroundTruth {
public:
    explicit GroundTruth(GenConfig config) : config_(std::move(config)) { config_.validate(); }

    [[nodiscard]] const GenConfig& config() const { return config_; }
    [[nodiscard]] const CubeGeometry& geometry() const { return config_.geometry; }

    [[nodiscard]] const LayerSpec& layer_of_slice(std::uint32_t z) const {
        const auto layers = static_cast<std::uint32_t>(config_.layers.size());
        const auto depth = std::max<std::uint32_t>(1, geometry().slice_count / layers);
        return config_.layers[std::min(z / depth, layers - 1)];
    }

    [[nodiscard]] DistributionKind kind_of(PointId id) const {
        return layer_of_slice(decode(id, geometry()).z).kind;
    }

    /// True when this point copies its left neighbour's observation vector.
    [[nodiscard]] bool is_duplicate(PointId id) const {
        const auto& g = geometry();
        const auto c = decode(id, g);
        if (c.x == 0) return false;
        const std::uint64_t candidates = std::uint64_t{g.points_per_line - 1} * g.lines_per_slice;
        const auto wanted = std::min<std::uint64_t>(
            static_cast<std::uint64_t>(std::floor(config_.duplicate_fraction *
                                                  static_cast<double>(g.points_per_slice()))),
            candidates);
        if (wanted == 0) return false;
        const std::uint64_t k = std::uint64_t{c.y} * (g.points_per_line - 1) + (c.x - 1);
        return (k + 1) * wanted / candidates > k * wanted / candidates;
    }

    /// The point whose draws this point carries (itself unless duplicated).
    [[nodiscard]] PointId source_of(PointId id) const {
        while (is_duplicate(id)) id = PointId{id.linear_index - 1};
        return id;
    }

    [[nodiscard]] DistributionParams params_of(PointId id) const {
        const auto src = source_of(id);
        const auto c = decode(src, geometry());
        const auto& layer = layer_of_slice(c.z);
        const double loc =
            layer.base_location + config_.spatial_gradient * (static_cast<double>(c.x) + c.y);
        const double s = layer.base_scale;
        switch (layer.kind) {
        case DistributionKind::Normal: return {layer.kind, loc, s};
        case DistributionKind::LogNormal: return {layer.kind, loc, s};
        case DistributionKind::Exponential: return {layer.kind, 1.0 / positive(loc)};
        case DistributionKind::Uniform:
            return {layer.kind, loc - std::numbers::sqrt3 * s, loc + std::numbers::sqrt3 * s};
        case DistributionKind::Cauchy: return {layer.kind, loc, s};
        case DistributionKind::Gamma: {
            const double m = positive(loc);
            return {layer.kind, (m / s) * (m / s), m / (s * s)};
        }
        case DistributionKind::Geometric: return {layer.kind, 1.0 / (1.0 + positive(loc))};
        case DistributionKind::Logistic: return {layer.kind, loc, s};
        case DistributionKind::StudentT: return {layer.kind, loc, s, kStudentTGeneratorDf};
        case DistributionKind::Weibull: return {layer.kind, s, positive(loc)};
        case DistributionKind::PointMass: break;
        }
        throw ValidationError("unsupported layer kind");
    }

    /// Stored value of `run` at `id`, rounded to the on-disk float32.
    [[nodiscard]] double value(std::uint32_t run, PointId id) const {
        const auto src = source_of(id);
        return static_cast<float>(draw(params_of(src), run, src));
    }

    [[nodiscard]] ObservationSet observations(PointId id) const {
        ObservationSet v(config_.run_count);
        const auto src = source_of(id);
        const auto params = params_of(src);
        for (std::uint32_t r = 0; r < config_.run_count; ++r)
            v[r] = static_cast<float>(draw(params, r, src));
        return v;
    }

private:
    static double positive(double loc) {
        if (!(loc > 0.0)) throw ValidationError("layer location must be > 0 for this kind");
        return loc;
    }

    [[nodiscard]] double draw(const DistributionParams& p, std::uint32_t run, PointId src) const {
        detail::CounterStream rng(config_.seed, run, src.linear_index);
        switch (p.kind) {
        case DistributionKind::Normal: return p.p1 + p.p2 * rng.normal();
        case DistributionKind::LogNormal: return std::exp(p.p1 + p.p2 * rng.normal());
        case DistributionKind::Exponential: return -std::log(rng.uniform()) / p.p1;
        case DistributionKind::Uniform: return p.p1 + (p.p2 - p.p1) * rng.uniform();
        case DistributionKind::Cauchy:
            return p.p1 + p.p2 * std::tan(std::numbers::pi * (rng.uniform() - 0.5));
        case DistributionKind::Gamma: return rng.gamma(p.p1) / p.p2;
        case DistributionKind::Geometric:
            return p.p1 >= 1.0 ? 0.0 : std::floor(std::log(rng.uniform()) / std::log1p(-p.p1));
        case DistributionKind::Logistic: {
            const double u = rng.uniform();
            return p.p1 + p.p2 * std::log(u / (1.0 - u));
        }
        case DistributionKind::StudentT: {
            const double z = rng.normal();
            const double chi2 = 2.0 * rng.gamma(0.5 * p.p3);
            return p.p1 + p.p2 * z / std::sqrt(chi2 / p.p3);
        }
        case DistributionKind::Weibull: return p.p2 * std::pow(-std::log(rng.uniform()), 1.0 / p.p1);
        case DistributionKind::PointMass: break;
        }
        return 0.0;
    }

    GenConfig config_;
};

inline constexpr const char* kGroundTruthFile = "ground_truth.csv";
inline constexpr const char* kLabelsFile = "labels.csv";

[[nodiscard]] inline std::string run_file_name(std::uint32_t run, std::uint32_t run_count) {
    const auto width = std::max<std::size_t>(4, std::to_string(run_count - 1).size());
    auto digits = std::to_string(run);
    digits.insert(0, width - digits.size(), '0');
    return "run_" + digits + kRunFileExtension;
}

/// (mean, sd, true kind) for every point of the slice, statistics computed
/// from the stored values.
[[nodiscard]] inline std::vector<LabeledStats> ground_truth_labels(const GroundTruth& gt,
                                                                   std::uint32_t slice_index,
                                                                   unsigned threads = 1) {
    const auto& g = gt.geometry();
    if (slice_index >= g.slice_count)
        throw BoundsError("unknown slice " + std::to_string(slice_index));
    const auto first = whole_slice(g, slice_index).first_point(g).linear_index;
    std::vector<LabeledStats> labels(g.points_per_slice());
    parallel_for(labels.size(), threads, [&](std::size_t i) {
        const PointId id{first + i};
        const auto values = gt.observations(id);
        const auto s = point_stats(values);
        labels[i] = LabeledStats{s.mean, s.std, gt.kind_of(id), id, slice_index};
    });
    return labels;
}

struct GeneratedDataset {
    std::vector<fs::path> run_paths;
    GroundTruth truth;
};

/// Writes run files, the ground-truth sidecar (`point_id,kind,param1,param2`)
/// and a labels file (`point_id,slice,mean,std,kind`) into out_dir.
inline GeneratedDataset generate(const GenConfig& config, const fs::path& out_dir,
                                 unsigned threads = 1) {
    GroundTruth truth(config);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

    const auto& g = config.geometry;
    const auto total = g.total_points();
    std::vector<PointId> sources(total);
    std::vector<DistributionParams> params(total);
    for (std::uint64_t i = 0; i < total; ++i) {
        sources[i] = truth.source_of(PointId{i});
        params[i] = truth.params_of(PointId{i});
    }

    std::vector<fs::path> paths(config.run_count);
    for (std::uint32_t r = 0; r < config.run_count; ++r)
        paths[r] = out_dir / run_file_name(r, config.run_count);

    parallel_for(config.run_count, threads, [&](std::size_t r) {
        std::vector<float> volume(total);
        for (std::uint64_t i = 0; i < total; ++i)
            volume[i] = sources[i].linear_index == i
                            ? static_cast<float>(truth.value(static_cast<std::uint32_t>(r), PointId{i}))
                            : volume[sources[i].linear_index];
        write_run(paths[r], g, std::span<const float>(volume));
    });

    {
        std::ofstream out(out_dir / kGroundTruthFile, std::ios::trunc);
        if (!out) throw IoError("cannot write ground truth in '" + out_dir.string() + "'");
        for (std::uint64_t i = 0; i < total; ++i) {
            const auto& p = params[i];
            out << i << ',' << kind_name(p.kind) << ',' << format_real(p.p1) << ','
                << (param_count(p.kind) >= 2 ? format_real(p.p2) : std::string()) << '\n';
        }
        if (!out) throw IoError("write failed for ground truth in '" + out_dir.string() + "'");
    }

    std::vector<LabeledStats> labels;
    labels.reserve(total);
    for (std::uint32_t z = 0; z < g.slice_count; ++z) {
        auto slice = ground_truth_labels(truth, z, threads);
        labels.insert(labels.end(), slice.begin(), slice.end());
    }
    write_labels(out_dir / kLabelsFile, labels, g);

    return GeneratedDataset{std::move(paths), std::move(truth)};
}

} // namespace pdfcube
