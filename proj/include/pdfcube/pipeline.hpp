#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cube.hpp"
#include "cube_io.hpp"
#include "distributions.hpp"
#include "dtree.hpp"
#include "error.hpp"
#include "format.hpp"
#include "grouping.hpp"
#include "parallel.hpp"
#include "stats.hpp"

namespace pdfcube {

enum class Method { Baseline, Grouping, Reuse, ML, GroupingML, ReuseML };

inline constexpr std::array kAllMethods{Method::Baseline, Method::Grouping,   Method::Reuse,
                                        Method::ML,       Method::GroupingML, Method::ReuseML};

[[nodiscard]] constexpr std::string_view method_name(Method m) {
    switch (m) {
    case Method::Baseline: return "baseline";
    case Method::Grouping: return "grouping";
    case Method::Reuse: return "reuse";
    case Method::ML: return "ml";
    case Method::GroupingML: return "grouping-ml";
    case Method::ReuseML: return "reuse-ml";
    }
    return "?";
}

[[nodiscard]] inline Method parse_method(std::string_view name) {
    for (auto m : kAllMethods)
        if (method_name(m) == name) return m;
    throw ValidationError("unknown method '" + std::string(name) + "'");
}

[[nodiscard]] constexpr bool uses_ml(Method m) {
    return m == Method::ML || m == Method::GroupingML || m == Method::ReuseML;
}
[[nodiscard]] constexpr bool uses_grouping(Method m) {
    return m != Method::Baseline && m != Method::ML;
}
[[nodiscard]] constexpr bool uses_reuse(Method m) { return m == Method::Reuse || m == Method::ReuseML; }

/// Points that may be loaded concurrently: one per core across all workers.
[[nodiscard]] inline std::uint64_t loading_parallelism_cap(std::uint32_t workers,
                                                           std::uint32_t cores_per_worker) {
    if (workers < 1 || cores_per_worker < 1)
        throw ValidationError("workers and cores per worker must be >= 1");
    return std::uint64_t{workers} * cores_per_worker;
}

struct RunOptions {
    Method method = Method::Baseline;
    KindSet kinds = KindSet::four_types();
    std::uint32_t window_lines = 25;
    unsigned threads = 1;
    const DecisionTreeModel* model = nullptr;
    std::size_t intervals = kDefaultIntervals;
    GroupingOptions grouping{};
    /// 0 means unbounded.
    std::uint64_t max_loading_in_flight = 0;
    /// Per-point results are written here when nonempty.
    std::filesystem::path results_path;
    bool collect_fits = false;
    LoadTrace* load_trace = nullptr;
    /// Labels echoed into the summary.
    std::string model_path;
};

struct RunSummary {
    Method method = Method::Baseline;
    std::size_t kind_count = 4;
    std::uint32_t slice = 0;
    std::uint64_t points = 0;
    double average_error = 0.0;
    std::uint64_t fit_invocations = 0;
    std::uint64_t reuse_hits = 0;
    std::uint64_t group_count = 0;
    std::uint64_t fallbacks = 0;
    std::uint64_t windows = 0;
    std::uint32_t window_lines = 0;
    unsigned threads = 1;
    std::size_t intervals = kDefaultIntervals;
    double loading_seconds = 0.0;
    double compute_seconds = 0.0;
    std::string results_path;
    std::string model_path;

    [[nodiscard]] std::string record() const {
        KeyValueRecord r;
        r.add("method", std::string(method_name(method)))
            .add("types", static_cast<std::uint64_t>(kind_count))
            .add("slice", slice)
            .add("points", points)
            .add("average_error", average_error)
            .add("fit_invocations", fit_invocations)
            .add("reuse_hits", reuse_hits)
            .add("group_count", group_count)
            .add("fallbacks", fallbacks)
            .add("windows", windows)
            .add("window_lines", window_lines)
            .add("threads", static_cast<std::uint64_t>(threads))
            .add("bins", static_cast<std::uint64_t>(intervals))
            .add("loading_seconds", loading_seconds)
            .add("compute_seconds", compute_seconds)
            .add("results", results_path)
            .add("model", model_path);
        return r.str();
    }
};

struct RunOutput {
    RunSummary summary;
    /// Filled when RunOptions::collect_fits is set.
    std::vector<PointFit> fits;
};

/// Writes one result line: `point_id,x,y,kind,p1,p2,p3,error`. Parameters a
/// kind does not use are left blank.
[[nodiscard]] inline std::string result_line(const PointFit& pf, const CubeGeometry& geom) {
    const auto c = decode(pf.id, geom);
    const auto& p = pf.fit.params;
    const int count = param_count(p.kind);
    std::string line = std::to_string(pf.id.linear_index);
    line += ',' + std::to_string(c.x) + ',' + std::to_string(c.y) + ',';
    line += kind_name(p.kind);
    line += ',' + format_real(p.p1);
    line += ',' + (count >= 2 ? format_real(p.p2) : std::string());
    line += ',' + (count >= 3 ? format_real(p.p3) : std::string());
    line += ',' + format_real(pf.fit.error);
    return line;
}

/// Per-slice state for processing windows one after another: the reuse
/// cache, counters, and the results stream.
class SliceRunner {
public:
    struct WindowOutcome {
        std::vector<PointFit> fits;
        double loading_seconds = 0.0;
        double compute_seconds = 0.0;
    };

    SliceRunner(const Dataset& data, RunOptions opts) : data_(data), opts_(std::move(opts)) {
        if (opts_.kinds.empty()) throw ValidationError("the candidate kind set is empty");
        if (opts_.window_lines == 0) throw ValidationError("window lines must be >= 1");
        if (uses_ml(opts_.method)) {
            if (!opts_.model || !opts_.model->trained())
                throw ValidationError("method " + std::string(method_name(opts_.method)) +
                                      " needs a trained decision tree model");
            for (const auto& node : opts_.model->nodes())
                if (node.leaf && (node.kind == DistributionKind::PointMass || !opts_.kinds.contains(node.kind)))
                    throw ValidationError("model predicts " + std::string(kind_name(node.kind)) +
                                          ", which is outside the " +
                                          std::to_string(opts_.kinds.size()) + "-types set");
        } else if (opts_.model) {
            throw ValidationError("method " + std::string(method_name(opts_.method)) +
                                  " does not take a model");
        }
    }

    [[nodiscard]] const RunOptions& options() const { return opts_; }

    WindowOutcome process(const WindowSpec& window) {
        using clock = std::chrono::steady_clock;
        WindowOutcome out;
        const auto t0 = clock::now();
        const auto records = data_.load_window(
            window, LoadOptions{opts_.threads, opts_.max_loading_in_flight, opts_.load_trace});
        const auto t1 = clock::now();

        if (uses_grouping(opts_.method)) {
            const auto groups = group_window(records, opts_.grouping, opts_.threads);
            group_count_ += groups.size();
            std::vector<FittedPdf> fits(groups.size());
            parallel_for(groups.size(), opts_.threads, [&](std::size_t g) {
                const auto& rep = groups[g].representative;
                if (uses_reuse(opts_.method))
                    fits[g] = cache_.get_or_fit(groups[g].key, [&] { return fit_point(rep); }).fit;
                else
                    fits[g] = fit_point(rep);
            });
            GroupFits by_key;
            for (std::size_t g = 0; g < groups.size(); ++g) by_key.emplace(groups[g].key, fits[g]);
            out.fits = expand_results(groups, by_key);
        } else {
            out.fits.resize(records.size());
            parallel_for(records.size(), opts_.threads, [&](std::size_t i) {
                out.fits[i] = PointFit{records[i].id, fit_point(records[i])};
            });
        }
        out.loading_seconds = std::chrono::duration<double>(t1 - t0).count();
        out.compute_seconds = std::chrono::duration<double>(clock::now() - t1).count();
        return out;
    }

    [[nodiscard]] std::uint64_t fit_invocations() const { return fit_invocations_; }
    [[nodiscard]] std::uint64_t fallbacks() const { return fallbacks_; }
    [[nodiscard]] std::uint64_t group_count() const { return group_count_; }
    [[nodiscard]] const ReuseCache& cache() const { return cache_; }

private:
    FittedPdf fit_point(const PointRecord& rec) {
        ++fit_invocations_;
        if (!uses_ml(opts_.method)) return fit_best(rec.values, opts_.kinds, opts_.intervals);
        const auto kind = opts_.model->predict(rec.stats.mean, rec.stats.std);
        auto fit = fit_with_kind(rec.values, kind, opts_.kinds, opts_.intervals);
        if (fit.fallback) ++fallbacks_;
        return fit;
    }

    const Dataset& data_;
    RunOptions opts_;
    ReuseCache cache_;
    std::atomic<std::uint64_t> fit_invocations_{0};
    std::atomic<std::uint64_t> fallbacks_{0};
    std::uint64_t group_count_ = 0;
};

/// Fits every point of the slice window by window, persisting each window's
/// results before moving on, and reports the average interval error.
[[nodiscard]] inline RunOutput run_slice(const Dataset& data, std::uint32_t slice_index,
                                         const RunOptions& opts) {
    const auto& geom = data.geometry();
    SliceRunner runner(data, opts);
    const auto windows = windows_for_slice(geom, slice_index, opts.window_lines);

    std::ofstream results;
    if (!opts.results_path.empty()) {
        results.open(opts.results_path, std::ios::trunc);
        if (!results) throw IoError("cannot write results '" + opts.results_path.string() + "'");
    }

    RunOutput out;
    auto& s = out.summary;
    s.method = opts.method;
    s.kind_count = opts.kinds.size();
    s.slice = slice_index;
    s.window_lines = opts.window_lines;
    s.threads = std::max(1u, opts.threads);
    s.intervals = opts.intervals;
    s.results_path = opts.results_path.string();
    s.model_path = opts.model_path;

    double error_sum = 0.0;
    for (const auto& w : windows) {
        auto outcome = runner.process(w);
        s.loading_seconds += outcome.loading_seconds;
        s.compute_seconds += outcome.compute_seconds;
        for (const auto& pf : outcome.fits) {
            error_sum += pf.fit.error;
            if (results.is_open()) results << result_line(pf, geom) << '\n';
        }
        if (results.is_open()) {
            results.flush();
            if (!results) throw IoError("write failed for results '" + opts.results_path.string() + "'");
        }
        s.points += outcome.fits.size();
        ++s.windows;
        if (opts.collect_fits)
            out.fits.insert(out.fits.end(), outcome.fits.begin(), outcome.fits.end());
    }
    s.average_error = s.points ? error_sum / static_cast<double>(s.points) : 0.0;
    s.fit_invocations = runner.fit_invocations();
    s.reuse_hits = runner.cache().hits();
    s.group_count = runner.group_count();
    s.fallbacks = runner.fallbacks();
    return out;
}

struct WindowTuneResult {
    std::uint32_t best_lines = 0;
    /// (candidate, average seconds per line), in candidate order.
    std::vector<std::pair<std::uint32_t, double>> measurements;
};

/// Measures the cost of one window. The default runs the window through a
/// SliceRunner and returns its computation time.
using WindowCostProbe = std::function<double(const WindowSpec&)>;

/// Runs up to `probe_windows` windows at each candidate size and returns the
/// size with the smallest average cost per line (ties go to the smaller size).
[[nodiscard]] inline WindowTuneResult tune_window(const Dataset& data, std::uint32_t slice_index,
                                                  const RunOptions& base,
                                                  std::span<const std::uint32_t> candidate_sizes,
                                                  std::uint32_t probe_windows,
                                                  const WindowCostProbe& probe = {}) {
    if (candidate_sizes.empty()) throw ValidationError("window tuning needs at least one candidate");
    if (probe_windows < 1) throw ValidationError("probe windows must be >= 1");

    WindowTuneResult result;
    double best = std::numeric_limits<double>::infinity();
    for (auto lines : candidate_sizes) {
        auto windows = windows_for_slice(data.geometry(), slice_index, lines);
        if (windows.size() > probe_windows) windows.resize(probe_windows);

        RunOptions opts = base;
        opts.window_lines = lines;
        opts.results_path.clear();
        std::optional<SliceRunner> runner;
        if (!probe) runner.emplace(data, opts);

        double cost = 0.0;
        std::uint64_t total_lines = 0;
        for (const auto& w : windows) {
            cost += probe ? probe(w) : runner->process(w).compute_seconds;
            total_lines += w.line_count;
        }
        const double per_line = cost / static_cast<double>(total_lines);
        result.measurements.emplace_back(lines, per_line);
        if (per_line < best || (per_line == best && lines < result.best_lines)) {
            best = per_line;
            result.best_lines = lines;
        }
    }
    return result;
}

} // namespace pdfcube
