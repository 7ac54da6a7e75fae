#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pdfcube/pdfcube.hpp"

namespace pdfcube::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

/// Default for --threads: PDFCUBE_THREADS when set, else the core count.
[[nodiscard]] inline unsigned env_threads() {
    if (const char* env = std::getenv("PDFCUBE_THREADS"); env && *env) {
        try {
            const auto n = parse_int<unsigned>(env, "PDFCUBE_THREADS");
            if (n >= 1) return n;
        } catch (const ValidationError&) {
        }
    }
    return default_thread_count();
}

/// "ZxYxX": slices x lines x points per line.
[[nodiscard]] inline CubeGeometry parse_dims(const std::string& text) {
    const auto parts = split(text, 'x');
    if (parts.size() != 3) throw ValidationError("--dims must look like ZxYxX, got '" + text + "'");
    CubeGeometry g{parse_int<std::uint32_t>(parts[2], "points per line"),
                   parse_int<std::uint32_t>(parts[1], "lines per slice"),
                   parse_int<std::uint32_t>(parts[0], "slice count")};
    g.validate();
    return g;
}

[[nodiscard]] inline std::vector<std::uint32_t> parse_grid(const std::string& text, const char* what) {
    std::vector<std::uint32_t> out;
    for (auto part : split(text, ',')) out.push_back(parse_int<std::uint32_t>(part, what));
    if (out.empty()) throw ValidationError(std::string(what) + " is empty");
    return out;
}

inline const std::vector<std::string>& report_columns() {
    static const std::vector<std::string> cols{
        "source",          "method",          "types",        "slice",       "points",
        "window_lines",    "threads",         "bins",         "fit_invocations",
        "group_count",     "reuse_hits",      "fallbacks",    "loading_seconds",
        "compute_seconds", "average_error"};
    return cols;
}

/// Per-summary CSV rows (fixed header) from every file in the directory.
inline void write_report(const std::filesystem::path& dir, const std::filesystem::path& out_path,
                         std::ostream& err) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw IoError("summaries directory '" + dir.string() + "' does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir, ec))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());

    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw IoError("cannot write report '" + out_path.string() + "'");
    const auto& cols = report_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n';
    for (const auto& f : files) {
        std::ifstream in(f);
        if (!in) throw IoError("cannot read summary '" + f.string() + "'");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::map<std::string, std::string, std::less<>> rec;
            try {
                rec = KeyValueRecord::parse(line);
            } catch (const ValidationError&) {
                err << "skipping non-summary line in " << f.filename().string() << '\n';
                continue;
            }
            if (!rec.contains("method") || !rec.contains("average_error")) {
                err << "skipping non-summary line in " << f.filename().string() << '\n';
                continue;
            }
            rec["source"] = f.filename().string();
            for (std::size_t i = 0; i < cols.size(); ++i) {
                const auto it = rec.find(cols[i]);
                out << (i ? "," : "") << (it == rec.end() ? std::string() : it->second);
            }
            out << '\n';
        }
    }
    if (!out) throw IoError("write failed for report '" + out_path.string() + "'");
}

/// Entry point shared by the executable and the tests. Data records go to
/// `out`, diagnostics to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Per-point distribution fitting over slices of ensemble cubes", "pdfcube"};
    app.require_subcommand(1);

    const unsigned default_threads = env_threads();

    // generate
    std::string gen_out, gen_dims = "8x16x16";
    std::uint32_t gen_runs = 100, gen_layers = 16;
    std::uint64_t gen_seed = 0;
    double gen_dup = 0.3, gen_gradient = 0.001;
    unsigned gen_threads = default_threads;
    auto* cmd_generate = app.add_subcommand("generate", "Write a synthetic ensemble with known distributions");
    cmd_generate->add_option("--out", gen_out, "Output directory")->required();
    cmd_generate->add_option("--dims", gen_dims, "Cube size as slices x lines x points, e.g. 8x16x16");
    cmd_generate->add_option("--runs", gen_runs, "Number of simulation runs");
    cmd_generate->add_option("--layers", gen_layers, "Number of depth layers");
    cmd_generate->add_option("--seed", gen_seed, "Random seed");
    cmd_generate->add_option("--dup-frac", gen_dup, "Fraction of points copying their left neighbour");
    cmd_generate->add_option("--gradient", gen_gradient, "Location shift per unit of x + y");
    cmd_generate->add_option("--threads", gen_threads, "Worker threads");

    // fit
    std::string fit_data, fit_method = "baseline", fit_model, fit_out;
    std::uint32_t fit_slice = 0, fit_window = 25;
    int fit_types = 4;
    unsigned fit_threads = default_threads;
    std::size_t fit_bins = kDefaultIntervals;
    bool fit_strict = false;
    auto* cmd_fit = app.add_subcommand("fit", "Fit a distribution to every point of a slice");
    cmd_fit->add_option("--data", fit_data, "Dataset directory or run list file")->required();
    cmd_fit->add_option("--slice", fit_slice, "Slice index");
    cmd_fit->add_option("--method", fit_method, "baseline|grouping|reuse|ml|grouping-ml|reuse-ml");
    cmd_fit->add_option("--types", fit_types, "Candidate set: 4 or 10");
    cmd_fit->add_option("--window-lines", fit_window, "Lines per window");
    cmd_fit->add_option("--threads", fit_threads, "Worker threads");
    cmd_fit->add_option("--model", fit_model, "Decision tree model (ML methods)");
    cmd_fit->add_option("--bins", fit_bins, "Histogram intervals L");
    cmd_fit->add_flag("--strict-group", fit_strict, "Group only identical observation vectors");
    cmd_fit->add_option("--out", fit_out, "Per-point results file");

    // features
    std::string feat_data, feat_sampler = "random", feat_model;
    std::uint32_t feat_slice = 0;
    double feat_rate = 0.1;
    std::uint64_t feat_seed = 0;
    bool feat_group = false;
    unsigned feat_threads = default_threads;
    auto* cmd_features = app.add_subcommand("features", "Estimate slice features by sampling");
    cmd_features->add_option("--data", feat_data, "Dataset directory or run list file")->required();
    cmd_features->add_option("--slice", feat_slice, "Slice index");
    cmd_features->add_option("--rate", feat_rate, "Sampling rate in (0, 1]");
    cmd_features->add_option("--sampler", feat_sampler, "random|kmeans");
    cmd_features->add_option("--model", feat_model, "Decision tree model")->required();
    cmd_features->add_option("--seed", feat_seed, "Sampling seed");
    cmd_features->add_flag("--group", feat_group, "Group sampled points before prediction");
    cmd_features->add_option("--threads", feat_threads, "Worker threads");

    // train-tree
    std::string tt_labels, tt_out;
    std::uint32_t tt_depth = 5, tt_bins = 32;
    double tt_split = 0.8;
    std::uint64_t tt_seed = 0;
    std::optional<std::uint32_t> tt_slice;
    std::size_t tt_limit = 0;
    auto* cmd_train_tree = app.add_subcommand("train-tree", "Train a decision tree on labelled statistics");
    cmd_train_tree->add_option("--labels", tt_labels, "Labels CSV (mean,std,kind columns)")->required();
    cmd_train_tree->add_option("--depth", tt_depth, "Maximum depth");
    cmd_train_tree->add_option("--max-bins", tt_bins, "Candidate thresholds per feature + 1");
    cmd_train_tree->add_option("--split", tt_split, "Training fraction; the rest measures model error");
    cmd_train_tree->add_option("--seed", tt_seed, "Split seed");
    cmd_train_tree->add_option("--slice", tt_slice, "Use only labels of this slice");
    cmd_train_tree->add_option("--limit", tt_limit, "Use a seeded subsample of at most this many labels");
    cmd_train_tree->add_option("--out", tt_out, "Model output file")->required();

    // tune-tree
    std::string tu_labels, tu_out, tu_depths = "1,2,3,4,5,6,8,10", tu_bins = "2,4,8,16,32,64";
    double tu_split = 0.7;
    std::uint64_t tu_seed = 0;
    std::optional<std::uint32_t> tu_slice;
    std::size_t tu_limit = 0;
    auto* cmd_tune_tree = app.add_subcommand("tune-tree", "Choose depth and max bins on a validation split");
    cmd_tune_tree->add_option("--labels", tu_labels, "Labels CSV")->required();
    cmd_tune_tree->add_option("--depth-grid", tu_depths, "Comma-separated depths");
    cmd_tune_tree->add_option("--bins-grid", tu_bins, "Comma-separated max bins");
    cmd_tune_tree->add_option("--split", tu_split, "Training fraction");
    cmd_tune_tree->add_option("--seed", tu_seed, "Split seed");
    cmd_tune_tree->add_option("--slice", tu_slice, "Use only labels of this slice");
    cmd_tune_tree->add_option("--limit", tu_limit, "Use a seeded subsample of at most this many labels");
    cmd_tune_tree->add_option("--out", tu_out, "Write a model trained with the chosen values");

    // tune-window
    std::string tw_data, tw_method = "baseline", tw_model, tw_candidates = "5,10,25,50";
    std::uint32_t tw_slice = 0, tw_probe = 2;
    int tw_types = 4;
    unsigned tw_threads = default_threads;
    std::size_t tw_bins = kDefaultIntervals;
    auto* cmd_tune_window = app.add_subcommand("tune-window", "Pick the window size with the lowest cost per line");
    cmd_tune_window->add_option("--data", tw_data, "Dataset directory or run list file")->required();
    cmd_tune_window->add_option("--slice", tw_slice, "Slice index");
    cmd_tune_window->add_option("--method", tw_method, "Fitting method");
    cmd_tune_window->add_option("--types", tw_types, "Candidate set: 4 or 10");
    cmd_tune_window->add_option("--candidates", tw_candidates, "Comma-separated window sizes in lines");
    cmd_tune_window->add_option("--probe-windows", tw_probe, "Windows measured per candidate");
    cmd_tune_window->add_option("--threads", tw_threads, "Worker threads");
    cmd_tune_window->add_option("--model", tw_model, "Decision tree model (ML methods)");
    cmd_tune_window->add_option("--bins", tw_bins, "Histogram intervals L");

    // report
    std::string rep_dir, rep_out;
    auto* cmd_report = app.add_subcommand("report", "Collect run summaries into a CSV table");
    cmd_report->add_option("--summaries", rep_dir, "Directory of summary files")->required();
    cmd_report->add_option("--out", rep_out, "CSV output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    }

    auto load_labels = [](const std::string& path, std::optional<std::uint32_t> slice, std::size_t limit,
                          std::uint64_t seed) {
        auto labels = read_labels(path);
        if (slice)
            std::erase_if(labels, [&](const LabeledStats& l) { return l.slice != *slice; });
        if (limit > 0 && labels.size() > limit) {
            std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dull);
            std::shuffle(labels.begin(), labels.end(), rng);
            labels.resize(limit);
        }
        if (labels.empty()) throw ValidationError("no labels selected from '" + path + "'");
        return labels;
    };

    try {
        if (cmd_generate->parsed()) {
            GenConfig cfg;
            cfg.geometry = parse_dims(gen_dims);
            if (gen_runs < 2) throw ValidationError("--runs must be >= 2 (standard deviation needs two values)");
            if (gen_layers < 1) throw ValidationError("--layers must be >= 1");
            cfg.layers = default_layers(gen_layers);
            cfg.run_count = gen_runs;
            cfg.seed = gen_seed;
            cfg.duplicate_fraction = gen_dup;
            cfg.spatial_gradient = gen_gradient;
            const auto result = generate(cfg, gen_out, std::max(1u, gen_threads));
            KeyValueRecord r;
            r.add("out", gen_out).add("dims", gen_dims).add("runs", gen_runs).add("layers", gen_layers)
                .add("seed", gen_seed).add("dup_frac", gen_dup).add("run_files", static_cast<std::uint64_t>(result.run_paths.size()));
            out << r.str() << '\n';
        } else if (cmd_fit->parsed()) {
            const auto method = parse_method(fit_method);
            RunOptions opts;
            opts.method = method;
            opts.kinds = KindSet::from_count(fit_types);
            opts.window_lines = fit_window;
            opts.threads = std::max(1u, fit_threads);
            opts.intervals = fit_bins;
            if (fit_bins < 1) throw ValidationError("--bins must be >= 1");
            opts.grouping.mode = fit_strict ? KeyMode::Strict : KeyMode::Stats;
            opts.results_path = fit_out;
            std::optional<DecisionTreeModel> model;
            if (uses_ml(method)) {
                if (fit_model.empty())
                    throw ValidationError("--method " + fit_method + " requires --model");
                model = DecisionTreeModel::load(fit_model);
                opts.model = &*model;
                opts.model_path = fit_model;
            } else if (!fit_model.empty()) {
                throw ValidationError("--model is only used by ML methods");
            }
            const auto data = Dataset::open(fit_data);
            const auto result = run_slice(data, fit_slice, opts);
            out << result.summary.record() << '\n';
        } else if (cmd_features->parsed()) {
            SamplingConfig cfg;
            cfg.rate = feat_rate;
            if (feat_sampler == "random") cfg.sampler = Sampler::Random;
            else if (feat_sampler == "kmeans") cfg.sampler = Sampler::KMeans;
            else throw ValidationError("--sampler must be random or kmeans");
            cfg.seed = feat_seed;
            cfg.group_before_predict = feat_group;
            cfg.threads = std::max(1u, feat_threads);
            cfg.validate();
            const auto model = DecisionTreeModel::load(feat_model);
            const auto data = Dataset::open(feat_data);
            out << slice_features(data, feat_slice, cfg, model).record() << '\n';
        } else if (cmd_train_tree->parsed()) {
            const auto labels = load_labels(tt_labels, tt_slice, tt_limit, tt_seed);
            const Hyperparams hp{tt_depth, tt_bins};
            hp.validate();
            std::vector<LabeledStats> train_set = labels, test_set;
            if (labels.size() >= 2) {
                auto parts = split_labels(labels, tt_split, tt_seed);
                if (!parts.first.empty() && !parts.second.empty()) {
                    train_set = std::move(parts.first);
                    test_set = std::move(parts.second);
                }
            }
            const auto model = train(train_set, hp);
            model.save(tt_out);
            const auto& eval = test_set.empty() ? train_set : test_set;
            KeyValueRecord r;
            r.add("depth", tt_depth).add("max_bins", tt_bins)
                .add("train_size", static_cast<std::uint64_t>(train_set.size()))
                .add("test_size", static_cast<std::uint64_t>(test_set.size()))
                .add("model_error", model_error(model, eval)).add("model", tt_out);
            out << r.str() << '\n';
        } else if (cmd_tune_tree->parsed()) {
            const auto labels = load_labels(tu_labels, tu_slice, tu_limit, tu_seed);
            const auto depths = parse_grid(tu_depths, "--depth-grid");
            const auto bins = parse_grid(tu_bins, "--bins-grid");
            const auto result = tune(labels, depths, bins, tu_split, tu_seed);
            KeyValueRecord r;
            r.add("depth", result.best.depth).add("max_bins", result.best.max_bins)
                .add("validation_error", result.validation_error);
            if (!tu_out.empty()) {
                const auto parts = split_labels(labels, tu_split, tu_seed);
                train(parts.first, result.best).save(tu_out);
                r.add("model", tu_out);
            }
            out << r.str() << '\n';
        } else if (cmd_tune_window->parsed()) {
            RunOptions opts;
            opts.method = parse_method(tw_method);
            opts.kinds = KindSet::from_count(tw_types);
            opts.threads = std::max(1u, tw_threads);
            opts.intervals = tw_bins;
            std::optional<DecisionTreeModel> model;
            if (uses_ml(opts.method)) {
                if (tw_model.empty()) throw ValidationError("--method " + tw_method + " requires --model");
                model = DecisionTreeModel::load(tw_model);
                opts.model = &*model;
            }
            const auto candidates = parse_grid(tw_candidates, "--candidates");
            const auto data = Dataset::open(tw_data);
            const auto result = tune_window(data, tw_slice, opts, candidates, tw_probe);
            KeyValueRecord r;
            r.add("best_window_lines", result.best_lines);
            for (const auto& [lines, cost] : result.measurements)
                r.add("seconds_per_line_" + std::to_string(lines), cost);
            out << r.str() << '\n';
        } else if (cmd_report->parsed()) {
            write_report(rep_dir, rep_out, err);
        }
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    }
    return kExitOk;
}

} // namespace pdfcube::cli
