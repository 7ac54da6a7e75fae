#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cube.hpp"
#include "distributions.hpp"
#include "error.hpp"
#include "format.hpp"

namespace pdfcube {

/// Training example: a point's statistics and its distribution kind.
struct LabeledStats {
    double mean = 0.0;
    double std = 0.0;
    DistributionKind kind = DistributionKind::Normal;
    PointId id{};
    std::uint32_t slice = 0;
};

struct Hyperparams {
    std::uint32_t depth = 5;
    std::uint32_t max_bins = 32;

    void validate() const {
        if (depth < 1) throw ValidationError("tree depth must be >= 1");
        if (max_bins < 2) throw ValidationError("max bins must be >= 2");
    }
    friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

enum class TreeFeature : std::uint8_t { Mean = 0, Std = 1 };

/// Binary classification tree over (mean, sd), nodes stored in preorder.
/// Internal nodes send a sample left when feature < threshold.
class DecisionTreeModel {
public:
    struct Node {
        bool leaf = true;
        TreeFeature feature = TreeFeature::Mean;
        double threshold = 0.0;
        DistributionKind kind = DistributionKind::Normal;
        std::int32_t left = -1;
        std::int32_t right = -1;

        friend bool operator==(const Node&, const Node&) = default;
    };

    DecisionTreeModel() = default;
    DecisionTreeModel(std::vector<Node> nodes, Hyperparams hp) : nodes_(std::move(nodes)), hp_(hp) {}

    [[nodiscard]] bool trained() const { return !nodes_.empty(); }
    [[nodiscard]] const std::vector<Node>& nodes() const { return nodes_; }
    [[nodiscard]] const Hyperparams& hyperparams() const { return hp_; }

    [[nodiscard]] std::uint32_t depth() const {
        if (nodes_.empty()) return 0;
        return depth_from(0);
    }

    [[nodiscard]] DistributionKind predict(double mean, double std) const {
        if (nodes_.empty()) throw ValidationError("decision tree model is not trained");
        std::size_t i = 0;
        while (!nodes_[i].leaf) {
            const auto& n = nodes_[i];
            const double v = n.feature == TreeFeature::Mean ? mean : std;
            i = static_cast<std::size_t>(v < n.threshold ? n.left : n.right);
        }
        return nodes_[i].kind;
    }

    void write(std::ostream& out) const {
        out << "# depth " << hp_.depth << " max_bins " << hp_.max_bins << '\n';
        for (const auto& n : nodes_) {
            if (n.leaf)
                out << "leaf " << kind_name(n.kind) << '\n';
            else
                out << "split " << static_cast<int>(n.feature) << ' ' << format_real(n.threshold) << '\n';
        }
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot write model '" + path.string() + "'");
        write(out);
        if (!out) throw IoError("write failed for model '" + path.string() + "'");
    }

    static DecisionTreeModel read(std::istream& in) {
        std::vector<std::string> lines;
        Hyperparams hp{1, 2};
        bool have_hp = false;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            if (line.front() == '#') {
                std::istringstream hs(line.substr(1));
                std::string k1, k2;
                if (hs >> k1 >> hp.depth >> k2 >> hp.max_bins && k1 == "depth" && k2 == "max_bins")
                    have_hp = true;
                continue;
            }
            lines.push_back(line);
        }
        if (lines.empty()) throw ValidationError("model file has no nodes");

        std::vector<Node> nodes;
        std::size_t pos = 0;
        auto parse = [&](auto& self) -> std::int32_t {
            if (pos >= lines.size()) throw ValidationError("model file ends inside the tree");
            std::istringstream ls(lines[pos++]);
            std::string tag;
            ls >> tag;
            const auto index = static_cast<std::int32_t>(nodes.size());
            nodes.emplace_back();
            if (tag == "leaf") {
                std::string name;
                if (!(ls >> name)) throw ValidationError("model leaf without a kind");
                nodes[index].kind = parse_kind(name);
                return index;
            }
            if (tag != "split") throw ValidationError("unknown model node '" + tag + "'");
            int feature = -1;
            std::string threshold;
            if (!(ls >> feature >> threshold) || (feature != 0 && feature != 1))
                throw ValidationError("malformed model split line");
            nodes[index].leaf = false;
            nodes[index].feature = static_cast<TreeFeature>(feature);
            nodes[index].threshold = parse_real(threshold, "threshold");
            const auto l = self(self);
            nodes[index].left = l;
            const auto r = self(self);
            nodes[index].right = r;
            return index;
        };
        parse(parse);
        if (pos != lines.size()) throw ValidationError("model file has trailing nodes");
        DecisionTreeModel model(std::move(nodes), hp);
        if (!have_hp) model.hp_ = Hyperparams{std::max(1u, model.depth()), 2};
        return model;
    }

    static DecisionTreeModel load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot read model '" + path.string() + "'");
        return read(in);
    }

    friend bool operator==(const DecisionTreeModel&, const DecisionTreeModel&) = default;

private:
    [[nodiscard]] std::uint32_t depth_from(std::size_t i) const {
        const auto& n = nodes_[i];
        if (n.leaf) return 0;
        return 1 + std::max(depth_from(static_cast<std::size_t>(n.left)),
                            depth_from(static_cast<std::size_t>(n.right)));
    }

    std::vector<Node> nodes_;
    Hyperparams hp_;
};

namespace detail {

inline constexpr std::size_t kClassCount = kCandidateKindCount + 1;
using ClassCounts = std::array<std::uint64_t, kClassCount>;

[[nodiscard]] inline double gini(const ClassCounts& counts, std::uint64_t total) {
    if (total == 0) return 0.0;
    double sum = 0.0;
    for (auto c : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        sum += p * p;
    }
    return 1.0 - sum;
}

[[nodiscard]] inline DistributionKind majority(const ClassCounts& counts) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < counts.size(); ++k)
        if (counts[k] > counts[best]) best = k;
    return static_cast<DistributionKind>(best);
}

[[nodiscard]] inline double feature_value(const LabeledStats& l, TreeFeature f) {
    return f == TreeFeature::Mean ? l.mean : l.std;
}

/// Equal-frequency boundaries: the values at ranks i*n/bins, i = 1..bins-1,
/// deduplicated, excluding the minimum (which would split nothing off).
[[nodiscard]] inline std::vector<double> quantile_thresholds(std::span<const LabeledStats> labels,
                                                             TreeFeature f, std::uint32_t bins) {
    std::vector<double> values(labels.size());
    std::transform(labels.begin(), labels.end(), values.begin(),
                   [f](const LabeledStats& l) { return feature_value(l, f); });
    std::sort(values.begin(), values.end());
    std::vector<double> out;
    for (std::uint32_t i = 1; i < bins; ++i) {
        const auto rank = static_cast<std::size_t>(std::uint64_t{i} * values.size() / bins);
        if (rank >= values.size()) continue;
        const double t = values[rank];
        if (t > values.front() && (out.empty() || t > out.back())) out.push_back(t);
    }
    return out;
}

struct TreeBuilder {
    std::span<const LabeledStats> labels;
    std::array<std::vector<double>, 2> thresholds;
    std::vector<DecisionTreeModel::Node> nodes;

    std::int32_t build(std::vector<std::size_t> idx, std::uint32_t depth_left) {
        ClassCounts counts{};
        for (auto i : idx) ++counts[static_cast<std::size_t>(kind_rank(labels[i].kind))];
        const auto index = static_cast<std::int32_t>(nodes.size());
        nodes.emplace_back();
        nodes[index].kind = majority(counts);

        const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
        if (depth_left == 0 || pure || idx.size() < 2) return index;

        const double parent = gini(counts, idx.size());
        double best_gain = 1e-12;
        int best_feature = -1;
        double best_threshold = 0.0;
        for (int f = 0; f < 2; ++f) {
            const auto feature = static_cast<TreeFeature>(f);
            std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                return feature_value(labels[a], feature) < feature_value(labels[b], feature);
            });
            ClassCounts left{};
            std::size_t moved = 0;
            for (double t : thresholds[static_cast<std::size_t>(f)]) {
                while (moved < idx.size() && feature_value(labels[idx[moved]], feature) < t) {
                    ++left[static_cast<std::size_t>(kind_rank(labels[idx[moved]].kind))];
                    ++moved;
                }
                if (moved == 0 || moved == idx.size()) continue;
                ClassCounts right{};
                for (std::size_t k = 0; k < right.size(); ++k) right[k] = counts[k] - left[k];
                const double n = static_cast<double>(idx.size());
                const double gain = parent - static_cast<double>(moved) / n * gini(left, moved) -
                                    static_cast<double>(idx.size() - moved) / n *
                                        gini(right, idx.size() - moved);
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = f;
                    best_threshold = t;
                }
            }
        }
        if (best_feature < 0) return index;

        const auto feature = static_cast<TreeFeature>(best_feature);
        std::vector<std::size_t> lo, hi;
        for (auto i : idx)
            (feature_value(labels[i], feature) < best_threshold ? lo : hi).push_back(i);
        std::sort(lo.begin(), lo.end());
        std::sort(hi.begin(), hi.end());
        nodes[index].leaf = false;
        nodes[index].feature = feature;
        nodes[index].threshold = best_threshold;
        const auto l = build(std::move(lo), depth_left - 1);
        nodes[index].left = l;
        const auto r = build(std::move(hi), depth_left - 1);
        nodes[index].right = r;
        return index;
    }
};

} // namespace detail

/// Greedy CART training: Gini splits over equal-frequency candidate
/// thresholds, stopping at the depth limit, pure nodes, or fewer than two
/// examples. Deterministic in its inputs.
[[nodiscard]] inline DecisionTreeModel train(std::span<const LabeledStats> labels,
                                             const Hyperparams& hp) {
    hp.validate();
    if (labels.empty()) throw ValidationError("cannot train a decision tree on an empty label set");
    detail::TreeBuilder builder{labels, {}, {}};
    builder.thresholds[0] = detail::quantile_thresholds(labels, TreeFeature::Mean, hp.max_bins);
    builder.thresholds[1] = detail::quantile_thresholds(labels, TreeFeature::Std, hp.max_bins);
    std::vector<std::size_t> idx(labels.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    builder.build(std::move(idx), hp.depth);
    return DecisionTreeModel(std::move(builder.nodes), hp);
}

/// Misclassification rate.
[[nodiscard]] inline double model_error(const DecisionTreeModel& model,
                                        std::span<const LabeledStats> labels) {
    if (labels.empty()) throw ValidationError("model error of an empty label set");
    std::size_t wrong = 0;
    for (const auto& l : labels)
        if (model.predict(l.mean, l.std) != l.kind) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

struct LabelSplit {
    std::vector<LabeledStats> first;
    std::vector<LabeledStats> second;
};

/// Seeded random partition; `fraction` of the examples go to `first`.
[[nodiscard]] inline LabelSplit split_labels(std::span<const LabeledStats> labels, double fraction,
                                             std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ValidationError("split fraction must be in (0, 1)");
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto cut = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(labels.size())));
    LabelSplit out;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < cut ? out.first : out.second).push_back(labels[order[i]]);
    return out;
}

struct TuneCell {
    Hyperparams hp;
    double validation_error = 0.0;
};

struct TuneResult {
    Hyperparams best;
    double validation_error = 0.0;
    std::vector<TuneCell> grid;
};

inline constexpr double kTunePlateauTolerance = 1e-3;

/// Grid search on a seeded train/validation split. Picks the smallest
/// (depth, max_bins) whose validation error is within the plateau tolerance
/// of the grid minimum.
[[nodiscard]] inline TuneResult tune(std::span<const LabeledStats> labels,
                                     std::span<const std::uint32_t> depth_grid,
                                     std::span<const std::uint32_t> bins_grid, double split_fraction,
                                     std::uint64_t seed) {
    if (depth_grid.empty() || bins_grid.empty()) throw ValidationError("tuning grids must be nonempty");
    const auto parts = split_labels(labels, split_fraction, seed);
    if (parts.first.empty() || parts.second.empty())
        throw ValidationError("degenerate split: training or validation set is empty");

    TuneResult result;
    for (auto d : depth_grid)
        for (auto b : bins_grid) {
            const Hyperparams hp{d, b};
            const auto model = train(parts.first, hp);
            result.grid.push_back({hp, model_error(model, parts.second)});
        }
    double minimum = result.grid.front().validation_error;
    for (const auto& c : result.grid) minimum = std::min(minimum, c.validation_error);

    const TuneCell* chosen = nullptr;
    for (const auto& c : result.grid) {
        if (c.validation_error > minimum + kTunePlateauTolerance) continue;
        if (!chosen || c.hp.depth < chosen->hp.depth ||
            (c.hp.depth == chosen->hp.depth && c.hp.max_bins < chosen->hp.max_bins))
            chosen = &c;
    }
    result.best = chosen->hp;
    result.validation_error = chosen->validation_error;
    return result;
}

/// Labels file: header `point_id,slice,mean,std,kind`, one example per line.
inline void write_labels(const std::filesystem::path& path, std::span<const LabeledStats> labels,
                         const CubeGeometry& geom) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write labels '" + path.string() + "'");
    out << "point_id,slice,mean,std,kind\n";
    for (const auto& l : labels)
        out << l.id.linear_index << ',' << decode(l.id, geom).z << ',' << format_real(l.mean) << ','
            << format_real(l.std) << ',' << kind_name(l.kind) << '\n';
    if (!out) throw IoError("write failed for labels '" + path.string() + "'");
}

/// Reads a labels file. Requires `mean`, `std` and `kind` columns;
/// `point_id` and `slice` are optional.
[[nodiscard]] inline std::vector<LabeledStats> read_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read labels file '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("labels file '" + path.string() + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    int col_id = -1, col_slice = -1, col_mean = -1, col_std = -1, col_kind = -1;
    const auto header = split(line, ',');
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto c = static_cast<int>(i);
        if (header[i] == "point_id") col_id = c;
        else if (header[i] == "slice") col_slice = c;
        else if (header[i] == "mean") col_mean = c;
        else if (header[i] == "std") col_std = c;
        else if (header[i] == "kind") col_kind = c;
    }
    if (col_mean < 0 || col_std < 0 || col_kind < 0)
        throw ValidationError("labels file '" + path.string() + "' needs mean, std and kind columns");

    std::vector<LabeledStats> labels;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != header.size())
            throw ValidationError("labels file '" + path.string() + "': wrong field count in '" + line + "'");
        LabeledStats l;
        l.mean = parse_real(f[static_cast<std::size_t>(col_mean)], "mean");
        l.std = parse_real(f[static_cast<std::size_t>(col_std)], "std");
        l.kind = parse_kind(f[static_cast<std::size_t>(col_kind)]);
        if (col_id >= 0) l.id = PointId{parse_int(f[static_cast<std::size_t>(col_id)], "point_id")};
        if (col_slice >= 0) l.slice = parse_int<std::uint32_t>(f[static_cast<std::size_t>(col_slice)], "slice");
        labels.push_back(l);
    }
    return labels;
}

} // namespace pdfcube
