#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "pdfcube/dtree.hpp"
#include "temp_dir.hpp"

using namespace pdfcube;
using K = DistributionKind;
using testutil::TempDir;

namespace {

/// Four Gaussian blobs in (mean, sd), one per basic kind.
std::vector<LabeledStats> blobs(std::size_t per_class, double spread, std::uint64_t seed) {
    oracle::TestRng rng(seed);
    const std::pair<K, std::pair<double, double>> centres[] = {
        {K::Normal, {0, 1}}, {K::LogNormal, {3.3, 2.2}}, {K::Exponential, {5, 5}}, {K::Uniform, {20, 3}}};
    std::vector<LabeledStats> out;
    std::uint64_t id = 0;
    for (std::size_t i = 0; i < per_class; ++i)
        for (const auto& [k, c] : centres)
            out.push_back({c.first + spread * rng.normal(), c.second + spread * rng.normal(), k, PointId{id++}, 0});
    return out;
}

/// Path tracing written against the serialized preorder form.
K trace_text(const std::string& text, double mean, double sd) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);)
        if (!l.empty() && l[0] != '#') lines.push_back(l);
    // Subtree sizes let us jump over a left subtree.
    std::vector<std::size_t> size(lines.size(), 0);
    auto measure = [&](auto& self, std::size_t i) -> std::size_t {
        if (lines[i].rfind("leaf", 0) == 0) return size[i] = 1;
        const auto l = self(self, i + 1);
        const auto r = self(self, i + 1 + l);
        return size[i] = 1 + l + r;
    };
    measure(measure, 0);
    std::size_t i = 0;
    while (lines[i].rfind("split", 0) == 0) {
        std::istringstream ls(lines[i]);
        std::string tag;
        int f;
        double t;
        ls >> tag >> f >> t;
        const double v = f == 0 ? mean : sd;
        i = v < t ? i + 1 : i + 1 + size[i + 1];
    }
    return parse_kind(lines[i].substr(5));
}

std::string text_of(const DecisionTreeModel& m) {
    std::ostringstream out;
    m.write(out);
    return out.str();
}

} // namespace

TEST(Tree, SingleClassIsOneLeaf) {
    std::vector<LabeledStats> labels;
    for (int i = 0; i < 20; ++i) labels.push_back({double(i), double(i % 3), K::Gamma});
    for (auto hp : {Hyperparams{1, 2}, Hyperparams{5, 32}, Hyperparams{10, 256}}) {
        const auto m = train(labels, hp);
        ASSERT_EQ(m.nodes().size(), 1u);
        EXPECT_EQ(m.predict(-1e9, 1e9), K::Gamma);
        EXPECT_EQ(m.predict(3, 0), K::Gamma);
        EXPECT_EQ(model_error(m, labels), 0.0);
    }
}

TEST(Tree, PerfectSigmaSplitMatchesExhaustiveOracle) {
    oracle::TestRng rng(3);
    std::vector<LabeledStats> labels;
    for (int i = 0; i < 50; ++i) {
        // Means overlap completely; sd separates the classes.
        labels.push_back({rng.uniform(0, 10), rng.uniform(0.5, 1.0), K::Normal});
        labels.push_back({rng.uniform(0, 10), rng.uniform(2.0, 3.0), K::Uniform});
    }
    const Hyperparams hp{1, 16};
    const auto m = train(labels, hp);
    ASSERT_EQ(m.nodes().size(), 3u);
    const auto& root = m.nodes()[0];
    EXPECT_FALSE(root.leaf);
    EXPECT_EQ(root.feature, TreeFeature::Std);
    double low_max = 0, high_min = 1e9;
    for (const auto& l : labels)
        (l.kind == K::Normal ? low_max : high_min) =
            l.kind == K::Normal ? std::max(low_max, l.std) : std::min(high_min, l.std);
    EXPECT_GT(root.threshold, low_max);
    EXPECT_LE(root.threshold, high_min);
    EXPECT_EQ(model_error(m, labels), 0.0);

    // Exhaustive oracle: the best one-split training error over every
    // candidate threshold of both features is 0, and no candidate on the
    // mean feature achieves it.
    for (int f = 0; f < 2; ++f) {
        auto feature = f == 0 ? TreeFeature::Mean : TreeFeature::Std;
        double best = 1.0;
        for (double t : detail::quantile_thresholds(labels, feature, hp.max_bins)) {
            int wrong_a = 0, wrong_b = 0;
            for (const auto& l : labels) {
                const bool left = (f == 0 ? l.mean : l.std) < t;
                wrong_a += (left ? K::Normal : K::Uniform) != l.kind;
                wrong_b += (left ? K::Uniform : K::Normal) != l.kind;
            }
            best = std::min(best, std::min(wrong_a, wrong_b) / double(labels.size()));
        }
        if (f == 0) EXPECT_GT(best, 0.0);
        else EXPECT_EQ(best, 0.0);
    }
}

TEST(Tree, QuantileThresholds) {
    std::vector<LabeledStats> labels;
    for (int i = 0; i < 8; ++i) labels.push_back({double(i), 0.0, K::Normal});
    EXPECT_EQ(detail::quantile_thresholds(labels, TreeFeature::Mean, 4), (std::vector<double>{2, 4, 6}));
    EXPECT_TRUE(detail::quantile_thresholds(labels, TreeFeature::Std, 4).empty());
}

TEST(Tree, DeterministicRetrain) {
    const auto labels = blobs(100, 0.8, 1);
    EXPECT_EQ(train(labels, {4, 16}), train(labels, {4, 16}));
    EXPECT_EQ(text_of(train(labels, {4, 16})), text_of(train(labels, {4, 16})));
}

TEST(Tree, DepthBoundAndSingleEntryEdges) {
    const auto labels = blobs(200, 2.0, 2);
    for (std::uint32_t d = 1; d <= 8; ++d) {
        const auto m = train(labels, {d, 32});
        EXPECT_LE(m.depth(), d);
        std::vector<int> entries(m.nodes().size(), 0);
        for (const auto& n : m.nodes())
            if (!n.leaf) {
                ++entries[static_cast<std::size_t>(n.left)];
                ++entries[static_cast<std::size_t>(n.right)];
            }
        EXPECT_EQ(entries[0], 0);
        for (std::size_t i = 1; i < entries.size(); ++i) EXPECT_EQ(entries[i], 1);
    }
}

TEST(Tree, ThresholdGoesRight) {
    const DecisionTreeModel m({{false, TreeFeature::Mean, 1.5, K::Normal, 1, 2},
                               {true, TreeFeature::Mean, 0, K::Normal, -1, -1},
                               {true, TreeFeature::Mean, 0, K::Uniform, -1, -1}},
                              {1, 2});
    EXPECT_EQ(m.predict(1.5, 0), K::Uniform);
    EXPECT_EQ(m.predict(std::nextafter(1.5, 0.0), 0), K::Normal);
}

TEST(Tree, PredictionsMatchPathTracingOracle) {
    const auto m = train(blobs(300, 1.5, 4), {6, 32});
    const auto text = text_of(m);
    oracle::TestRng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double mean = rng.uniform(-5, 25), sd = rng.uniform(0, 8);
        EXPECT_EQ(m.predict(mean, sd), trace_text(text, mean, sd));
    }
}

TEST(Tree, PiecewiseConstantOnLeafCells) {
    const auto m = train(blobs(300, 1.5, 6), {5, 16});
    // Collect thresholds per feature; points in the same grid cell share a leaf.
    std::vector<double> tm{-1e300}, ts{-1e300};
    for (const auto& n : m.nodes())
        if (!n.leaf) (n.feature == TreeFeature::Mean ? tm : ts).push_back(n.threshold);
    std::sort(tm.begin(), tm.end());
    std::sort(ts.begin(), ts.end());
    oracle::TestRng rng(7);
    for (int i = 0; i < 500; ++i) {
        const double a = rng.uniform(-5, 25), b = rng.uniform(0, 8);
        const auto ia = std::upper_bound(tm.begin(), tm.end(), a) - tm.begin();
        const auto ib = std::upper_bound(ts.begin(), ts.end(), b) - ts.begin();
        const double lo_a = tm[ia - 1], hi_a = ia < long(tm.size()) ? tm[ia] : 1e300;
        const double lo_b = ts[ib - 1], hi_b = ib < long(ts.size()) ? ts[ib] : 1e300;
        const double a2 = std::max(lo_a, std::min(hi_a, a + rng.uniform(-1, 1)));
        const double b2 = std::max(lo_b, std::min(hi_b, b + rng.uniform(-1, 1)));
        if (a2 >= hi_a || b2 >= hi_b) continue;
        EXPECT_EQ(m.predict(a, b), m.predict(a2, b2));
    }
}

TEST(Tree, TrainingErrorNonincreasingInDepth) {
    const auto labels = blobs(250, 2.5, 8);
    double prev = 1.0;
    for (std::uint32_t d = 1; d <= 10; ++d) {
        const double e = model_error(train(labels, {d, 32}), labels);
        EXPECT_LE(e, prev) << d;
        prev = e;
    }
}

TEST(Tree, ModelErrorExamples) {
    std::vector<LabeledStats> set{{0, 1, K::Normal}, {0, 1, K::Normal}, {0, 1, K::Normal}, {0, 1, K::Uniform}};
    const DecisionTreeModel leaf({{true, TreeFeature::Mean, 0, K::Normal, -1, -1}}, {1, 2});
    EXPECT_DOUBLE_EQ(model_error(leaf, set), 0.25);
    set.pop_back();
    EXPECT_EQ(model_error(leaf, set), 0.0);
    EXPECT_THROW((void)model_error(leaf, std::vector<LabeledStats>{}), ValidationError);
    EXPECT_THROW((void)DecisionTreeModel{}.predict(0, 0), ValidationError);
}

TEST(Tree, TieGoesToEarlierKind) {
    const std::vector<LabeledStats> labels{{1, 1, K::Uniform}, {1, 1, K::Normal}};
    EXPECT_EQ(train(labels, {3, 4}).predict(1, 1), K::Normal);
}

TEST(Tree, InvalidHyperparams) {
    const auto labels = blobs(5, 1, 1);
    EXPECT_THROW((void)train(labels, {0, 4}), ValidationError);
    EXPECT_THROW((void)train(labels, {3, 1}), ValidationError);
    EXPECT_THROW((void)train(std::vector<LabeledStats>{}, {3, 4}), ValidationError);
}

TEST(Tree, SerializationRoundTrip) {
    TempDir dir;
    const auto m = train(blobs(100, 1.0, 9), {4, 8});
    m.save(dir / "m.tree");
    const auto back = DecisionTreeModel::load(dir / "m.tree");
    EXPECT_EQ(back.hyperparams(), m.hyperparams());
    ASSERT_EQ(back.nodes().size(), m.nodes().size());
    for (std::size_t i = 0; i < m.nodes().size(); ++i) {
        const auto& a = back.nodes()[i];
        const auto& b = m.nodes()[i];
        EXPECT_EQ(a.leaf, b.leaf) << i;
        if (a.leaf) {
            EXPECT_EQ(a.kind, b.kind) << i;
        } else {
            EXPECT_EQ(a.feature, b.feature) << i;
            EXPECT_EQ(a.threshold, b.threshold) << i;
            EXPECT_EQ(a.left, b.left) << i;
            EXPECT_EQ(a.right, b.right) << i;
        }
    }
    std::istringstream bare("split 1 2.5\nleaf Normal\nsplit 0 3\nleaf Exponential\nleaf Uniform\n");
    const auto r = DecisionTreeModel::read(bare);
    EXPECT_EQ(r.predict(0, 1), K::Normal);
    EXPECT_EQ(r.predict(2, 3), K::Exponential);
    EXPECT_EQ(r.predict(4, 3), K::Uniform);
    EXPECT_EQ(r.depth(), 2u);
    std::istringstream truncated("split 1 2.5\nleaf Normal\n");
    EXPECT_THROW((void)DecisionTreeModel::read(truncated), ValidationError);
    EXPECT_THROW((void)DecisionTreeModel::load(dir / "missing.tree"), IoError);
}

TEST(Tune, SeparableAtDepthOneReturnsMinimalDepth) {
    std::vector<LabeledStats> labels;
    for (int i = 0; i < 100; ++i) labels.push_back({double(i), i < 50 ? 1.0 : 5.0, i < 50 ? K::Normal : K::Uniform});
    const std::vector<std::uint32_t> depths{1, 2, 4, 8}, bins{4, 16, 64};
    const auto r = tune(labels, depths, bins, 0.7, 3);
    EXPECT_EQ(r.best, (Hyperparams{1, 4}));
    EXPECT_EQ(r.validation_error, 0.0);
}

TEST(Tune, SingleCell) {
    const auto labels = blobs(20, 1, 2);
    const std::vector<std::uint32_t> d{3}, b{8};
    EXPECT_EQ(tune(labels, d, b, 0.5, 1).best, (Hyperparams{3, 8}));
}

TEST(Tune, WithinToleranceOfGridOracle) {
    const auto labels = blobs(400, 2.0, 11);
    const std::vector<std::uint32_t> depths{1, 2, 3, 4, 6, 8}, bins{4, 8, 16, 32};
    const auto r = tune(labels, depths, bins, 0.7, 17);
    // Oracle: recompute every cell on the same split.
    const auto parts = split_labels(labels, 0.7, 17);
    double minimum = 1.0;
    for (auto d : depths)
        for (auto b : bins) minimum = std::min(minimum, model_error(train(parts.first, {d, b}), parts.second));
    EXPECT_LE(r.validation_error, minimum + kTunePlateauTolerance);
    EXPECT_EQ(r.validation_error, model_error(train(parts.first, r.best), parts.second));
    for (const auto& c : r.grid)
        if (c.validation_error <= minimum + kTunePlateauTolerance)
            EXPECT_FALSE(c.hp.depth < r.best.depth || (c.hp.depth == r.best.depth && c.hp.max_bins < r.best.max_bins));
}

TEST(Tune, Errors) {
    const auto labels = blobs(1, 1, 1);
    const std::vector<std::uint32_t> d{1}, none;
    EXPECT_THROW((void)tune(labels, none, d, 0.5, 1), ValidationError);
    EXPECT_THROW((void)tune(labels, d, d, 1.0, 1), ValidationError);
    EXPECT_THROW((void)tune(std::vector<LabeledStats>(1, labels[0]), d, std::vector<std::uint32_t>{2}, 0.5, 1),
                 ValidationError);
}

TEST(Labels, FileRoundTrip) {
    TempDir dir;
    const CubeGeometry g{4, 2, 3};
    std::vector<LabeledStats> labels;
    for (std::uint64_t i = 0; i < g.total_points(); ++i)
        labels.push_back({0.1 * i, 1.0 / (i + 1), kAllCandidateKinds[i % 10], PointId{i}, decode(PointId{i}, g).z});
    write_labels(dir / "l.csv", labels, g);
    const auto back = read_labels(dir / "l.csv");
    ASSERT_EQ(back.size(), labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        EXPECT_EQ(back[i].mean, labels[i].mean);
        EXPECT_EQ(back[i].std, labels[i].std);
        EXPECT_EQ(back[i].kind, labels[i].kind);
        EXPECT_EQ(back[i].id, labels[i].id);
        EXPECT_EQ(back[i].slice, labels[i].slice);
    }
    try {
        (void)read_labels(dir / "nope.csv");
        FAIL();
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("nope.csv"), std::string::npos);
    }
}
