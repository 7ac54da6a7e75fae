#include <gtest/gtest.h>

#include <map>
#include <set>

#include "pdfcube/datagen.hpp"
#include "pdfcube/dtree.hpp"
#include "temp_dir.hpp"

using namespace pdfcube;
using K = DistributionKind;
using testutil::TempDir;

namespace {

GenConfig small_config(CubeGeometry g, std::uint32_t layers, std::uint32_t runs, std::uint64_t seed) {
    GenConfig c;
    c.geometry = g;
    c.layers = default_layers(layers);
    c.run_count = runs;
    c.seed = seed;
    return c;
}

} // namespace

TEST(Datagen, LayersCycleFourBasicKinds) {
    const auto layers = default_layers(16);
    ASSERT_EQ(layers.size(), 16u);
    const K cycle[] = {K::Normal, K::LogNormal, K::Exponential, K::Uniform};
    for (std::uint32_t i = 0; i < 16; ++i) {
        EXPECT_EQ(layers[i].kind, cycle[i % 4]);
        EXPECT_EQ(layers[i].layer_index, i);
        EXPECT_GT(layers[i].base_scale, 0.0);
    }
}

TEST(Datagen, BandsAreEqualWithRemainderInLastBand) {
    GroundTruth gt(small_config({2, 2, 35}, 16, 2, 1));
    // 35 / 16 = 2 slices per band; band 15 takes slices 30..34.
    for (std::uint32_t z = 0; z < 35; ++z)
        EXPECT_EQ(gt.layer_of_slice(z).layer_index, std::min<std::uint32_t>(z / 2, 15)) << z;
}

TEST(Datagen, EqualZSharesKind) {
    GroundTruth gt(small_config({6, 5, 8}, 4, 2, 1));
    const auto& g = gt.geometry();
    for (std::uint64_t i = 0; i < g.total_points(); ++i) {
        const auto c = decode(PointId{i}, g);
        EXPECT_EQ(gt.kind_of(PointId{i}), gt.kind_of(point_id(0, 0, c.z, g)));
    }
}

TEST(Datagen, DuplicateFractionOnOneLine) {
    auto cfg = small_config({100, 1, 1}, 1, 5, 2);
    cfg.duplicate_fraction = 0.5;
    GroundTruth gt(cfg);
    int dups = 0;
    for (std::uint64_t i = 0; i < 100; ++i) {
        if (!gt.is_duplicate(PointId{i})) continue;
        ++dups;
        EXPECT_EQ(gt.observations(PointId{i}), gt.observations(PointId{i - 1}));
    }
    EXPECT_EQ(dups, 50);
}

TEST(Datagen, DuplicatesRoundDownPerSlice) {
    auto cfg = small_config({7, 3, 2}, 2, 3, 2);
    cfg.duplicate_fraction = 0.3;
    GroundTruth gt(cfg);
    for (std::uint32_t z = 0; z < 2; ++z) {
        int dups = 0;
        for (std::uint32_t y = 0; y < 3; ++y)
            for (std::uint32_t x = 0; x < 7; ++x) dups += gt.is_duplicate(point_id(x, y, z, cfg.geometry));
        EXPECT_EQ(dups, 6);  // floor(0.3 * 21)
    }
}

TEST(Datagen, InvalidConfigs) {
    auto cfg = small_config({2, 2, 2}, 1, 1, 0);
    EXPECT_THROW(GroundTruth{cfg}, ValidationError);
    cfg.run_count = 2;
    cfg.layers.clear();
    EXPECT_THROW(GroundTruth{cfg}, ValidationError);
    cfg.layers = default_layers(1);
    cfg.duplicate_fraction = 1.5;
    EXPECT_THROW(GroundTruth{cfg}, ValidationError);
}

TEST(Datagen, SupportOfPositiveFamilies) {
    GroundTruth gt(small_config({8, 8, 4}, 4, 50, 9));
    const auto& g = gt.geometry();
    for (std::uint64_t i = 0; i < g.total_points(); ++i) {
        const auto k = gt.kind_of(PointId{i});
        if (k != K::LogNormal && k != K::Exponential) continue;
        for (double v : gt.observations(PointId{i})) EXPECT_GT(v, 0.0);
    }
}

TEST(Datagen, LocationFollowsGradient) {
    auto cfg = small_config({10, 10, 1}, 1, 2, 0);
    cfg.spatial_gradient = 0.25;
    cfg.duplicate_fraction = 0.0;
    GroundTruth plain(cfg);
    EXPECT_DOUBLE_EQ(plain.params_of(point_id(3, 4, 0, cfg.geometry)).p1, 0.25 * 7);
    EXPECT_DOUBLE_EQ(plain.params_of(point_id(0, 0, 0, cfg.geometry)).p1, 0.0);
}

TEST(Datagen, FilesAreDeterministicAndMatchTruth) {
    TempDir a, b;
    auto cfg = small_config({9, 6, 4}, 4, 4, 77);
    const auto ga = generate(cfg, a.path(), 1);
    const auto gb = generate(cfg, b.path(), 3);
    ASSERT_EQ(ga.run_paths.size(), 4u);
    for (std::size_t r = 0; r < 4; ++r) {
        EXPECT_EQ(ga.run_paths[r].filename(), gb.run_paths[r].filename());
        EXPECT_EQ(testutil::slurp(ga.run_paths[r]), testutil::slurp(gb.run_paths[r]));
    }
    EXPECT_EQ(testutil::slurp(a / kGroundTruthFile), testutil::slurp(b / kGroundTruthFile));
    EXPECT_EQ(testutil::slurp(a / kLabelsFile), testutil::slurp(b / kLabelsFile));

    const auto ds = Dataset::open(a.path());
    EXPECT_EQ(ds.run_count(), 4u);
    for (std::uint64_t i = 0; i < cfg.geometry.total_points(); ++i)
        EXPECT_EQ(ds.read_point(PointId{i}), ga.truth.observations(PointId{i}));

    cfg.seed = 78;
    TempDir c;
    const auto gc = generate(cfg, c.path(), 1);
    EXPECT_NE(testutil::slurp(ga.run_paths[0]), testutil::slurp(gc.run_paths[0]));
}

TEST(Datagen, GroundTruthSidecar) {
    TempDir dir;
    const auto cfg = small_config({3, 2, 4}, 4, 3, 5);
    const auto gen = generate(cfg, dir.path());
    std::ifstream in(dir / kGroundTruthFile);
    std::string line;
    std::uint64_t n = 0;
    while (std::getline(in, line)) {
        const auto f = split(line, ',');
        ASSERT_EQ(f.size(), 4u) << line;
        EXPECT_EQ(parse_int<std::uint64_t>(f[0]), n);
        const auto p = gen.truth.params_of(PointId{n});
        EXPECT_EQ(parse_kind(f[1]), p.kind);
        EXPECT_EQ(parse_real(f[2]), p.p1);
        if (p.kind == K::Exponential) EXPECT_EQ(f[3], "");
        else EXPECT_EQ(parse_real(f[3]), p.p2);
        ++n;
    }
    EXPECT_EQ(n, cfg.geometry.total_points());
}

TEST(Datagen, LabelsComeFromStoredValues) {
    GroundTruth gt(small_config({20, 10, 4}, 4, 30, 11));
    const auto labels = ground_truth_labels(gt, 2, 2);
    ASSERT_EQ(labels.size(), 200u);
    for (const auto& l : labels) {
        EXPECT_EQ(l.kind, K::Exponential);
        EXPECT_EQ(l.slice, 2u);
        const auto s = point_stats(gt.observations(l.id));
        EXPECT_EQ(l.mean, s.mean);
        EXPECT_EQ(l.std, s.std);
    }
    EXPECT_THROW((void)ground_truth_labels(gt, 4), BoundsError);
}

TEST(Datagen, LabelCountForFullSizeSlice) {
    GroundTruth gt(small_config({501, 251, 1}, 1, 2, 11));
    EXPECT_EQ(ground_truth_labels(gt, 0, 4).size(), 125751u);
}

TEST(Datagen, FamiliesAreSeparable) {
    auto cfg = small_config({12, 10, 4}, 4, 1000, 123);
    cfg.duplicate_fraction = 0.0;
    GroundTruth gt(cfg);
    const auto four = KindSet::four_types();
    std::map<K, std::pair<int, int>> tally;
    for (std::uint64_t i = 0; i < cfg.geometry.total_points(); ++i) {
        const auto values = gt.observations(PointId{i});
        const auto truth = gt.kind_of(PointId{i});
        const auto table = fit_all(values, four);
        ASSERT_TRUE(table.at(truth));
        int beaten = 0;
        for (auto k : four) {
            if (k == truth) continue;
            if (!table.at(k) || table.at(truth)->error < table.at(k)->error) ++beaten;
        }
        auto& [good, total] = tally[truth];
        good += beaten >= 2;
        ++total;
    }
    for (const auto& [k, t] : tally) EXPECT_GE(t.first, 0.9 * t.second) << kind_name(k);
}
