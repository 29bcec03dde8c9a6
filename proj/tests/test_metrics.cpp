#include <catch2/catch_amalgamated.hpp>

#include "lesioneval/metrics.hpp"
#include "lesioneval/volume.hpp"
#include "oracles.hpp"

using namespace lesioneval;

namespace {

const Spacing iso2{2.0, 2.0, 2.0};

BinaryMask box_mask(const Dims& d, const Spacing& s, const VoxelBox& b) {
    std::vector<std::uint8_t> data(d.size(), 0);
    for (int z = b.lo[2]; z <= b.hi[2]; ++z)
        for (int y = b.lo[1]; y <= b.hi[1]; ++y)
            for (int x = b.lo[0]; x <= b.hi[0]; ++x) data[linear_index(d, x, y, z)] = 1;
    return BinaryMask(d, s, std::move(data));
}

} // namespace

TEST_CASE("dsc basics") {
    const Dims d{10, 10, 10};
    const auto a = box_mask(d, iso2, {{0, 0, 0}, {4, 4, 3}}); // 100 voxels
    const auto b = box_mask(d, iso2, {{5, 5, 5}, {9, 9, 8}}); // disjoint 100 voxels

    CHECK(dsc(a, a) == 1.0);
    CHECK(dsc(a, b) == 0.0);

    SECTION("|G|=100, |P|=100, overlap 50") {
        // shift along x by half the box width: overlap = 50 voxels
        const auto shifted = box_mask(d, iso2, {{2, 0, 0}, {6, 4, 3}});
        // intersection x in [2,4]: 3 of 5 columns -> 60 voxels; build exact 50 instead
        const auto half = box_mask(d, iso2, {{0, 0, 2}, {4, 4, 5}}); // z overlap [2,3] = 50
        CHECK(dsc(a, half) == 0.5);
        CHECK(dsc(a, shifted) == 0.6);
    }

    SECTION("empty-mask conventions") {
        const BinaryMask empty(d, iso2, std::vector<std::uint8_t>(d.size(), 0));
        CHECK(dsc(empty, empty) == 1.0);
        CHECK(dsc(a, empty) == 0.0);
        CHECK(dsc(empty, a) == 0.0);
    }

    SECTION("symmetry and range on random masks") {
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            const auto g = oracles::random_mask(Dims{6, 6, 6}, iso2, 0.4, seed);
            const auto p = oracles::random_mask(Dims{6, 6, 6}, iso2, 0.4, seed + 1000);
            const double v = dsc(g, p);
            CHECK(v == dsc(p, g));
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            CHECK_THAT(v, Catch::Matchers::WithinAbs(oracles::dsc(g, p), 1e-12));
        }
    }

    SECTION("geometry mismatch is rejected") {
        const auto other = box_mask(Dims{9, 10, 10}, iso2, {{0, 0, 0}, {1, 1, 1}});
        CHECK_THROWS_AS(dsc(a, other), geometry_error);
        const auto spaced = box_mask(d, Spacing{1, 2, 2}, {{0, 0, 0}, {1, 1, 1}});
        CHECK_THROWS_AS(dsc(a, spaced), geometry_error);
    }
}

TEST_CASE("soft dice loss") {
    const Dims d{10, 10, 1};
    const auto gt = box_mask(d, iso2, {{0, 0, 0}, {9, 9, 0}}); // 100 voxels

    SECTION("perfect binary prediction gives near-zero loss") {
        const auto probs = to_scalar(gt);
        CHECK(std::abs(soft_dice_loss(probs, gt)) < 1e-6);
    }

    SECTION("all-zero prediction against 100 foreground voxels") {
        ScalarVolume zeros(d, iso2, Unit::Normalized, std::vector<float>(d.size(), 0.0f));
        const double expected = 1.0 - 1e-5 / (100.0 + 1e-5);
        CHECK_THAT(soft_dice_loss(zeros, gt), Catch::Matchers::WithinAbs(expected, 1e-12));
    }

    SECTION("complement prediction gives near-one loss") {
        const Dims d2{6, 6, 6};
        const auto g = oracles::random_mask(d2, iso2, 0.5, 4);
        std::vector<float> inv(d2.size());
        for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = g[i] ? 0.0f : 1.0f;
        ScalarVolume probs(d2, iso2, Unit::Normalized, std::move(inv));
        CHECK_THAT(soft_dice_loss(probs, g), Catch::Matchers::WithinAbs(1.0, 1e-6));
    }

    SECTION("probabilities outside [0,1] are rejected") {
        std::vector<float> bad(d.size(), 0.5f);
        bad[3] = 1.5f;
        ScalarVolume probs(d, iso2, Unit::Normalized, std::move(bad));
        CHECK_THROWS_AS(soft_dice_loss(probs, gt), parameter_error);
    }

    SECTION("loss complements dsc for binary predictions") {
        for (std::uint64_t seed = 0; seed < 25; ++seed) {
            const Dims d2{6, 6, 6};
            const auto g = oracles::random_mask(d2, iso2, 0.45, seed);
            const auto p = oracles::random_mask(d2, iso2, 0.45, seed + 500);
            if (g.foreground_count() + p.foreground_count() == 0) continue;
            const double loss = soft_dice_loss(to_scalar(p), g);
            CHECK_THAT(loss + dsc(g, p), Catch::Matchers::WithinAbs(1.0, 1e-5));
        }
    }
}

TEST_CASE("false positive and false negative volumes") {
    const Dims d{12, 12, 12};

    SECTION("contained prediction has zero FPV; covering prediction zero FNV") {
        const auto gt = box_mask(d, iso2, {{2, 2, 2}, {7, 7, 7}});
        const auto inner = box_mask(d, iso2, {{3, 3, 3}, {6, 6, 6}});
        CHECK(fpv(gt, connected_components(inner)) == 0.0);
        CHECK(fnv(connected_components(gt), box_mask(d, iso2, {{1, 1, 1}, {8, 8, 8}})) == 0.0);
    }

    SECTION("one disjoint predicted component of 10 voxels at 2 mm iso") {
        const BinaryMask gt(d, iso2, std::vector<std::uint8_t>(d.size(), 0));
        const auto pred = box_mask(d, iso2, {{0, 0, 0}, {4, 1, 0}}); // 10 voxels
        CHECK_THAT(fpv(gt, connected_components(pred)), Catch::Matchers::WithinAbs(0.08, 1e-12));
    }

    SECTION("mixed predicted components count only the disjoint one") {
        const auto gt = box_mask(d, iso2, {{0, 0, 0}, {2, 2, 2}});
        std::vector<std::uint8_t> p(d.size(), 0);
        p[linear_index(d, 2, 2, 2)] = 1; // overlaps gt by one voxel
        for (int z = 6; z <= 10; ++z)
            for (int y = 6; y <= 10; ++y) p[linear_index(d, 8, y, z)] = 1; // 25 voxels disjoint
        const BinaryMask pred(d, iso2, std::move(p));
        CHECK_THAT(fpv(gt, connected_components(pred)), Catch::Matchers::WithinAbs(0.2, 1e-12));
    }

    SECTION("an entirely missed 50-voxel lesion") {
        const auto gt = box_mask(d, iso2, {{0, 0, 0}, {4, 4, 1}}); // 50 voxels
        const BinaryMask pred(d, iso2, std::vector<std::uint8_t>(d.size(), 0));
        CHECK_THAT(fnv(connected_components(gt), pred), Catch::Matchers::WithinAbs(0.4, 1e-12));
    }

    SECTION("per-lesion miss accounting") {
        // lesion A: 20 voxels touched by the prediction, lesion B: 30 voxels untouched
        std::vector<std::uint8_t> g(d.size(), 0);
        for (int y = 0; y <= 4; ++y)
            for (int x = 0; x <= 3; ++x) g[linear_index(d, x, y, 0)] = 1; // A: 20
        for (int y = 6; y <= 11; ++y)
            for (int x = 7; x <= 11; ++x) g[linear_index(d, x, y, 11)] = 1; // B: 30
        const BinaryMask gt(d, iso2, std::move(g));
        std::vector<std::uint8_t> p(d.size(), 0);
        p[linear_index(d, 0, 0, 0)] = 1; // touches A only
        const BinaryMask pred(d, iso2, std::move(p));
        CHECK_THAT(fnv(connected_components(gt), pred), Catch::Matchers::WithinAbs(0.24, 1e-12));
    }

    SECTION("random masks match the set-arithmetic oracle") {
        const Dims d2{6, 6, 6};
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            const auto g = oracles::random_mask(d2, iso2, 0.3, seed);
            const auto p = oracles::random_mask(d2, iso2, 0.3, seed + 777);
            for (const int conn : {6, 18, 26}) {
                const auto cg = connected_components(g, connectivity_from_int(conn));
                const auto cp = connected_components(p, connectivity_from_int(conn));
                CHECK_THAT(fpv(g, cp),
                           Catch::Matchers::WithinAbs(oracles::fpv_ml(g, p, conn), 1e-12));
                CHECK_THAT(fnv(cg, p),
                           Catch::Matchers::WithinAbs(oracles::fnv_ml(g, p, conn), 1e-12));
            }
        }
    }

    SECTION("perfect dsc forces zero fpv and fnv") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto g = oracles::random_mask(Dims{5, 5, 5}, iso2, 0.4, seed);
            const auto cc = connected_components(g);
            CHECK(dsc(g, g) == 1.0);
            CHECK(fpv(g, cc) == 0.0);
            CHECK(fnv(cc, g) == 0.0);
        }
    }
}
