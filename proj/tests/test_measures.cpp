#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lesioneval/measures.hpp"
#include "lesioneval/volume.hpp"
#include "oracles.hpp"

using namespace lesioneval;

namespace {

const Spacing iso2{2.0, 2.0, 2.0};

} // namespace

TEST_CASE("lesion measures closed forms") {
    SECTION("single voxel") {
        const Dims d{4, 4, 4};
        std::vector<std::uint8_t> m(d.size(), 0);
        m[linear_index(d, 1, 2, 3)] = 1;
        std::vector<float> s(d.size(), 0.5f);
        s[linear_index(d, 1, 2, 3)] = 7.3f;
        const BinaryMask mask(d, iso2, std::move(m));
        const ScalarVolume suv(d, iso2, Unit::SUV, std::move(s));
        const auto lm = lesion_measures(suv, mask, connected_components(mask));
        CHECK_FALSE(lm.empty);
        CHECK_THAT(lm.suv_mean, Catch::Matchers::WithinRel(7.3, 1e-6));
        CHECK_THAT(lm.suv_max, Catch::Matchers::WithinRel(7.3, 1e-6));
        CHECK(lm.n_lesions == 1);
        CHECK_THAT(lm.tmtv_ml, Catch::Matchers::WithinAbs(0.008, 1e-12));
        CHECK_THAT(lm.tlg_ml, Catch::Matchers::WithinRel(0.0584, 1e-6));
        CHECK(lm.dmax_cm == 0.0);
    }

    SECTION("3-4-5 triangle at 10 mm spacing") {
        const Dims d{5, 5, 2};
        const Spacing s10{10.0, 10.0, 10.0};
        std::vector<std::uint8_t> m(d.size(), 0);
        m[linear_index(d, 0, 0, 0)] = 1;
        m[linear_index(d, 3, 4, 0)] = 1;
        const BinaryMask mask(d, s10, std::move(m));
        const ScalarVolume suv(d, s10, Unit::SUV, std::vector<float>(d.size(), 2.0f));
        const auto lm = lesion_measures(suv, mask, connected_components(mask));
        CHECK_THAT(lm.dmax_cm, Catch::Matchers::WithinAbs(5.0, 1e-12));
        CHECK(lm.n_lesions == 2);
    }

    SECTION("empty mask yields the flagged zero record") {
        const Dims d{3, 3, 3};
        const BinaryMask mask(d, iso2, std::vector<std::uint8_t>(d.size(), 0));
        const ScalarVolume suv(d, iso2, Unit::SUV, std::vector<float>(d.size(), 1.0f));
        const auto lm = lesion_measures(suv, mask, connected_components(mask));
        CHECK(lm.empty);
        CHECK(lm.n_lesions == 0);
        CHECK(lm.tmtv_ml == 0.0);
        CHECK(lm.tlg_ml == 0.0);
        CHECK(lm.dmax_cm == 0.0);
    }
}

TEST_CASE("lesion measures match the brute-force oracle on random phantoms") {
    const Dims d{6, 6, 6};
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        const auto mask = oracles::random_mask(d, iso2, 0.3, seed);
        const auto suv = oracles::random_suv(d, iso2, seed + 52);
        const auto lm = lesion_measures(suv, mask, connected_components(mask));
        const auto expected = oracles::measures(suv, mask, 26);
        if (mask.foreground_count() == 0) {
            CHECK(lm.empty);
            continue;
        }
        CHECK_THAT(lm.suv_mean, Catch::Matchers::WithinRel(expected.suv_mean, 1e-9));
        CHECK_THAT(lm.suv_max, Catch::Matchers::WithinRel(expected.suv_max, 1e-9));
        CHECK(lm.n_lesions == expected.n_lesions);
        CHECK_THAT(lm.tmtv_ml, Catch::Matchers::WithinRel(expected.tmtv_ml, 1e-9));
        CHECK_THAT(lm.tlg_ml, Catch::Matchers::WithinRel(expected.tlg_ml, 1e-9));
        CHECK_THAT(lm.dmax_cm, Catch::Matchers::WithinRel(expected.dmax_cm, 1e-9) ||
                                   Catch::Matchers::WithinAbs(expected.dmax_cm, 1e-12));

        // TLG = TMTV * SUVmean up to float rounding
        CHECK_THAT(lm.tlg_ml, Catch::Matchers::WithinRel(lm.tmtv_ml * lm.suv_mean, 1e-9));
    }
}

TEST_CASE("hull-reduced dmax equals the all-pairs scan") {
    SECTION("forced reduction path on small random masks") {
        const Dims d{10, 10, 10};
        for (std::uint64_t seed = 0; seed < 60; ++seed) {
            const auto mask = oracles::random_mask(d, Spacing{1.7, 2.0, 3.1}, 0.25, seed);
            if (mask.foreground_count() < 2) continue;
            const double direct = max_pairwise_distance_mm(mask, 1u << 30);
            const double reduced = max_pairwise_distance_mm(mask, 0);
            CHECK_THAT(reduced, Catch::Matchers::WithinRel(direct, 1e-12));
        }
    }

    SECTION("degenerate shapes: line, plane, single point") {
        const Dims d{32, 32, 32};
        std::vector<std::uint8_t> line(d.size(), 0);
        for (int x = 3; x <= 28; ++x) line[linear_index(d, x, 5, 5)] = 1;
        const BinaryMask lm(d, iso2, std::move(line));
        CHECK_THAT(max_pairwise_distance_mm(lm, 0),
                   Catch::Matchers::WithinRel(25.0 * 2.0, 1e-12));

        std::vector<std::uint8_t> plane(d.size(), 0);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) plane[linear_index(d, x, y, 7)] = 1;
        const BinaryMask pm(d, iso2, std::move(plane));
        const double diag = std::sqrt(2.0) * 31.0 * 2.0;
        CHECK_THAT(max_pairwise_distance_mm(pm, 0), Catch::Matchers::WithinRel(diag, 1e-12));
    }

    SECTION("large solid ball goes through the candidate reduction") {
        const Dims d{40, 40, 40};
        std::vector<std::uint8_t> m(d.size(), 0);
        const double r = 35.0; // mm
        std::size_t count = 0;
        for (int z = 0; z < 40; ++z)
            for (int y = 0; y < 40; ++y)
                for (int x = 0; x < 40; ++x) {
                    const double dx = (x + 0.5) * 2.0 - 40.0;
                    const double dy = (y + 0.5) * 2.0 - 40.0;
                    const double dz = (z + 0.5) * 2.0 - 40.0;
                    if (dx * dx + dy * dy + dz * dz <= r * r) {
                        m[linear_index(d, x, y, z)] = 1;
                        ++count;
                    }
                }
        REQUIRE(count > 20000);
        const BinaryMask ball(d, iso2, std::move(m));
        const double fast = max_pairwise_distance_mm(ball, 1000);
        const double direct = max_pairwise_distance_mm(ball, 1u << 30);
        CHECK_THAT(fast, Catch::Matchers::WithinRel(direct, 1e-12));
    }

    SECTION("quickhull branch agrees with all-pairs on forced small inputs") {
        // tiny hull threshold forces the quickhull stage where the direct
        // scan is still affordable
        const Dims d{14, 12, 10};
        for (std::uint64_t seed = 200; seed < 240; ++seed) {
            const auto mask = oracles::random_mask(d, Spacing{1.9, 2.3, 3.7}, 0.5, seed);
            if (mask.foreground_count() < 5) continue;
            const double direct = max_pairwise_distance_mm(mask, 1u << 30);
            const double hulled = max_pairwise_distance_mm(mask, 0, 4);
            CHECK_THAT(hulled, Catch::Matchers::WithinRel(direct, 1e-12));
        }
    }

    SECTION("quickhull on a sphere with exact pole voxels") {
        // poles land on voxel centers, so the diameter is exactly 120 mm
        const Dims d{128, 128, 128};
        const Spacing s1{1.0, 1.0, 1.0};
        std::vector<std::uint8_t> m(d.size(), 0);
        const double cx = 63.5, r = 60.0;
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x) {
                    const double dx = (x + 0.5) - cx;
                    const double dy = (y + 0.5) - cx;
                    const double dz = (z + 0.5) - cx;
                    if (dx * dx + dy * dy + dz * dz <= r * r)
                        m[linear_index(d, x, y, z)] = 1;
                }
        const BinaryMask ball(d, s1, std::move(m));
        std::vector<std::array<int, 3>> vox;
        for (std::size_t i = 0; i < ball.size(); ++i)
            if (ball[i]) vox.push_back(unravel_index(d, i));
        REQUIRE(detail::extremal_candidates(vox, s1).size() > 4096); // hull stage engaged
        CHECK_THAT(max_pairwise_distance_mm(ball), Catch::Matchers::WithinAbs(120.0, 1e-9));
    }
}

TEST_CASE("tmtv scales with voxel volume under resampling") {
    // same physical ball sampled at 2 mm and 1 mm
    const auto fill_ball = [](const Dims& d, const Spacing& s) {
        std::vector<std::uint8_t> m(d.size(), 0);
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x) {
                    const double dx = (x + 0.5) * s.dx - 20.0;
                    const double dy = (y + 0.5) * s.dy - 20.0;
                    const double dz = (z + 0.5) * s.dz - 20.0;
                    if (dx * dx + dy * dy + dz * dz <= 12.0 * 12.0)
                        m[linear_index(d, x, y, z)] = 1;
                }
        return m;
    };
    const Dims coarse{20, 20, 20};
    const Dims fine{40, 40, 40};
    const BinaryMask a(coarse, iso2, fill_ball(coarse, iso2));
    const BinaryMask b(fine, Spacing{1, 1, 1}, fill_ball(fine, Spacing{1, 1, 1}));
    const double va = a.spacing().voxel_volume_ml() * static_cast<double>(a.foreground_count());
    const double vb = b.spacing().voxel_volume_ml() * static_cast<double>(b.foreground_count());
    // discretization error is bounded by a surface layer
    CHECK_THAT(va, Catch::Matchers::WithinRel(vb, 0.15));
}

TEST_CASE("suv_max equals the maximum over per-lesion maxima") {
    const Dims d{6, 6, 6};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto mask = oracles::random_mask(d, iso2, 0.3, seed + 7);
        if (mask.foreground_count() == 0) continue;
        const auto suv = oracles::random_suv(d, iso2, seed);
        const auto cc = connected_components(mask);
        const auto lm = lesion_measures(suv, mask, cc);
        double best = -1e300;
        for (const auto& comp : cc.voxels)
            for (const std::size_t idx : comp) best = std::max(best, double(suv[idx]));
        CHECK(lm.suv_max == best);
    }
}

TEST_CASE("mape") {
    SECTION("exact cases") {
        CHECK(mape({10, 20, 30}, {10, 20, 30}).value_pct == 0.0);
        CHECK_THAT(mape({100}, {150}).value_pct, Catch::Matchers::WithinAbs(50.0, 1e-12));
        CHECK_THAT(mape({10, 20}, {11, 16}).value_pct, Catch::Matchers::WithinAbs(15.0, 1e-12));
    }

    SECTION("zero originals are excluded and reported") {
        const auto r = mape({0.0, 10.0}, {5.0, 20.0});
        CHECK(r.n_excluded == 1);
        CHECK(r.n_used == 1);
        CHECK_THAT(r.value_pct, Catch::Matchers::WithinAbs(100.0, 1e-12));
        CHECK_THROWS_AS(mape({0.0, 0.0}, {1.0, 2.0}), data_error);
    }

    SECTION("invariant under common positive rescaling") {
        const std::vector<double> orig{3, 9, 27};
        const std::vector<double> pred{4, 8, 30};
        const auto base = mape(orig, pred).value_pct;
        std::vector<double> so, sp;
        for (std::size_t i = 0; i < orig.size(); ++i) {
            so.push_back(orig[i] * 17.5);
            sp.push_back(pred[i] * 17.5);
        }
        CHECK_THAT(mape(so, sp).value_pct, Catch::Matchers::WithinRel(base, 1e-12));
    }

    SECTION("length mismatch is rejected") {
        CHECK_THROWS_AS(mape({1.0}, {1.0, 2.0}), parameter_error);
    }
}
