#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "lesioneval/volume.hpp"
#include "oracles.hpp"

using namespace lesioneval;

namespace {

BinaryMask mask_from_voxels(const Dims& d, const Spacing& s,
                            const std::vector<std::array<int, 3>>& voxels) {
    std::vector<std::uint8_t> data(d.size(), 0);
    for (const auto& v : voxels) data[linear_index(d, v[0], v[1], v[2])] = 1;
    return BinaryMask(d, s, std::move(data));
}

const Spacing iso2{2.0, 2.0, 2.0};

} // namespace

TEST_CASE("connected components basics") {
    const Dims d{4, 4, 4};

    SECTION("empty mask has zero components") {
        const BinaryMask empty(d, iso2, std::vector<std::uint8_t>(d.size(), 0));
        for (const auto conn :
             {Connectivity::Faces6, Connectivity::Edges18, Connectivity::Corners26}) {
            const auto cc = connected_components(empty, conn);
            CHECK(cc.count == 0);
            CHECK(cc.voxels.empty());
        }
    }

    SECTION("face-sharing voxels form one component under any connectivity") {
        const auto m = mask_from_voxels(d, iso2, {{1, 1, 1}, {2, 1, 1}});
        for (const auto conn :
             {Connectivity::Faces6, Connectivity::Edges18, Connectivity::Corners26})
            CHECK(connected_components(m, conn).count == 1);
    }

    SECTION("corner-touching voxels split under 6 and 18, join under 26") {
        const auto m = mask_from_voxels(d, iso2, {{1, 1, 1}, {2, 2, 2}});
        CHECK(connected_components(m, Connectivity::Faces6).count == 2);
        CHECK(connected_components(m, Connectivity::Edges18).count == 2);
        CHECK(connected_components(m, Connectivity::Corners26).count == 1);
    }
}

TEST_CASE("connected components match the label-propagation oracle") {
    const Dims d{6, 5, 4};
    for (std::uint64_t seed = 0; seed < 120; ++seed) {
        const auto m = oracles::random_mask(d, iso2, 0.35, seed);
        for (const int conn : {6, 18, 26}) {
            const auto cc = connected_components(m, connectivity_from_int(conn));
            const auto expected = oracles::components(m, conn);
            REQUIRE(cc.count == static_cast<int>(expected.size()));
            std::size_t total = 0;
            for (int l = 0; l < cc.count; ++l) {
                const auto lu = static_cast<std::size_t>(l);
                const std::set<std::size_t> got(cc.voxels[lu].begin(), cc.voxels[lu].end());
                CHECK(got == expected[lu]);
                total += got.size();
            }
            CHECK(total == m.foreground_count());
            // labels ordered by ascending smallest voxel index
            for (int l = 1; l < cc.count; ++l)
                CHECK(cc.voxels[static_cast<std::size_t>(l) - 1].front() <
                      cc.voxels[static_cast<std::size_t>(l)].front());
        }
    }
}

TEST_CASE("resample identity is bit exact") {
    const Dims d{5, 4, 3};
    const auto vol = oracles::random_suv(d, Spacing{2.0, 3.0, 0.1}, 7);
    const auto out = resample(vol, vol.spacing(), ResampleMode::Trilinear);
    REQUIRE(out.dims() == d);
    CHECK(out.data() == vol.data());
    const auto nn = resample(vol, vol.spacing(), ResampleMode::Nearest);
    CHECK(nn.data() == vol.data());
}

TEST_CASE("resample of a constant volume stays constant") {
    const Dims d{6, 6, 6};
    ScalarVolume vol(d, iso2, Unit::SUV, std::vector<float>(d.size(), 3.25f));
    const auto out = resample(vol, Spacing{1.5, 2.5, 3.0}, ResampleMode::Trilinear);
    for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(out[i] == 3.25f);
}

TEST_CASE("trilinear resampling reproduces direct interpolation on a ramp") {
    // 1D ramp 0,10 along x at 4 mm, resampled to 2 mm.
    const Dims d{2, 1, 1};
    ScalarVolume vol(d, Spacing{4.0, 4.0, 4.0}, Unit::SUV, {0.0f, 10.0f});
    const auto out = resample(vol, Spacing{2.0, 4.0, 4.0}, ResampleMode::Trilinear);
    REQUIRE(out.dims().nx == 4);
    // independent interpolation at each output center
    for (int i = 0; i < 4; ++i) {
        const double center_mm = (i + 0.5) * 2.0;
        const double u = center_mm / 4.0 - 0.5; // input voxel coordinate
        const double clamped = std::clamp(u, 0.0, 1.0);
        const double expected = 0.0 * (1.0 - clamped) + 10.0 * clamped;
        CHECK_THAT(static_cast<double>(out.at(i, 0, 0)),
                   Catch::Matchers::WithinAbs(expected, 1e-6));
    }
}

TEST_CASE("trilinear resampling rejects mask-derived volumes") {
    const auto m = mask_from_voxels(Dims{3, 3, 3}, iso2, {{1, 1, 1}});
    const auto as_scalar = to_scalar(m);
    CHECK_THROWS_AS(resample(as_scalar, Spacing{1, 1, 1}, ResampleMode::Trilinear),
                    parameter_error);
    CHECK_NOTHROW(resample(as_scalar, Spacing{1, 1, 1}, ResampleMode::Nearest));
}

TEST_CASE("mask resampling") {
    const Dims d{8, 8, 8};

    SECTION("identity spacing returns the identical mask") {
        const auto m = oracles::random_mask(d, iso2, 0.4, 3);
        CHECK(resample_mask(m, iso2).data() == m.data());
    }

    SECTION("an all-foreground mask stays all-foreground at any spacing") {
        const BinaryMask full(d, iso2, std::vector<std::uint8_t>(d.size(), 1));
        for (const auto target : {Spacing{1, 1, 1}, Spacing{3, 3, 3}, Spacing{2.7, 1.1, 5.0}}) {
            const auto out = resample_mask(full, target);
            CHECK(out.foreground_count() == out.size());
        }
    }

    SECTION("round trip matches the direct nearest-neighbor oracle") {
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            const auto m = oracles::random_mask(d, iso2, 0.5, seed + 100);
            const auto coarse = resample_mask(m, Spacing{3, 3, 3});
            const auto back = resample_mask(coarse, iso2);

            // oracle: evaluate nearest-neighbor lookups directly
            const auto nn_oracle = [](const BinaryMask& src, const Dims& od,
                                      const Spacing& target) {
                std::vector<std::uint8_t> out(od.size());
                std::size_t w = 0;
                for (int z = 0; z < od.nz; ++z)
                    for (int y = 0; y < od.ny; ++y)
                        for (int x = 0; x < od.nx; ++x, ++w) {
                            const auto pick = [&](int i, double t, double s, int n) {
                                const double u = ((i + 0.5) * t) / s - 0.5;
                                return std::clamp(static_cast<int>(std::floor(u + 0.5)), 0,
                                                  n - 1);
                            };
                            out[w] = src.at(pick(x, target.dx, src.spacing().dx, src.dims().nx),
                                            pick(y, target.dy, src.spacing().dy, src.dims().ny),
                                            pick(z, target.dz, src.spacing().dz, src.dims().nz))
                                         ? 1
                                         : 0;
                        }
                return BinaryMask(od, target, std::move(out));
            };
            CHECK(coarse.data() == nn_oracle(m, coarse.dims(), Spacing{3, 3, 3}).data());
            CHECK(back.data() == nn_oracle(coarse, back.dims(), iso2).data());

            // grids cover the extent, so the round trip may add up to one
            // voxel layer per axis; the foreground change is bounded by the
            // surface layer
            CHECK(back.dims().nx >= d.nx);
            CHECK(back.dims().nx <= d.nx + 1);
            std::size_t surface = 0;
            for (int z = 0; z < d.nz; ++z)
                for (int y = 0; y < d.ny; ++y)
                    for (int x = 0; x < d.nx; ++x) {
                        if (!m.at(x, y, z)) continue;
                        const bool interior = x > 0 && x + 1 < d.nx && m.at(x - 1, y, z) &&
                                              m.at(x + 1, y, z) && y > 0 && y + 1 < d.ny &&
                                              m.at(x, y - 1, z) && m.at(x, y + 1, z) && z > 0 &&
                                              z + 1 < d.nz && m.at(x, y, z - 1) &&
                                              m.at(x, y, z + 1);
                        if (!interior) ++surface;
                    }
            const auto diff = static_cast<long>(back.foreground_count()) -
                              static_cast<long>(m.foreground_count());
            CHECK(static_cast<std::size_t>(std::abs(diff)) <=
                  surface + back.size() - m.size());
        }
    }
}

TEST_CASE("resampling onto an explicit grid") {
    const Dims fine{16, 16, 16};
    const Dims coarse{8, 8, 8};
    const Spacing s1{2.0, 2.0, 2.0};
    const Spacing s2{4.0, 4.0, 4.0};

    SECTION("mask alignment matches per-voxel nearest lookup") {
        const auto m = oracles::random_mask(coarse, s2, 0.4, 9);
        const auto aligned = resample_mask_onto(m, fine, s1);
        REQUIRE(aligned.dims() == fine);
        for (int z = 0; z < fine.nz; ++z)
            for (int y = 0; y < fine.ny; ++y)
                for (int x = 0; x < fine.nx; ++x) {
                    const auto pick = [](int i) {
                        const double u = ((i + 0.5) * 2.0) / 4.0 - 0.5;
                        return std::clamp(static_cast<int>(std::floor(u + 0.5)), 0, 7);
                    };
                    CHECK(aligned.at(x, y, z) == m.at(pick(x), pick(y), pick(z)));
                }
    }

    SECTION("volume alignment at identical grids is the identity") {
        const auto vol = oracles::random_suv(fine, s1, 10);
        const auto out = resample_onto(vol, fine, s1, ResampleMode::Trilinear);
        CHECK(out.data() == vol.data());
    }
}

TEST_CASE("crop extracts an inclusive box") {
    const Dims d{6, 5, 4};
    const auto vol = oracles::random_suv(d, Spacing{1, 2, 3}, 77);
    const auto m = oracles::random_mask(d, Spacing{1, 2, 3}, 0.5, 78);
    const VoxelBox box{{1, 0, 2}, {4, 3, 3}};
    const auto cv = crop(vol, box);
    const auto cm = crop(m, box);
    REQUIRE(cv.dims() == Dims{4, 4, 2});
    REQUIRE(cm.dims() == Dims{4, 4, 2});
    for (int z = 0; z < 2; ++z)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                CHECK(cv.at(x, y, z) == vol.at(x + 1, y, z + 2));
                CHECK(cm.at(x, y, z) == m.at(x + 1, y, z + 2));
            }
}

TEST_CASE("ct clipping and normalization") {
    const Dims d{5, 1, 1};
    ScalarVolume ct(d, iso2, Unit::HU, {-154.0f, 325.0f, -1000.0f, 85.5f, 0.0f});
    const auto out = clip_normalize_ct(ct);
    CHECK(out.unit() == Unit::Normalized);
    CHECK(out[0] == 0.0f);
    CHECK(out[1] == 1.0f);
    CHECK(out[2] == 0.0f); // air clamps to the lower bound
    CHECK_THAT(static_cast<double>(out[3]), Catch::Matchers::WithinAbs(0.5, 1e-7));

    SECTION("invalid range is rejected") {
        CHECK_THROWS_AS(clip_normalize_ct(ct, 10.0, 10.0), parameter_error);
        CHECK_THROWS_AS(clip_normalize_ct(ct, 20.0, 10.0), parameter_error);
    }

    SECTION("output stays in [0,1] and is monotone in the input") {
        lesioneval::Rng rng(11);
        std::vector<float> values(64);
        for (auto& v : values) v = static_cast<float>(rng.uniform(-2000.0, 2000.0));
        ScalarVolume vol(Dims{4, 4, 4}, iso2, Unit::HU, values);
        const auto norm = clip_normalize_ct(vol);
        for (std::size_t i = 0; i < norm.size(); ++i) {
            CHECK(norm[i] >= 0.0f);
            CHECK(norm[i] <= 1.0f);
            for (std::size_t j = 0; j < norm.size(); ++j)
                if (vol[i] <= vol[j]) CHECK(norm[i] <= norm[j]);
        }
    }

    SECTION("wrong unit is rejected") {
        ScalarVolume suv(Dims{1, 1, 1}, iso2, Unit::SUV, {1.0f});
        CHECK_THROWS_AS(clip_normalize_ct(suv), parameter_error);
    }
}

TEST_CASE("body bounding box") {
    const Dims d{10, 10, 10};

    SECTION("uniform volume yields the full box") {
        ScalarVolume pet(d, iso2, Unit::SUV, std::vector<float>(d.size(), 5.0f));
        const auto box = body_bounding_box(pet);
        CHECK(box == VoxelBox{{0, 0, 0}, {9, 9, 9}});
    }

    SECTION("single hot voxel yields a single-voxel box") {
        std::vector<float> data(d.size(), 0.0f);
        data[linear_index(d, 4, 5, 6)] = 3.0f;
        ScalarVolume pet(d, iso2, Unit::SUV, std::move(data));
        const auto box = body_bounding_box(pet);
        CHECK(box == VoxelBox{{4, 5, 6}, {4, 5, 6}});
    }

    SECTION("the larger of two blobs wins") {
        std::vector<float> data(d.size(), 0.0f);
        // 100-voxel slab z in [0,3], x,y in [0,4]
        for (int z = 0; z <= 3; ++z)
            for (int y = 0; y <= 4; ++y)
                for (int x = 0; x <= 4; ++x) data[linear_index(d, x, y, z)] = 4.0f;
        // 10-voxel bar far away
        for (int x = 0; x <= 9; ++x) data[linear_index(d, x, 9, 9)] = 4.0f;
        ScalarVolume pet(d, iso2, Unit::SUV, std::move(data));
        const auto box = body_bounding_box(pet);
        CHECK(box == VoxelBox{{0, 0, 0}, {4, 4, 3}});
    }

    SECTION("all-cold volume raises a no-body error") {
        ScalarVolume pet(d, iso2, Unit::SUV, std::vector<float>(d.size(), 0.05f));
        CHECK_THROWS_AS(body_bounding_box(pet), data_error);
    }
}

TEST_CASE("suv conversion") {
    const Dims d{2, 1, 1};

    SECTION("direct formula value") {
        ScalarVolume act(d, iso2, Unit::BqPerMl, {1000.0f, 0.0f});
        const SuvConversionParams params{1e8, 7e4, 0.0, 109.77};
        const auto suv = suv_from_activity(act, params);
        CHECK(suv.unit() == Unit::SUV);
        CHECK_THAT(static_cast<double>(suv[0]), Catch::Matchers::WithinRel(0.7, 1e-6));
        CHECK(suv[1] == 0.0f);
    }

    SECTION("one half-life of delay doubles the value") {
        ScalarVolume act(d, iso2, Unit::BqPerMl, {1000.0f, 500.0f});
        const SuvConversionParams base{1e8, 7e4, 0.0, 109.77};
        const SuvConversionParams delayed{1e8, 7e4, 109.77, 109.77};
        const auto a = suv_from_activity(act, base);
        const auto b = suv_from_activity(act, delayed);
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK_THAT(static_cast<double>(b[i]), Catch::Matchers::WithinRel(2.0 * a[i], 1e-6));
    }

    SECTION("linear in activity and weight, inverse in dose") {
        ScalarVolume act(d, iso2, Unit::BqPerMl, {800.0f, 200.0f});
        ScalarVolume act2(d, iso2, Unit::BqPerMl, {1600.0f, 400.0f});
        const SuvConversionParams p1{1e8, 7e4, 30.0, 109.77};
        const SuvConversionParams heavier{1e8, 14e4, 30.0, 109.77};
        const SuvConversionParams stronger{2e8, 7e4, 30.0, 109.77};
        const auto s1 = suv_from_activity(act, p1);
        const auto s2 = suv_from_activity(act2, p1);
        const auto s3 = suv_from_activity(act, heavier);
        const auto s4 = suv_from_activity(act, stronger);
        for (std::size_t i = 0; i < s1.size(); ++i) {
            CHECK_THAT(static_cast<double>(s2[i]), Catch::Matchers::WithinRel(2.0 * s1[i], 1e-6));
            CHECK_THAT(static_cast<double>(s3[i]), Catch::Matchers::WithinRel(2.0 * s1[i], 1e-6));
            CHECK_THAT(static_cast<double>(s4[i]), Catch::Matchers::WithinRel(0.5 * s1[i], 1e-6));
        }
    }

    SECTION("invalid parameters are rejected") {
        ScalarVolume act(d, iso2, Unit::BqPerMl, {1.0f, 1.0f});
        CHECK_THROWS_AS(suv_from_activity(act, SuvConversionParams{0.0, 7e4, 0.0, 109.77}),
                        parameter_error);
        CHECK_THROWS_AS(suv_from_activity(act, SuvConversionParams{1e8, -1.0, 0.0, 109.77}),
                        parameter_error);
        ScalarVolume wrong(d, iso2, Unit::SUV, {1.0f, 1.0f});
        CHECK_THROWS_AS(suv_from_activity(wrong, SuvConversionParams{1e8, 7e4, 0.0, 109.77}),
                        parameter_error);
    }
}

TEST_CASE("patch center sampling") {
    const Dims d{8, 8, 8};
    const auto m = oracles::random_mask(d, iso2, 0.3, 21);

    SECTION("pure foreground and pure background draws") {
        for (const auto& c : sample_patch_centers(m, 1, 0, 200, 4, 5))
            CHECK(m.at(c[0], c[1], c[2]));
        for (const auto& c : sample_patch_centers(m, 0, 1, 200, 4, 5))
            CHECK_FALSE(m.at(c[0], c[1], c[2]));
    }

    SECTION("foreground fraction approaches pos/(pos+neg)") {
        const auto centers = sample_patch_centers(m, 2, 1, 30000, 4, 99);
        std::size_t fg = 0;
        for (const auto& c : centers) fg += m.at(c[0], c[1], c[2]) ? 1 : 0;
        const double fraction = static_cast<double>(fg) / static_cast<double>(centers.size());
        CHECK_THAT(fraction, Catch::Matchers::WithinAbs(2.0 / 3.0, 0.01));
    }

    SECTION("same seed gives bit-identical draws") {
        const auto a = sample_patch_centers(m, 3, 2, 500, 4, 1234);
        const auto b = sample_patch_centers(m, 3, 2, 500, 4, 1234);
        CHECK(a == b);
        const auto c = sample_patch_centers(m, 3, 2, 500, 4, 1235);
        CHECK(a != c);
    }

    SECTION("empty class fallback and error cases") {
        const BinaryMask empty(d, iso2, std::vector<std::uint8_t>(d.size(), 0));
        CHECK_THROWS_AS(sample_patch_centers(empty, 1, 0, 10, 4, 0), data_error);
        CHECK(sample_patch_centers(empty, 1, 1, 10, 4, 0).size() == 10);
        const BinaryMask full(d, iso2, std::vector<std::uint8_t>(d.size(), 1));
        CHECK_THROWS_AS(sample_patch_centers(full, 0, 1, 10, 4, 0), data_error);
        CHECK_THROWS_AS(sample_patch_centers(m, 0, 0, 10, 4, 0), parameter_error);
        CHECK_THROWS_AS(sample_patch_centers(m, 1, 1, 10, 9, 0), parameter_error);
    }
}
