#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lesioneval/core.hpp"
#include "lesioneval/rng.hpp"

namespace lesioneval {

enum class Connectivity : int { Faces6 = 6, Edges18 = 18, Corners26 = 26 };

inline Connectivity connectivity_from_int(int v) {
    switch (v) {
        case 6: return Connectivity::Faces6;
        case 18: return Connectivity::Edges18;
        case 26: return Connectivity::Corners26;
    }
    throw parameter_error("connectivity must be 6, 18 or 26");
}

enum class ResampleMode { Nearest, Trilinear };

namespace detail {

inline std::vector<std::array<int, 3>> neighbor_offsets(Connectivity conn) {
    std::vector<std::array<int, 3>> offs;
    const int order = static_cast<int>(conn);
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (manhattan == 0) continue;
                if (order == 6 && manhattan > 1) continue;
                if (order == 18 && manhattan > 2) continue;
                offs.push_back({dx, dy, dz});
            }
    return offs;
}

} // namespace detail

/// Label maximal connected foreground components. Components are numbered
/// in ascending order of their smallest linear voxel index and each voxel
/// list is ascending.
inline LabeledComponents connected_components(const BinaryMask& mask,
                                              Connectivity conn = Connectivity::Corners26) {
    const Dims d = mask.dims();
    LabeledComponents cc;
    cc.dims = d;
    cc.spacing = mask.spacing();
    cc.labels.assign(mask.size(), 0);

    const auto offs = detail::neighbor_offsets(conn);
    std::vector<std::size_t> stack;
    std::int32_t next_label = 0;

    for (std::size_t seed = 0; seed < mask.size(); ++seed) {
        if (!mask[seed] || cc.labels[seed] != 0) continue;
        ++next_label;
        cc.labels[seed] = next_label;
        stack.assign(1, seed);
        while (!stack.empty()) {
            const std::size_t cur = stack.back();
            stack.pop_back();
            const auto [x, y, z] = unravel_index(d, cur);
            for (const auto& o : offs) {
                const int nx = x + o[0], ny = y + o[1], nz = z + o[2];
                if (nx < 0 || ny < 0 || nz < 0 || nx >= d.nx || ny >= d.ny || nz >= d.nz)
                    continue;
                const std::size_t ni = linear_index(d, nx, ny, nz);
                if (mask[ni] && cc.labels[ni] == 0) {
                    cc.labels[ni] = next_label;
                    stack.push_back(ni);
                }
            }
        }
    }

    cc.count = next_label;
    cc.voxels.assign(static_cast<std::size_t>(next_label), {});
    for (std::size_t i = 0; i < cc.labels.size(); ++i)
        if (cc.labels[i] != 0) cc.voxels[static_cast<std::size_t>(cc.labels[i]) - 1].push_back(i);
    return cc;
}

namespace detail {

struct ResampleAxis {
    int n_out = 0;
    double ratio = 1.0; // target spacing / input spacing
};

inline ResampleAxis resample_axis(int n_in, double in_spacing, double target_spacing) {
    ResampleAxis a;
    a.ratio = target_spacing / in_spacing;
    a.n_out = static_cast<int>(std::ceil(static_cast<double>(n_in) * in_spacing / target_spacing -
                                         1e-12));
    if (a.n_out < 1) a.n_out = 1;
    return a;
}

// Continuous input coordinate (in voxel index units) of an output voxel
// center. With identical spacings the ratio is exactly 1 and u == i.
inline double source_coord(int i, double ratio) {
    return (static_cast<double>(i) + 0.5) * ratio - 0.5;
}

inline int nearest_clamped(double u, int n) {
    int i = static_cast<int>(std::floor(u + 0.5));
    if (i < 0) i = 0;
    if (i >= n) i = n - 1;
    return i;
}

} // namespace detail

/// Resample onto an explicit output grid. Output voxel centers sit at
/// (i + 0.5) * target spacing from the input origin corner; samples
/// outside the input grid clamp to the nearest edge voxel.
inline ScalarVolume resample_onto(const ScalarVolume& vol, const Dims& od, const Spacing& target,
                                  ResampleMode mode) {
    if (mode == ResampleMode::Trilinear && vol.from_mask())
        throw parameter_error("trilinear resampling is not valid for mask-derived volumes");
    detail::require_dims(od);

    const Dims d = vol.dims();
    const Spacing s = vol.spacing();
    const detail::ResampleAxis ax{od.nx, target.dx / s.dx};
    const detail::ResampleAxis ay{od.ny, target.dy / s.dy};
    const detail::ResampleAxis az{od.nz, target.dz / s.dz};

    std::vector<float> out(od.size());

    std::size_t w = 0;
    for (int z = 0; z < od.nz; ++z) {
        const double uz = detail::source_coord(z, az.ratio);
        for (int y = 0; y < od.ny; ++y) {
            const double uy = detail::source_coord(y, ay.ratio);
            for (int x = 0; x < od.nx; ++x, ++w) {
                const double ux = detail::source_coord(x, ax.ratio);
                if (mode == ResampleMode::Nearest) {
                    out[w] = vol.at(detail::nearest_clamped(ux, d.nx),
                                    detail::nearest_clamped(uy, d.ny),
                                    detail::nearest_clamped(uz, d.nz));
                } else {
                    const double cx = std::clamp(ux, 0.0, static_cast<double>(d.nx - 1));
                    const double cy = std::clamp(uy, 0.0, static_cast<double>(d.ny - 1));
                    const double cz = std::clamp(uz, 0.0, static_cast<double>(d.nz - 1));
                    const int x0 = std::min(static_cast<int>(std::floor(cx)), d.nx - 1);
                    const int y0 = std::min(static_cast<int>(std::floor(cy)), d.ny - 1);
                    const int z0 = std::min(static_cast<int>(std::floor(cz)), d.nz - 1);
                    const int x1 = std::min(x0 + 1, d.nx - 1);
                    const int y1 = std::min(y0 + 1, d.ny - 1);
                    const int z1 = std::min(z0 + 1, d.nz - 1);
                    const double fx = cx - x0, fy = cy - y0, fz = cz - z0;
                    const double c00 = vol.at(x0, y0, z0) * (1 - fx) + vol.at(x1, y0, z0) * fx;
                    const double c10 = vol.at(x0, y1, z0) * (1 - fx) + vol.at(x1, y1, z0) * fx;
                    const double c01 = vol.at(x0, y0, z1) * (1 - fx) + vol.at(x1, y0, z1) * fx;
                    const double c11 = vol.at(x0, y1, z1) * (1 - fx) + vol.at(x1, y1, z1) * fx;
                    const double c0 = c00 * (1 - fy) + c10 * fy;
                    const double c1 = c01 * (1 - fy) + c11 * fy;
                    out[w] = static_cast<float>(c0 * (1 - fz) + c1 * fz);
                }
            }
        }
    }
    return ScalarVolume(od, target, vol.unit(), std::move(out), vol.from_mask());
}

/// Resample with output dims chosen to cover the input extent
/// (dims = ceil(extent / target spacing) per axis).
inline ScalarVolume resample(const ScalarVolume& vol, const Spacing& target, ResampleMode mode) {
    const Dims d = vol.dims();
    const Spacing s = vol.spacing();
    const Dims od{detail::resample_axis(d.nx, s.dx, target.dx).n_out,
                  detail::resample_axis(d.ny, s.dy, target.dy).n_out,
                  detail::resample_axis(d.nz, s.dz, target.dz).n_out};
    return resample_onto(vol, od, target, mode);
}

/// Nearest-neighbor mask resampling onto an explicit grid; output is
/// strictly binary.
inline BinaryMask resample_mask_onto(const BinaryMask& mask, const Dims& od,
                                     const Spacing& target) {
    detail::require_dims(od);
    const Dims d = mask.dims();
    const Spacing s = mask.spacing();
    const detail::ResampleAxis ax{od.nx, target.dx / s.dx};
    const detail::ResampleAxis ay{od.ny, target.dy / s.dy};
    const detail::ResampleAxis az{od.nz, target.dz / s.dz};

    std::vector<std::uint8_t> out(od.size());
    std::size_t w = 0;
    for (int z = 0; z < od.nz; ++z) {
        const int sz = detail::nearest_clamped(detail::source_coord(z, az.ratio), d.nz);
        for (int y = 0; y < od.ny; ++y) {
            const int sy = detail::nearest_clamped(detail::source_coord(y, ay.ratio), d.ny);
            for (int x = 0; x < od.nx; ++x, ++w)
                out[w] = mask.at(detail::nearest_clamped(detail::source_coord(x, ax.ratio), d.nx),
                                 sy, sz)
                             ? 1
                             : 0;
        }
    }
    return BinaryMask(od, target, std::move(out));
}

/// Nearest-neighbor mask resampling with extent-covering output dims.
inline BinaryMask resample_mask(const BinaryMask& mask, const Spacing& target) {
    const Dims d = mask.dims();
    const Spacing s = mask.spacing();
    const Dims od{detail::resample_axis(d.nx, s.dx, target.dx).n_out,
                  detail::resample_axis(d.ny, s.dy, target.dy).n_out,
                  detail::resample_axis(d.nz, s.dz, target.dz).n_out};
    return resample_mask_onto(mask, od, target);
}

/// View a mask as a 0/1 scalar volume (flagged so trilinear resampling
/// rejects it).
inline ScalarVolume to_scalar(const BinaryMask& mask) {
    std::vector<float> data(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) data[i] = mask[i] ? 1.0f : 0.0f;
    return ScalarVolume(mask.dims(), mask.spacing(), Unit::Normalized, std::move(data), true);
}

/// Clamp CT values to [lo_hu, hi_hu] and min-max normalize onto [0, 1].
inline ScalarVolume clip_normalize_ct(const ScalarVolume& ct, double lo_hu = -154.0,
                                      double hi_hu = 325.0) {
    if (ct.unit() != Unit::HU) throw parameter_error("clip_normalize_ct expects HU input");
    if (!(lo_hu < hi_hu)) throw parameter_error("clip range requires lo < hi");
    const double span = hi_hu - lo_hu;
    std::vector<float> out(ct.size());
    for (std::size_t i = 0; i < ct.size(); ++i) {
        const double v = std::clamp(static_cast<double>(ct[i]), lo_hu, hi_hu);
        out[i] = static_cast<float>((v - lo_hu) / span);
    }
    return ScalarVolume(ct.dims(), ct.spacing(), Unit::Normalized, std::move(out));
}

/// Tightest box around the largest connected component of {SUV > threshold}.
/// SUV 0.1 separates tissue from air and bedding in FDG scans.
inline VoxelBox body_bounding_box(const ScalarVolume& pet, double threshold = 0.1,
                                  Connectivity conn = Connectivity::Corners26) {
    if (pet.unit() != Unit::SUV) throw parameter_error("body_bounding_box expects an SUV volume");
    std::vector<std::uint8_t> above(pet.size());
    bool any = false;
    for (std::size_t i = 0; i < pet.size(); ++i) {
        above[i] = pet[i] > threshold ? 1 : 0;
        any = any || above[i];
    }
    if (!any) throw data_error("no body found: no voxel above SUV threshold");

    const BinaryMask fg(pet.dims(), pet.spacing(), std::move(above));
    const LabeledComponents cc = connected_components(fg, conn);
    std::size_t best = 0;
    for (std::size_t l = 1; l < cc.voxels.size(); ++l)
        if (cc.voxels[l].size() > cc.voxels[best].size()) best = l;

    VoxelBox box{{pet.dims().nx, pet.dims().ny, pet.dims().nz}, {-1, -1, -1}};
    for (const std::size_t idx : cc.voxels[best]) {
        const auto [x, y, z] = unravel_index(pet.dims(), idx);
        box.lo[0] = std::min(box.lo[0], x);
        box.lo[1] = std::min(box.lo[1], y);
        box.lo[2] = std::min(box.lo[2], z);
        box.hi[0] = std::max(box.hi[0], x);
        box.hi[1] = std::max(box.hi[1], y);
        box.hi[2] = std::max(box.hi[2], z);
    }
    return box;
}

template <typename GridLike>
inline GridLike crop(const GridLike& g, const VoxelBox& box);

template <>
inline ScalarVolume crop(const ScalarVolume& v, const VoxelBox& box) {
    const Dims od{box.hi[0] - box.lo[0] + 1, box.hi[1] - box.lo[1] + 1,
                  box.hi[2] - box.lo[2] + 1};
    std::vector<float> out;
    out.reserve(od.size());
    for (int z = box.lo[2]; z <= box.hi[2]; ++z)
        for (int y = box.lo[1]; y <= box.hi[1]; ++y)
            for (int x = box.lo[0]; x <= box.hi[0]; ++x) out.push_back(v.at(x, y, z));
    return ScalarVolume(od, v.spacing(), v.unit(), std::move(out), v.from_mask());
}

template <>
inline BinaryMask crop(const BinaryMask& m, const VoxelBox& box) {
    const Dims od{box.hi[0] - box.lo[0] + 1, box.hi[1] - box.lo[1] + 1,
                  box.hi[2] - box.lo[2] + 1};
    std::vector<std::uint8_t> out;
    out.reserve(od.size());
    for (int z = box.lo[2]; z <= box.hi[2]; ++z)
        for (int y = box.lo[1]; y <= box.hi[1]; ++y)
            for (int x = box.lo[0]; x <= box.hi[0]; ++x) out.push_back(m.at(x, y, z) ? 1 : 0);
    return BinaryMask(od, m.spacing(), std::move(out));
}

/// Convert an activity-concentration volume (Bq/ml) to body-weight SUV
/// with exponential decay correction of the injected dose.
inline ScalarVolume suv_from_activity(const ScalarVolume& act, const SuvConversionParams& params) {
    if (act.unit() != Unit::BqPerMl)
        throw parameter_error("suv_from_activity expects a Bq/ml volume");
    params.validate();
    const double decayed_dose =
        params.injected_dose_bq * std::pow(2.0, -params.delay_min / params.half_life_min);
    const double factor = params.body_weight_g / decayed_dose;
    std::vector<float> out(act.size());
    for (std::size_t i = 0; i < act.size(); ++i)
        out[i] = static_cast<float>(static_cast<double>(act[i]) * factor);
    return ScalarVolume(act.dims(), act.spacing(), Unit::SUV, std::move(out));
}

/// Draw patch center voxels: each center is a foreground voxel with
/// probability pos/(pos+neg), else background, uniform within its class.
/// If one class is empty all centers come from the other.
inline std::vector<std::array<int, 3>> sample_patch_centers(const BinaryMask& mask, int pos,
                                                            int neg, int n_patches,
                                                            int patch_edge, std::uint64_t seed) {
    if (pos < 0 || neg < 0 || pos + neg <= 0)
        throw parameter_error("pos and neg must be nonnegative with pos+neg > 0");
    if (n_patches < 0) throw parameter_error("n_patches must be nonnegative");
    const Dims d = mask.dims();
    if (patch_edge < 1 || patch_edge > d.nx || patch_edge > d.ny || patch_edge > d.nz)
        throw parameter_error("patch edge must fit inside every dimension");

    std::vector<std::size_t> fg, bg;
    for (std::size_t i = 0; i < mask.size(); ++i) (mask[i] ? fg : bg).push_back(i);

    if (fg.empty() && neg == 0)
        throw data_error("cannot sample foreground-only patches from an empty mask");
    if (bg.empty() && pos == 0)
        throw data_error("cannot sample background-only patches from an all-foreground mask");

    const double p_fg = static_cast<double>(pos) / static_cast<double>(pos + neg);
    Rng rng(seed);
    std::vector<std::array<int, 3>> centers;
    centers.reserve(static_cast<std::size_t>(n_patches));
    for (int k = 0; k < n_patches; ++k) {
        bool take_fg = rng.uniform01() < p_fg;
        if (fg.empty()) take_fg = false;
        if (bg.empty()) take_fg = true;
        const auto& pool = take_fg ? fg : bg;
        const std::size_t idx = pool[rng.uniform_index(pool.size())];
        centers.push_back(unravel_index(d, idx));
    }
    return centers;
}

} // namespace lesioneval
