#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lesioneval/core.hpp"
#include "lesioneval/measures.hpp"
#include "lesioneval/rng.hpp"
#include "lesioneval/volume.hpp"

namespace lesioneval {

struct EllipsoidSpec {
    std::array<double, 3> center_mm{};
    std::array<double, 3> radii_mm{};
    double suv = 0.0;
};

/// Synthetic PET phantom: a noisy uniform background with noiseless
/// ellipsoidal lesion plateaus.
struct PhantomSpec {
    Dims dims{64, 64, 64};
    Spacing spacing{2.0, 2.0, 2.0};
    double background_suv = 1.0;
    double noise_sd = 0.1;
    std::vector<EllipsoidSpec> lesions;
    std::uint64_t seed = 0;

    void validate() const {
        detail::require_dims(dims);
        if (!(background_suv >= 0.0)) throw parameter_error("background SUV must be nonnegative");
        if (!(noise_sd >= 0.0)) throw parameter_error("noise sd must be nonnegative");
        const std::array<double, 3> extent{dims.nx * spacing.dx, dims.ny * spacing.dy,
                                           dims.nz * spacing.dz};
        for (const auto& l : lesions) {
            if (!(l.suv > background_suv))
                throw parameter_error("lesion SUV must exceed the background SUV");
            for (int a = 0; a < 3; ++a) {
                const auto au = static_cast<std::size_t>(a);
                if (!(l.radii_mm[au] > 0.0)) throw parameter_error("lesion radii must be positive");
                if (l.center_mm[au] - l.radii_mm[au] < 0.0 ||
                    l.center_mm[au] + l.radii_mm[au] > extent[au])
                    throw parameter_error("lesion extends outside the volume");
            }
        }
    }
};

struct PhantomCase {
    ScalarVolume suv;
    BinaryMask gt;
    LesionMeasures truth;
};

/// Generate one phantom. A voxel is foreground when its center falls
/// inside any lesion ellipsoid; overlapping lesions take the hottest SUV.
/// Background noise is Gaussian truncated at zero. Bit-identical output
/// for identical specs.
inline PhantomCase generate(const PhantomSpec& spec) {
    spec.validate();
    const Dims d = spec.dims;
    const Spacing s = spec.spacing;
    std::vector<float> suv(d.size());
    std::vector<std::uint8_t> fg(d.size(), 0);
    Rng rng(spec.seed);

    std::size_t i = 0;
    for (int z = 0; z < d.nz; ++z) {
        const double cz = (z + 0.5) * s.dz;
        for (int y = 0; y < d.ny; ++y) {
            const double cy = (y + 0.5) * s.dy;
            for (int x = 0; x < d.nx; ++x, ++i) {
                const double cx = (x + 0.5) * s.dx;
                double lesion_suv = 0.0;
                for (const auto& l : spec.lesions) {
                    const double ux = (cx - l.center_mm[0]) / l.radii_mm[0];
                    const double uy = (cy - l.center_mm[1]) / l.radii_mm[1];
                    const double uz = (cz - l.center_mm[2]) / l.radii_mm[2];
                    if (ux * ux + uy * uy + uz * uz <= 1.0) lesion_suv = std::max(lesion_suv, l.suv);
                }
                // One noise draw per voxel keeps the stream independent of
                // lesion layout.
                const double noise = rng.normal() * spec.noise_sd;
                if (lesion_suv > 0.0) {
                    fg[i] = 1;
                    suv[i] = static_cast<float>(lesion_suv);
                } else {
                    suv[i] = static_cast<float>(std::max(0.0, spec.background_suv + noise));
                }
            }
        }
    }

    ScalarVolume vol(d, s, Unit::SUV, std::move(suv));
    BinaryMask gt(d, s, std::move(fg));
    const LabeledComponents cc = connected_components(gt, Connectivity::Corners26);
    const LesionMeasures truth = lesion_measures(vol, gt, cc);
    return PhantomCase{std::move(vol), std::move(gt), truth};
}

/// One mask edit. Dilation and erosion use the unit 6-connected ball,
/// applied `count` times. DropComponent removes the i-th (1-based)
/// 26-connected component. AddBlob inserts an ellipsoid that must not
/// touch existing foreground (26-adjacency); without an explicit center it
/// is placed randomly. Shift translates foreground, discarding voxels
/// pushed off the grid.
struct DegradeOp {
    enum class Kind { Dilate, Erode, DropComponent, AddBlob, Shift };
    Kind kind = Kind::Dilate;
    int count = 1;                                  // Dilate / Erode
    int component = 1;                              // DropComponent
    std::optional<std::array<double, 3>> center_mm; // AddBlob
    std::array<double, 3> radii_mm{4.0, 4.0, 4.0};  // AddBlob
    std::array<int, 3> shift{0, 0, 0};              // Shift

    static DegradeOp dilate(int k) { return {Kind::Dilate, k, 1, {}, {}, {}}; }
    static DegradeOp erode(int k) { return {Kind::Erode, k, 1, {}, {}, {}}; }
    static DegradeOp drop_component(int index) {
        return {Kind::DropComponent, 1, index, {}, {}, {}};
    }
    static DegradeOp add_blob(std::array<double, 3> center, std::array<double, 3> radii) {
        return {Kind::AddBlob, 1, 1, center, radii, {}};
    }
    static DegradeOp add_random_blob(std::array<double, 3> radii) {
        return {Kind::AddBlob, 1, 1, std::nullopt, radii, {}};
    }
    static DegradeOp shift_by(std::array<int, 3> delta) {
        return {Kind::Shift, 1, 1, {}, {}, delta};
    }
};

namespace detail {

inline std::vector<std::uint8_t> dilate_once(const std::vector<std::uint8_t>& in, const Dims& d) {
    std::vector<std::uint8_t> out = in;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (!in[i]) continue;
        const auto [x, y, z] = unravel_index(d, i);
        if (x > 0) out[i - 1] = 1;
        if (x + 1 < d.nx) out[i + 1] = 1;
        if (y > 0) out[i - static_cast<std::size_t>(d.nx)] = 1;
        if (y + 1 < d.ny) out[i + static_cast<std::size_t>(d.nx)] = 1;
        const std::size_t plane = static_cast<std::size_t>(d.nx) * static_cast<std::size_t>(d.ny);
        if (z > 0) out[i - plane] = 1;
        if (z + 1 < d.nz) out[i + plane] = 1;
    }
    return out;
}

inline std::vector<std::uint8_t> erode_once(const std::vector<std::uint8_t>& in, const Dims& d) {
    std::vector<std::uint8_t> out = in;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (!in[i]) continue;
        const auto [x, y, z] = unravel_index(d, i);
        const std::size_t plane = static_cast<std::size_t>(d.nx) * static_cast<std::size_t>(d.ny);
        const bool keep = x > 0 && in[i - 1] && x + 1 < d.nx && in[i + 1] && y > 0 &&
                          in[i - static_cast<std::size_t>(d.nx)] && y + 1 < d.ny &&
                          in[i + static_cast<std::size_t>(d.nx)] && z > 0 && in[i - plane] &&
                          z + 1 < d.nz && in[i + plane];
        if (!keep) out[i] = 0;
    }
    return out;
}

inline std::vector<std::size_t> ellipsoid_voxels(const Dims& d, const Spacing& s,
                                                 const std::array<double, 3>& center,
                                                 const std::array<double, 3>& radii) {
    std::vector<std::size_t> out;
    const int x0 = std::max(0, static_cast<int>((center[0] - radii[0]) / s.dx) - 1);
    const int x1 = std::min(d.nx - 1, static_cast<int>((center[0] + radii[0]) / s.dx) + 1);
    const int y0 = std::max(0, static_cast<int>((center[1] - radii[1]) / s.dy) - 1);
    const int y1 = std::min(d.ny - 1, static_cast<int>((center[1] + radii[1]) / s.dy) + 1);
    const int z0 = std::max(0, static_cast<int>((center[2] - radii[2]) / s.dz) - 1);
    const int z1 = std::min(d.nz - 1, static_cast<int>((center[2] + radii[2]) / s.dz) + 1);
    for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double ux = ((x + 0.5) * s.dx - center[0]) / radii[0];
                const double uy = ((y + 0.5) * s.dy - center[1]) / radii[1];
                const double uz = ((z + 0.5) * s.dz - center[2]) / radii[2];
                if (ux * ux + uy * uy + uz * uz <= 1.0) out.push_back(linear_index(d, x, y, z));
            }
    return out;
}

/// True when a voxel set touches existing foreground under 26-adjacency
/// (sharing a voxel counts as touching).
inline bool touches_foreground(const std::vector<std::size_t>& voxels,
                               const std::vector<std::uint8_t>& fg, const Dims& d) {
    for (const std::size_t idx : voxels) {
        const auto [x, y, z] = unravel_index(d, idx);
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int nx = x + dx, ny = y + dy, nz = z + dz;
                    if (nx < 0 || ny < 0 || nz < 0 || nx >= d.nx || ny >= d.ny || nz >= d.nz)
                        continue;
                    if (fg[linear_index(d, nx, ny, nz)]) return true;
                }
    }
    return false;
}

} // namespace detail

/// Apply mask edits in list order. Deterministic given the seed (which
/// only feeds randomly placed blobs).
inline BinaryMask degrade(const BinaryMask& gt, const std::vector<DegradeOp>& ops,
                          std::uint64_t seed = 0) {
    const Dims d = gt.dims();
    const Spacing s = gt.spacing();
    std::vector<std::uint8_t> work(gt.data());
    Rng rng(seed);

    for (const auto& op : ops) {
        switch (op.kind) {
            case DegradeOp::Kind::Dilate:
                for (int k = 0; k < op.count; ++k) work = detail::dilate_once(work, d);
                break;
            case DegradeOp::Kind::Erode:
                for (int k = 0; k < op.count; ++k) work = detail::erode_once(work, d);
                break;
            case DegradeOp::Kind::DropComponent: {
                const LabeledComponents cc =
                    connected_components(BinaryMask(d, s, work), Connectivity::Corners26);
                if (op.component < 1 || op.component > cc.count)
                    throw parameter_error("drop_component: no component with index " +
                                          std::to_string(op.component));
                for (const std::size_t idx :
                     cc.voxels[static_cast<std::size_t>(op.component) - 1])
                    work[idx] = 0;
                break;
            }
            case DegradeOp::Kind::AddBlob: {
                if (op.center_mm) {
                    const auto vox = detail::ellipsoid_voxels(d, s, *op.center_mm, op.radii_mm);
                    if (vox.empty()) throw parameter_error("add_blob: empty ellipsoid");
                    if (detail::touches_foreground(vox, work, d))
                        throw parameter_error("add_blob: blob touches existing foreground");
                    for (const std::size_t idx : vox) work[idx] = 1;
                } else {
                    bool placed = false;
                    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
                        std::array<double, 3> center{};
                        const std::array<double, 3> extent{d.nx * s.dx, d.ny * s.dy, d.nz * s.dz};
                        for (int a = 0; a < 3; ++a) {
                            const auto au = static_cast<std::size_t>(a);
                            center[au] = rng.uniform(op.radii_mm[au], extent[au] - op.radii_mm[au]);
                        }
                        const auto vox = detail::ellipsoid_voxels(d, s, center, op.radii_mm);
                        if (vox.empty() || detail::touches_foreground(vox, work, d)) continue;
                        for (const std::size_t idx : vox) work[idx] = 1;
                        placed = true;
                    }
                    if (!placed)
                        throw data_error("add_blob: no disjoint placement found after 1000 tries");
                }
                break;
            }
            case DegradeOp::Kind::Shift: {
                std::vector<std::uint8_t> shifted(work.size(), 0);
                for (std::size_t i = 0; i < work.size(); ++i) {
                    if (!work[i]) continue;
                    const auto [x, y, z] = unravel_index(d, i);
                    const int nx = x + op.shift[0], ny = y + op.shift[1], nz = z + op.shift[2];
                    if (nx < 0 || ny < 0 || nz < 0 || nx >= d.nx || ny >= d.ny || nz >= d.nz)
                        continue;
                    shifted[linear_index(d, nx, ny, nz)] = 1;
                }
                work = std::move(shifted);
                break;
            }
        }
    }
    return BinaryMask(d, s, std::move(work));
}

} // namespace lesioneval
