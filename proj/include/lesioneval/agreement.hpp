#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "lesioneval/core.hpp"
#include "lesioneval/metrics.hpp"

namespace lesioneval {

/// A set of >= 2 rater masks over one shared voxel grid.
class RaterStack {
public:
    explicit RaterStack(std::vector<BinaryMask> masks) : masks_(std::move(masks)) {
        if (masks_.size() < 2) throw parameter_error("rater stack needs at least two masks");
        for (std::size_t i = 1; i < masks_.size(); ++i)
            require_same_geometry(masks_[0], masks_[i], "rater stack");
    }

    const std::vector<BinaryMask>& masks() const { return masks_; }
    std::size_t rater_count() const { return masks_.size(); }
    std::size_t voxel_count() const { return masks_[0].size(); }
    const Dims& dims() const { return masks_[0].dims(); }
    const Spacing& spacing() const { return masks_[0].spacing(); }

private:
    std::vector<BinaryMask> masks_;
};

enum class AgreementBand { None, Slight, Fair, Moderate, Substantial, AlmostPerfect };

inline AgreementBand agreement_band(double kappa) {
    if (kappa < 0.0) return AgreementBand::None;
    if (kappa <= 0.20) return AgreementBand::Slight;
    if (kappa <= 0.40) return AgreementBand::Fair;
    if (kappa <= 0.60) return AgreementBand::Moderate;
    if (kappa <= 0.80) return AgreementBand::Substantial;
    return AgreementBand::AlmostPerfect;
}

inline const char* band_name(AgreementBand b) {
    switch (b) {
        case AgreementBand::None: return "none";
        case AgreementBand::Slight: return "slight";
        case AgreementBand::Fair: return "fair";
        case AgreementBand::Moderate: return "moderate";
        case AgreementBand::Substantial: return "substantial";
        case AgreementBand::AlmostPerfect: return "almost_perfect";
    }
    return "?";
}

struct KappaResult {
    double kappa = 0.0;
    double p_bar = 0.0;
    double p_e = 0.0;
    AgreementBand band = AgreementBand::None;
    /// Chance agreement hit 1 (every rater gave every voxel the same single
    /// label); kappa is then defined as 1.
    bool degenerate = false;
};

/// Fleiss' kappa over voxel-wise binary labels, optionally restricted to a
/// crop box. Including surrounding air inflates chance agreement, so
/// callers can pass a body box instead of the full grid.
inline KappaResult fleiss_kappa(const RaterStack& stack,
                                const std::optional<VoxelBox>& crop = std::nullopt) {
    const std::size_t n_obs = stack.rater_count();
    const Dims d = stack.dims();

    std::uint64_t m = 0;          // voxels considered
    std::uint64_t sum_fg = 0;     // total foreground votes
    std::uint64_t sum_squares = 0; // sum over voxels of n_i0^2 + n_i1^2

    const auto accumulate = [&](std::size_t idx) {
        std::uint64_t fg = 0;
        for (const auto& mask : stack.masks()) fg += mask[idx] ? 1u : 0u;
        const std::uint64_t bg = n_obs - fg;
        ++m;
        sum_fg += fg;
        sum_squares += fg * fg + bg * bg;
    };

    if (crop) {
        for (int z = crop->lo[2]; z <= crop->hi[2]; ++z)
            for (int y = crop->lo[1]; y <= crop->hi[1]; ++y)
                for (int x = crop->lo[0]; x <= crop->hi[0]; ++x)
                    accumulate(linear_index(d, x, y, z));
    } else {
        for (std::size_t i = 0; i < stack.voxel_count(); ++i) accumulate(i);
    }
    if (m == 0) throw parameter_error("fleiss_kappa: empty crop region");

    const double md = static_cast<double>(m);
    const double nd = static_cast<double>(n_obs);
    const double sum_bg = md * nd - static_cast<double>(sum_fg);

    KappaResult r;
    r.p_bar = (static_cast<double>(sum_squares) - md * nd) / (md * nd * (nd - 1.0));
    r.p_e = (static_cast<double>(sum_fg) * static_cast<double>(sum_fg) + sum_bg * sum_bg) /
            (md * md * nd * nd);
    if (r.p_e >= 1.0) {
        r.kappa = 1.0;
        r.degenerate = true;
    } else {
        r.kappa = (r.p_bar - r.p_e) / (1.0 - r.p_e);
    }
    r.band = agreement_band(r.kappa);
    return r;
}

inline double kappa_mean(const std::vector<KappaResult>& results) {
    if (results.empty()) throw parameter_error("kappa_mean: no cases");
    double acc = 0.0;
    for (const auto& r : results) acc += r.kappa;
    return acc / static_cast<double>(results.size());
}

/// Symmetric rater-vs-rater DSC matrix with unit diagonal.
inline std::vector<std::vector<double>> pairwise_dsc(const RaterStack& stack) {
    const std::size_t n = stack.rater_count();
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 1.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            m[i][j] = m[j][i] = dsc(stack.masks()[i], stack.masks()[j]);
    return m;
}

struct StapleResult {
    BinaryMask consensus;
    std::vector<double> sensitivity;  // per rater
    std::vector<double> specificity;  // per rater
    std::vector<double> probability;  // per-voxel consensus weight
    int iterations = 0;
    bool converged = false;
};

/// Binary STAPLE label fusion: expectation-maximization over per-rater
/// sensitivity/specificity and a per-voxel consensus probability. The
/// voxel prior is the mean rater vote and stays fixed; rater parameters
/// are clamped to [0.01, 0.99] every iteration. Iteration stops when the
/// largest per-voxel weight change drops below `tol`; hitting `max_iter`
/// first returns the last iterate with `converged` false.
inline StapleResult staple(const RaterStack& stack, int max_iter = 100, double tol = 1e-6) {
    if (max_iter < 1) throw parameter_error("staple: max_iter must be positive");
    const std::size_t n_obs = stack.rater_count();
    const std::size_t m = stack.voxel_count();

    std::vector<double> prior(m, 0.0);
    for (const auto& mask : stack.masks())
        for (std::size_t i = 0; i < m; ++i) prior[i] += mask[i] ? 1.0 : 0.0;
    for (auto& v : prior) v /= static_cast<double>(n_obs);

    const auto clamp_param = [](double v) { return std::clamp(v, 0.01, 0.99); };
    std::vector<double> p(n_obs, clamp_param(0.9999)); // sensitivity
    std::vector<double> q(n_obs, clamp_param(0.9999)); // specificity

    std::vector<double> w = prior;
    int iter = 0;
    bool converged = false;
    for (; iter < max_iter; ++iter) {
        // M-step from the current weights.
        double w_sum = 0.0;
        for (const double v : w) w_sum += v;
        const double notw_sum = static_cast<double>(m) - w_sum;
        for (std::size_t j = 0; j < n_obs; ++j) {
            const auto& mask = stack.masks()[j];
            double hit = 0.0, rej = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                if (mask[i])
                    hit += w[i];
                else
                    rej += 1.0 - w[i];
            }
            if (w_sum > 0.0) p[j] = clamp_param(hit / w_sum);
            if (notw_sum > 0.0) q[j] = clamp_param(rej / notw_sum);
        }

        // E-step: posterior foreground weight per voxel.
        double max_change = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double a = prior[i];
            double b = 1.0 - prior[i];
            for (std::size_t j = 0; j < n_obs; ++j) {
                if (stack.masks()[j][i]) {
                    a *= p[j];
                    b *= 1.0 - q[j];
                } else {
                    a *= 1.0 - p[j];
                    b *= q[j];
                }
            }
            const double next = (a + b) > 0.0 ? a / (a + b) : prior[i];
            max_change = std::max(max_change, std::abs(next - w[i]));
            w[i] = next;
        }
        if (max_change < tol) {
            converged = true;
            ++iter;
            break;
        }
    }

    std::vector<std::uint8_t> consensus(m);
    for (std::size_t i = 0; i < m; ++i) consensus[i] = w[i] >= 0.5 ? 1 : 0;
    return StapleResult{BinaryMask(stack.dims(), stack.spacing(), std::move(consensus)),
                        std::move(p),
                        std::move(q),
                        std::move(w),
                        iter,
                        converged};
}

} // namespace lesioneval
