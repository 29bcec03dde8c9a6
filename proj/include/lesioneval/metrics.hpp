#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lesioneval/core.hpp"

namespace lesioneval {

/// Patient-level voxel segmentation scores.
struct SegScores {
    double dsc = 0.0;
    double fpv_ml = 0.0;
    double fnv_ml = 0.0;
};

/// Dice similarity coefficient 2|G∩P| / (|G|+|P|). Two empty masks score
/// 1.0 so lesion-free studies stay defined; one empty mask scores 0.0.
inline double dsc(const BinaryMask& gt, const BinaryMask& pred) {
    require_same_geometry(gt, pred, "dsc");
    std::size_t ng = 0, np = 0, ni = 0;
    const auto& g = gt.data();
    const auto& p = pred.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
        ng += g[i];
        np += p[i];
        ni += static_cast<std::size_t>(g[i] & p[i]);
    }
    if (ng + np == 0) return 1.0;
    return 2.0 * static_cast<double>(ni) / static_cast<double>(ng + np);
}

/// Smoothed binary Dice loss 1 - (2*sum(p*g) + eps) / (sum(p+g) + eta)
/// over one whole volume.
inline double soft_dice_loss(const ScalarVolume& pred_probs, const BinaryMask& gt,
                             double eps = 1e-5, double eta = 1e-5) {
    require_same_geometry(gt, pred_probs, "soft_dice_loss");
    double overlap = 0.0, total = 0.0;
    const auto& g = gt.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double p = pred_probs[i];
        if (p < 0.0 || p > 1.0)
            throw parameter_error("predicted probability outside [0,1] at voxel index " +
                                  std::to_string(i));
        overlap += p * g[i];
        total += p + g[i];
    }
    return 1.0 - (2.0 * overlap + eps) / (total + eta);
}

/// Total volume (ml) of predicted components with zero overlap against the
/// ground truth foreground.
inline double fpv(const BinaryMask& gt, const LabeledComponents& pred_cc) {
    if (!pred_cc.same_geometry(gt)) throw geometry_error("fpv: geometry mismatch");
    const double vox_ml = pred_cc.spacing.voxel_volume_ml();
    std::size_t false_voxels = 0;
    for (const auto& comp : pred_cc.voxels) {
        bool touches = false;
        for (const std::size_t idx : comp) {
            if (gt[idx]) {
                touches = true;
                break;
            }
        }
        if (!touches) false_voxels += comp.size();
    }
    return vox_ml * static_cast<double>(false_voxels);
}

/// Total volume (ml) of ground truth components with zero overlap against
/// the predicted foreground.
inline double fnv(const LabeledComponents& gt_cc, const BinaryMask& pred) {
    if (!gt_cc.same_geometry(pred)) throw geometry_error("fnv: geometry mismatch");
    const double vox_ml = gt_cc.spacing.voxel_volume_ml();
    std::size_t missed_voxels = 0;
    for (const auto& comp : gt_cc.voxels) {
        bool touched = false;
        for (const std::size_t idx : comp) {
            if (pred[idx]) {
                touched = true;
                break;
            }
        }
        if (!touched) missed_voxels += comp.size();
    }
    return vox_ml * static_cast<double>(missed_voxels);
}

} // namespace lesioneval
