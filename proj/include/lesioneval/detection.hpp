#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

#include "lesioneval/core.hpp"

namespace lesioneval {

/// One-to-one lesion correspondence. Pairs are sorted by ascending
/// (gt_label, pred_label) and always have iou > 0.
struct MatchTable {
    struct Pair {
        int gt_label = 0;
        int pred_label = 0;
        double iou = 0.0;
    };
    std::vector<Pair> pairs;
    std::vector<int> unmatched_gt;
    std::vector<int> unmatched_pred;

    int gt_count() const {
        return static_cast<int>(pairs.size() + unmatched_gt.size());
    }
};

enum class Criterion { C1 = 1, C2 = 2, C3 = 3 };

/// Per-lesion detection counts for one case. `fn` treats a ground truth
/// lesion whose matched prediction fails the criterion as missed, keeping
/// tp + fn equal to the lesion count; `fn_strict` counts only lesions with
/// no match at all. With no ground truth lesions sensitivity is undefined
/// and reported as NaN with `no_gt_lesions` set.
struct DetectionOutcome {
    Criterion criterion = Criterion::C1;
    long tp = 0;
    long fp = 0;
    long fn = 0;
    long fn_strict = 0;
    double sensitivity = std::numeric_limits<double>::quiet_NaN();
    bool no_gt_lesions = false;
};

namespace detail {

constexpr double kAssignmentEps = 1e-9;

/// Minimum-cost perfect assignment on a dense square matrix
/// (shortest augmenting path, O(n^3)). Returns row -> column.
inline std::vector<int> hungarian_min_cost(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    if (n == 0) return {};
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

/// Maximum achievable IoU total for a weight matrix (zero entries mean
/// "no pairing allowed"), restricted to rows/cols not masked out.
inline double max_total_weight(const std::vector<std::vector<double>>& w,
                               const std::vector<char>& row_active,
                               const std::vector<char>& col_active) {
    std::vector<int> rows, cols;
    for (int i = 0; i < static_cast<int>(row_active.size()); ++i)
        if (row_active[i]) rows.push_back(i);
    for (int j = 0; j < static_cast<int>(col_active.size()); ++j)
        if (col_active[j]) cols.push_back(j);
    const int n = static_cast<int>(std::max(rows.size(), cols.size()));
    if (n == 0) return 0.0;
    std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
    for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t b = 0; b < cols.size(); ++b) cost[a][b] = -w[rows[a]][cols[b]];
    const auto assign = hungarian_min_cost(cost);
    double total = 0.0;
    for (std::size_t a = 0; a < rows.size(); ++a) {
        const int b = assign[a];
        if (b >= 0 && b < static_cast<int>(cols.size())) total += w[rows[a]][cols[b]];
    }
    return total;
}

/// Canonical maximum-total matching on one weight matrix: among all
/// matchings reaching the optimum, commits pairs greedily in ascending
/// (row, col) order, which yields the lexicographically smallest pair list.
inline std::vector<std::pair<int, int>> canonical_max_matching(
    const std::vector<std::vector<double>>& w) {
    const int nr = static_cast<int>(w.size());
    const int nc = nr > 0 ? static_cast<int>(w[0].size()) : 0;
    std::vector<char> row_active(nr, 1), col_active(nc, 1);
    const double opt = max_total_weight(w, row_active, col_active);
    std::vector<std::pair<int, int>> fixed;
    double fixed_total = 0.0;
    for (int i = 0; i < nr; ++i) {
        for (int j = 0; j < nc; ++j) {
            if (!col_active[j] || w[i][j] <= 0.0) continue;
            row_active[i] = 0;
            col_active[j] = 0;
            const double rest = max_total_weight(w, row_active, col_active);
            if (fixed_total + w[i][j] + rest >= opt - kAssignmentEps) {
                fixed.emplace_back(i, j);
                fixed_total += w[i][j];
                break; // row committed
            }
            row_active[i] = 1;
            col_active[j] = 1;
        }
        // If no column committed, every optimal completion leaves row i
        // unmatched; keep it active, it cannot change later totals.
    }
    return fixed;
}

struct OverlapEdges {
    // Keyed by gt label then pred label, ascending. iou strictly positive.
    struct Edge {
        int gt = 0;
        int pred = 0;
        double iou = 0.0;
    };
    std::vector<Edge> edges;
};

inline OverlapEdges overlap_edges(const LabeledComponents& gt_cc,
                                  const LabeledComponents& pred_cc) {
    std::unordered_map<std::uint64_t, std::size_t> inter;
    for (std::size_t i = 0; i < gt_cc.labels.size(); ++i) {
        const std::int32_t g = gt_cc.labels[i];
        const std::int32_t p = pred_cc.labels[i];
        if (g > 0 && p > 0)
            ++inter[(static_cast<std::uint64_t>(g) << 32) | static_cast<std::uint32_t>(p)];
    }
    OverlapEdges out;
    out.edges.reserve(inter.size());
    for (const auto& [key, count] : inter) {
        const int g = static_cast<int>(key >> 32);
        const int p = static_cast<int>(key & 0xffffffffu);
        const std::size_t uni =
            gt_cc.component_size(g) + pred_cc.component_size(p) - count;
        out.edges.push_back({g, p, static_cast<double>(count) / static_cast<double>(uni)});
    }
    std::sort(out.edges.begin(), out.edges.end(), [](const auto& a, const auto& b) {
        return a.gt != b.gt ? a.gt < b.gt : a.pred < b.pred;
    });
    return out;
}

} // namespace detail

/// Match predicted lesions to ground truth lesions one-to-one so the total
/// IoU over matched pairs is maximal; pairs with zero IoU are never formed.
/// Ties between equally good matchings resolve to the lexicographically
/// smallest pair list by (gt_label, pred_label).
inline MatchTable match_lesions(const LabeledComponents& gt_cc,
                                const LabeledComponents& pred_cc) {
    if (!gt_cc.same_geometry(pred_cc)) throw geometry_error("match_lesions: geometry mismatch");

    const auto overlaps = detail::overlap_edges(gt_cc, pred_cc);

    // Group labels into connected pieces of the overlap graph; the optimal
    // assignment and its tie-break decompose over them.
    const int ng = gt_cc.count, np = pred_cc.count;
    std::vector<int> parent(ng + np);
    for (int i = 0; i < ng + np; ++i) parent[i] = i;
    const auto find = [&parent](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& e : overlaps.edges) {
        const int a = find(e.gt - 1), b = find(ng + e.pred - 1);
        if (a != b) parent[a] = b;
    }

    std::unordered_map<int, std::vector<const detail::OverlapEdges::Edge*>> groups;
    for (const auto& e : overlaps.edges) groups[find(e.gt - 1)].push_back(&e);

    MatchTable table;
    std::vector<char> gt_matched(static_cast<std::size_t>(ng) + 1, 0);
    std::vector<char> pred_matched(static_cast<std::size_t>(np) + 1, 0);

    std::vector<int> group_roots;
    group_roots.reserve(groups.size());
    for (const auto& [root, _] : groups) group_roots.push_back(root);
    std::sort(group_roots.begin(), group_roots.end());

    for (const int root : group_roots) {
        const auto& edges = groups[root];
        std::vector<int> gl, pl; // sorted local label maps
        for (const auto* e : edges) {
            gl.push_back(e->gt);
            pl.push_back(e->pred);
        }
        std::sort(gl.begin(), gl.end());
        gl.erase(std::unique(gl.begin(), gl.end()), gl.end());
        std::sort(pl.begin(), pl.end());
        pl.erase(std::unique(pl.begin(), pl.end()), pl.end());

        std::vector<std::vector<double>> w(gl.size(), std::vector<double>(pl.size(), 0.0));
        for (const auto* e : edges) {
            const auto gi = std::lower_bound(gl.begin(), gl.end(), e->gt) - gl.begin();
            const auto pi = std::lower_bound(pl.begin(), pl.end(), e->pred) - pl.begin();
            w[static_cast<std::size_t>(gi)][static_cast<std::size_t>(pi)] = e->iou;
        }
        for (const auto& [gi, pi] : detail::canonical_max_matching(w)) {
            const int g = gl[static_cast<std::size_t>(gi)];
            const int p = pl[static_cast<std::size_t>(pi)];
            table.pairs.push_back({g, p, w[static_cast<std::size_t>(gi)][static_cast<std::size_t>(pi)]});
            gt_matched[static_cast<std::size_t>(g)] = 1;
            pred_matched[static_cast<std::size_t>(p)] = 1;
        }
    }

    std::sort(table.pairs.begin(), table.pairs.end(), [](const auto& a, const auto& b) {
        return a.gt_label != b.gt_label ? a.gt_label < b.gt_label : a.pred_label < b.pred_label;
    });
    for (int g = 1; g <= ng; ++g)
        if (!gt_matched[static_cast<std::size_t>(g)]) table.unmatched_gt.push_back(g);
    for (int p = 1; p <= np; ++p)
        if (!pred_matched[static_cast<std::size_t>(p)]) table.unmatched_pred.push_back(p);
    return table;
}

namespace detail {

inline DetectionOutcome finish_outcome(Criterion c, long tp, long fp, long fn_effective,
                                       long fn_strict, long gt_detected, long l_g) {
    DetectionOutcome out;
    out.criterion = c;
    out.tp = tp;
    out.fp = fp;
    out.fn = fn_effective;
    out.fn_strict = fn_strict;
    if (l_g > 0)
        out.sensitivity = static_cast<double>(gt_detected) / static_cast<double>(l_g);
    else
        out.no_gt_lesions = true;
    return out;
}

} // namespace detail

/// Criterion 1: a predicted lesion counts as detected if any of its voxels
/// overlaps any ground truth lesion; a ground truth lesion is missed only
/// if nothing overlaps it.
inline DetectionOutcome criterion1(const LabeledComponents& gt_cc,
                                   const LabeledComponents& pred_cc) {
    if (!gt_cc.same_geometry(pred_cc)) throw geometry_error("criterion1: geometry mismatch");
    std::vector<char> gt_hit(static_cast<std::size_t>(gt_cc.count) + 1, 0);
    std::vector<char> pred_hit(static_cast<std::size_t>(pred_cc.count) + 1, 0);
    for (std::size_t i = 0; i < gt_cc.labels.size(); ++i) {
        const std::int32_t g = gt_cc.labels[i];
        const std::int32_t p = pred_cc.labels[i];
        if (g > 0 && p > 0) {
            gt_hit[static_cast<std::size_t>(g)] = 1;
            pred_hit[static_cast<std::size_t>(p)] = 1;
        }
    }
    long tp = 0, fn = 0;
    for (int g = 1; g <= gt_cc.count; ++g) fn += gt_hit[static_cast<std::size_t>(g)] ? 0 : 1;
    for (int p = 1; p <= pred_cc.count; ++p) tp += pred_hit[static_cast<std::size_t>(p)] ? 1 : 0;
    const long fp = pred_cc.count - tp;
    return detail::finish_outcome(Criterion::C1, tp, fp, fn, fn, gt_cc.count - fn, gt_cc.count);
}

/// Criterion 2: a matched pair counts as detected only when its IoU
/// reaches the threshold (inclusive).
inline DetectionOutcome criterion2(const MatchTable& match, double threshold = 0.5) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw parameter_error("criterion2 threshold must lie in (0,1]");
    long tp = 0, below = 0;
    for (const auto& pr : match.pairs) (pr.iou >= threshold ? tp : below) += 1;
    const long fp = below + static_cast<long>(match.unmatched_pred.size());
    const long fn_strict = static_cast<long>(match.unmatched_gt.size());
    return detail::finish_outcome(Criterion::C2, tp, fp, fn_strict + below, fn_strict, tp,
                                  match.gt_count());
}

/// Criterion 3: a matched pair counts as detected when the prediction mask
/// covers the ground truth lesion's hottest voxel (ties on SUV resolve to
/// the smallest linear index).
inline DetectionOutcome criterion3(const MatchTable& match, const LabeledComponents& gt_cc,
                                   const BinaryMask& pred_mask, const ScalarVolume& suv) {
    if (!gt_cc.same_geometry(pred_mask)) throw geometry_error("criterion3: geometry mismatch");
    require_same_geometry(pred_mask, suv, "criterion3");

    long tp = 0, miss = 0;
    for (const auto& pr : match.pairs) {
        const auto& vox = gt_cc.voxels[static_cast<std::size_t>(pr.gt_label) - 1];
        std::size_t best = vox.front();
        float best_suv = suv[best];
        for (const std::size_t idx : vox) {
            if (suv[idx] > best_suv) {
                best_suv = suv[idx];
                best = idx;
            }
        }
        (pred_mask[best] ? tp : miss) += 1;
    }
    const long fp = miss + static_cast<long>(match.unmatched_pred.size());
    const long fn_strict = static_cast<long>(match.unmatched_gt.size());
    return detail::finish_outcome(Criterion::C3, tp, fp, fn_strict + miss, fn_strict, tp,
                                  match.gt_count());
}

} // namespace lesioneval
