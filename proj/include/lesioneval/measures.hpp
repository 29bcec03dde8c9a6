#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

#include "lesioneval/core.hpp"

namespace lesioneval {

/// Patient-level lesion measures. `empty` marks a case without foreground,
/// where every field is zero.
struct LesionMeasures {
    double suv_mean = 0.0;
    double suv_max = 0.0;
    int n_lesions = 0;
    double tmtv_ml = 0.0;
    double tlg_ml = 0.0;
    double dmax_cm = 0.0;
    bool empty = true;
};

namespace detail {

using Point3 = std::array<double, 3>;

inline double sqdist(const Point3& a, const Point3& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

inline double max_sqdist_allpairs(const std::vector<Point3>& pts) {
    double best = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
            best = std::max(best, sqdist(pts[i], pts[j]));
    return best;
}

/// Keep only points extremal along each axis within their orthogonal
/// lattice column. Every convex hull vertex is min or max along each axis
/// among points sharing the other two coordinates, so the reduced set
/// still contains both diameter endpoints.
inline std::vector<Point3> extremal_candidates(const std::vector<std::array<int, 3>>& vox,
                                               const Spacing& s) {
    struct MinMax {
        int lo, hi;
    };
    const auto key = [](int a, int b) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
               static_cast<std::uint32_t>(b);
    };
    std::unordered_map<std::uint64_t, MinMax> colx, coly, colz;
    const auto update = [](std::unordered_map<std::uint64_t, MinMax>& m, std::uint64_t k, int v) {
        auto [it, inserted] = m.try_emplace(k, MinMax{v, v});
        if (!inserted) {
            it->second.lo = std::min(it->second.lo, v);
            it->second.hi = std::max(it->second.hi, v);
        }
    };
    for (const auto& p : vox) {
        update(colx, key(p[1], p[2]), p[0]);
        update(coly, key(p[0], p[2]), p[1]);
        update(colz, key(p[0], p[1]), p[2]);
    }
    std::vector<Point3> out;
    for (const auto& p : vox) {
        const auto& mx = colx.at(key(p[1], p[2]));
        if (p[0] != mx.lo && p[0] != mx.hi) continue;
        const auto& my = coly.at(key(p[0], p[2]));
        if (p[1] != my.lo && p[1] != my.hi) continue;
        const auto& mz = colz.at(key(p[0], p[1]));
        if (p[2] != mz.lo && p[2] != mz.hi) continue;
        out.push_back({(p[0] + 0.5) * s.dx, (p[1] + 0.5) * s.dy, (p[2] + 0.5) * s.dz});
    }
    return out;
}

inline Point3 cross(const Point3& a, const Point3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

inline Point3 sub(const Point3& a, const Point3& b) {
    return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

inline double dot(const Point3& a, const Point3& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

inline double norm(const Point3& a) { return std::sqrt(dot(a, a)); }

/// Quickhull over a candidate cloud. The result is every input point not
/// strictly inside the finished hull (a final sweep over all faces), so
/// eps-coplanar points on flat faces and any point missed by outside-set
/// bookkeeping still survive as diameter candidates. Falls back to the
/// input when the cloud is rank-deficient.
inline std::vector<Point3> hull_candidates(const std::vector<Point3>& pts) {
    const std::size_t n = pts.size();
    if (n <= 4) return pts;

    Point3 lo = pts[0], hi = pts[0];
    for (const auto& p : pts)
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    const double diag = norm(sub(hi, lo));
    const double eps = std::max(1e-12, 1e-9 * diag);

    // Initial simplex: farthest pair among axis extremes, then the point
    // farthest from their line, then from their plane.
    std::array<std::size_t, 6> ext{};
    for (int a = 0; a < 3; ++a) {
        std::size_t imin = 0, imax = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (pts[i][a] < pts[imin][a]) imin = i;
            if (pts[i][a] > pts[imax][a]) imax = i;
        }
        ext[static_cast<std::size_t>(2 * a)] = imin;
        ext[static_cast<std::size_t>(2 * a + 1)] = imax;
    }
    std::size_t v0 = ext[0], v1 = ext[1];
    double best = -1.0;
    for (std::size_t a = 0; a < 6; ++a)
        for (std::size_t b = a + 1; b < 6; ++b) {
            const double d = sqdist(pts[ext[a]], pts[ext[b]]);
            if (d > best) {
                best = d;
                v0 = ext[a];
                v1 = ext[b];
            }
        }
    if (std::sqrt(best) <= eps) return pts; // all points coincide

    const Point3 axis = sub(pts[v1], pts[v0]);
    std::size_t v2 = n;
    best = eps;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = norm(cross(axis, sub(pts[i], pts[v0]))) / norm(axis);
        if (d > best) {
            best = d;
            v2 = i;
        }
    }
    if (v2 == n) return pts; // collinear cloud

    Point3 base_n = cross(axis, sub(pts[v2], pts[v0]));
    const double bl = norm(base_n);
    base_n = {base_n[0] / bl, base_n[1] / bl, base_n[2] / bl};
    std::size_t v3 = n;
    best = eps;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = std::abs(dot(base_n, sub(pts[i], pts[v0])));
        if (d > best) {
            best = d;
            v3 = i;
        }
    }
    if (v3 == n) return pts; // coplanar cloud

    struct Face {
        std::array<std::size_t, 3> v;
        Point3 normal;
        double offset;
        std::vector<std::size_t> outside;
        bool alive = true;
    };

    Point3 interior{};
    for (const std::size_t i : {v0, v1, v2, v3})
        for (int a = 0; a < 3; ++a) interior[a] += pts[i][a] / 4.0;

    std::vector<Face> faces;
    const auto add_face = [&](std::size_t a, std::size_t b, std::size_t c) -> std::size_t {
        Face f;
        f.v = {a, b, c};
        Point3 nrm = cross(sub(pts[b], pts[a]), sub(pts[c], pts[a]));
        const double len = norm(nrm);
        if (len <= 0.0) {
            f.normal = {0, 0, 0};
            f.offset = 0;
            f.alive = false;
        } else {
            nrm = {nrm[0] / len, nrm[1] / len, nrm[2] / len};
            double off = dot(nrm, pts[a]);
            if (dot(nrm, interior) - off > 0) {
                nrm = {-nrm[0], -nrm[1], -nrm[2]};
                off = -off;
            }
            f.normal = nrm;
            f.offset = off;
        }
        faces.push_back(std::move(f));
        return faces.size() - 1;
    };
    const auto face_dist = [&](const Face& f, const Point3& p) {
        return dot(f.normal, p) - f.offset;
    };

    add_face(v0, v1, v2);
    add_face(v0, v1, v3);
    add_face(v0, v2, v3);
    add_face(v1, v2, v3);

    std::vector<char> is_vertex(n, 0);
    for (const std::size_t i : {v0, v1, v2, v3}) is_vertex[i] = 1;

    const auto assign_point = [&](std::size_t pi, const std::vector<std::size_t>& face_ids) {
        if (is_vertex[pi]) return;
        double best_d = -std::numeric_limits<double>::infinity();
        std::size_t best_f = faces.size();
        for (const std::size_t fi : face_ids) {
            if (!faces[fi].alive) continue;
            const double d = face_dist(faces[fi], pts[pi]);
            if (d > best_d) {
                best_d = d;
                best_f = fi;
            }
        }
        if (best_f == faces.size()) return;
        if (best_d > eps) faces[best_f].outside.push_back(pi);
        // points below every tested face wait for the final sweep
    };

    {
        std::vector<std::size_t> initial{0, 1, 2, 3};
        for (std::size_t i = 0; i < n; ++i) assign_point(i, initial);
    }

    std::vector<std::size_t> pending;
    for (std::size_t fi = 0; fi < faces.size(); ++fi)
        if (!faces[fi].outside.empty()) pending.push_back(fi);

    while (!pending.empty()) {
        const std::size_t fi = pending.back();
        pending.pop_back();
        if (!faces[fi].alive || faces[fi].outside.empty()) continue;

        double far_d = -1.0;
        std::size_t far_p = 0;
        for (const std::size_t pi : faces[fi].outside) {
            const double d = face_dist(faces[fi], pts[pi]);
            if (d > far_d) {
                far_d = d;
                far_p = pi;
            }
        }

        std::vector<std::size_t> visible;
        for (std::size_t k = 0; k < faces.size(); ++k)
            if (faces[k].alive && face_dist(faces[k], pts[far_p]) > eps) visible.push_back(k);

        // Horizon: undirected edges appearing in exactly one visible face.
        std::unordered_map<std::uint64_t, int> edge_count;
        const auto ekey = [](std::size_t a, std::size_t b) {
            if (a > b) std::swap(a, b);
            return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
        };
        for (const std::size_t k : visible)
            for (int e = 0; e < 3; ++e)
                ++edge_count[ekey(faces[k].v[static_cast<std::size_t>(e)],
                                  faces[k].v[static_cast<std::size_t>((e + 1) % 3)])];

        std::vector<std::size_t> orphans;
        for (const std::size_t k : visible) {
            faces[k].alive = false;
            orphans.insert(orphans.end(), faces[k].outside.begin(), faces[k].outside.end());
            faces[k].outside.clear();
        }

        is_vertex[far_p] = 1;
        std::vector<std::size_t> fresh;
        for (const std::size_t k : visible)
            for (int e = 0; e < 3; ++e) {
                const std::size_t a = faces[k].v[static_cast<std::size_t>(e)];
                const std::size_t b = faces[k].v[static_cast<std::size_t>((e + 1) % 3)];
                if (edge_count[ekey(a, b)] != 1) continue;
                const std::size_t nf = add_face(a, b, far_p);
                if (faces[nf].alive) fresh.push_back(nf);
            }

        for (const std::size_t pi : orphans) assign_point(pi, fresh);
        for (const std::size_t k : fresh)
            if (!faces[k].outside.empty()) pending.push_back(k);
    }

    // Exact final sweep: keep every point on or outside the hull surface.
    std::vector<const Face*> alive;
    for (const auto& f : faces)
        if (f.alive) alive.push_back(&f);
    std::vector<Point3> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (is_vertex[i]) {
            out.push_back(pts[i]);
            continue;
        }
        for (const Face* f : alive) {
            if (face_dist(*f, pts[i]) > -eps) {
                out.push_back(pts[i]);
                break;
            }
        }
    }
    return out;
}

} // namespace detail

/// Maximum pairwise Euclidean distance between foreground voxel centers
/// (mm). Below `allpairs_threshold` foreground voxels this is a direct
/// scan; above, candidates are first cut to per-axis column extremes
/// (an exact superset of the convex hull vertices) and, past
/// `hull_threshold` candidates, to the hull vertex cloud itself.
inline double max_pairwise_distance_mm(const BinaryMask& mask,
                                       std::size_t allpairs_threshold = 1000,
                                       std::size_t hull_threshold = 4096) {
    const Dims d = mask.dims();
    const Spacing s = mask.spacing();
    std::vector<std::array<int, 3>> vox;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) vox.push_back(unravel_index(d, i));
    if (vox.size() <= 1) return 0.0;

    if (vox.size() < allpairs_threshold) {
        std::vector<detail::Point3> pts;
        pts.reserve(vox.size());
        for (const auto& p : vox)
            pts.push_back({(p[0] + 0.5) * s.dx, (p[1] + 0.5) * s.dy, (p[2] + 0.5) * s.dz});
        return std::sqrt(detail::max_sqdist_allpairs(pts));
    }

    std::vector<detail::Point3> candidates = detail::extremal_candidates(vox, s);
    if (candidates.size() > hull_threshold) candidates = detail::hull_candidates(candidates);
    return std::sqrt(detail::max_sqdist_allpairs(candidates));
}

/// Compute the six patient-level measures from an SUV volume, a foreground
/// mask, and that mask's labeled components.
inline LesionMeasures lesion_measures(const ScalarVolume& suv, const BinaryMask& mask,
                                      const LabeledComponents& cc,
                                      std::size_t dmax_allpairs_threshold = 1000) {
    if (suv.unit() != Unit::SUV) throw parameter_error("lesion_measures expects an SUV volume");
    require_same_geometry(mask, suv, "lesion_measures");
    if (!cc.same_geometry(mask)) throw geometry_error("lesion_measures: geometry mismatch");

    LesionMeasures out;
    std::size_t fg = 0;
    double sum = 0.0;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        ++fg;
        sum += suv[i];
        mx = std::max(mx, static_cast<double>(suv[i]));
    }
    if (fg == 0) return out; // all-zero record, empty flag set

    const double vox_ml = mask.spacing().voxel_volume_ml();
    out.empty = false;
    out.suv_mean = sum / static_cast<double>(fg);
    out.suv_max = mx;
    out.n_lesions = cc.count;
    out.tmtv_ml = vox_ml * static_cast<double>(fg);
    out.tlg_ml = vox_ml * sum;
    out.dmax_cm = max_pairwise_distance_mm(mask, dmax_allpairs_threshold) / 10.0;
    return out;
}

/// Mean absolute percentage error with cases excluded where the original
/// value is zero; the exclusion count is reported alongside the value.
struct MapeResult {
    double value_pct = 0.0;
    std::size_t n_used = 0;
    std::size_t n_excluded = 0;
};

inline MapeResult mape(const std::vector<double>& orig, const std::vector<double>& pred) {
    if (orig.size() != pred.size()) throw parameter_error("mape: length mismatch");
    MapeResult r;
    double acc = 0.0;
    for (std::size_t i = 0; i < orig.size(); ++i) {
        if (orig[i] == 0.0) {
            ++r.n_excluded;
            continue;
        }
        acc += std::abs((pred[i] - orig[i]) / orig[i]);
        ++r.n_used;
    }
    if (r.n_used == 0) throw data_error("mape: every case has a zero original value");
    r.value_pct = 100.0 * acc / static_cast<double>(r.n_used);
    return r;
}

} // namespace lesioneval
