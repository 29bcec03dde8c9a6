#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "lesioneval/core.hpp"

namespace lesioneval {

namespace detail {

/// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double beta_cf(double a, double b, double x) {
    constexpr int max_iter = 500;
    constexpr double eps = 1e-16;
    constexpr double fpmin = 1e-300;

    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

/// Regularized incomplete beta I_x(a, b), relative error well below 1e-12
/// over the t-distribution range used here.
inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log(1.0 - x);
    const double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * beta_cf(a, b, x) / a;
    return 1.0 - bt * beta_cf(b, a, 1.0 - x) / b;
}

/// Two-sided p-value of a Student t statistic.
inline double t_two_sided_p(double t, double df) {
    if (std::isinf(t)) return 0.0;
    const double x = df / (df + t * t);
    return incomplete_beta(df / 2.0, 0.5, x);
}

} // namespace detail

struct PairedTestResult {
    double t_stat = 0.0;
    double p_value = 1.0;
    int n = 0;
    double alpha_corrected = 0.0;
    bool reject = false;
    /// Differences have zero variance; t is 0 or +/-infinity by convention.
    bool degenerate = false;
};

/// Two-sided paired Student's t-test with Bonferroni-corrected alpha.
inline PairedTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b,
                                      double alpha = 0.05, int n_tests = 1) {
    if (a.size() != b.size()) throw parameter_error("paired_t_test: length mismatch");
    if (a.size() < 2) throw parameter_error("paired_t_test: need at least two pairs");
    if (!(alpha > 0.0 && alpha < 1.0)) throw parameter_error("paired_t_test: alpha out of range");
    if (n_tests < 1) throw parameter_error("paired_t_test: n_tests must be positive");

    const std::size_t n = a.size();
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = (a[i] - b[i]) - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));

    PairedTestResult r;
    r.n = static_cast<int>(n);
    r.alpha_corrected = alpha / static_cast<double>(n_tests);
    if (sd == 0.0) {
        r.degenerate = true;
        if (mean == 0.0) {
            r.t_stat = 0.0;
            r.p_value = 1.0;
        } else {
            r.t_stat = mean > 0.0 ? std::numeric_limits<double>::infinity()
                                  : -std::numeric_limits<double>::infinity();
            r.p_value = 0.0;
        }
    } else {
        r.t_stat = mean / (sd / std::sqrt(static_cast<double>(n)));
        r.p_value = detail::t_two_sided_p(r.t_stat, static_cast<double>(n - 1));
    }
    r.reject = r.p_value < r.alpha_corrected;
    return r;
}

struct Summary {
    double mean = 0.0;
    double sd = 0.0;
    double median = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
};

/// Linear-interpolation quantile between order statistics (type 7).
/// `sorted` must be ascending and nonempty.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw parameter_error("quantile of empty list");
    if (q <= 0.0) return sorted.front();
    if (q >= 1.0) return sorted.back();
    const double h = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    const double frac = h - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline Summary summary(const std::vector<double>& values) {
    if (values.empty()) throw parameter_error("summary of empty list");
    Summary s;
    for (const double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (const double v : values) ss += (v - s.mean) * (v - s.mean);
        s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    s.median = quantile_sorted(sorted, 0.5);
    s.q25 = quantile_sorted(sorted, 0.25);
    s.q75 = quantile_sorted(sorted, 0.75);
    return s;
}

inline double median(const std::vector<double>& values) {
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    return quantile_sorted(sorted, 0.5);
}

/// Values bucketed over an axis. For error curves `bin_edges` has one more
/// entry than `bin_values` (half-open bins, last bin closed); for
/// threshold curves the edges are the thresholds themselves, one per value.
struct BinnedCurve {
    std::vector<double> bin_edges;
    std::vector<double> bin_values;
    std::vector<std::size_t> bin_counts;
};

/// Per-bin MAPE of predictions bucketed by the original value, with
/// logarithmic bins below `log_linear_break` and linear bins of width
/// `linear_step` above it. Cases whose original value is not strictly
/// positive are excluded (MAPE is undefined at zero).
inline BinnedCurve mape_curve(const std::vector<double>& orig, const std::vector<double>& pred,
                              double log_linear_break, int n_log_bins, double linear_step) {
    if (orig.size() != pred.size()) throw parameter_error("mape_curve: length mismatch");
    if (orig.empty()) throw parameter_error("mape_curve: empty input");
    if (!(log_linear_break > 0.0) || !(linear_step > 0.0) || n_log_bins < 1)
        throw parameter_error("mape_curve: break, step and n_log_bins must be positive");

    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    std::size_t included = 0;
    for (const double v : orig) {
        if (v <= 0.0) continue;
        ++included;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (included == 0) throw data_error("mape_curve: every case has a zero original value");

    std::vector<double> edges;
    if (hi <= lo) {
        edges = {lo, hi + std::max(1e-12, std::abs(hi) * 1e-12)};
    } else {
        if (lo < log_linear_break) {
            const double top = std::min(log_linear_break, hi);
            const double ratio = top / lo;
            for (int k = 0; k <= n_log_bins; ++k)
                edges.push_back(lo * std::pow(ratio, static_cast<double>(k) /
                                                         static_cast<double>(n_log_bins)));
        }
        if (hi > log_linear_break) {
            if (edges.empty()) {
                // whole range sits above the break; anchor the linear grid there
                const double start =
                    log_linear_break +
                    std::floor((lo - log_linear_break) / linear_step) * linear_step;
                edges.push_back(start);
            }
            while (edges.back() < hi) edges.push_back(edges.back() + linear_step);
        }
        // numerical guard: enforce strict ascent and cover the max
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
        if (edges.back() < hi) edges.push_back(hi);
    }

    const std::size_t n_bins = edges.size() - 1;
    std::vector<double> acc(n_bins, 0.0);
    std::vector<std::size_t> counts(n_bins, 0);
    for (std::size_t i = 0; i < orig.size(); ++i) {
        if (orig[i] <= 0.0) continue;
        const double v = orig[i];
        auto it = std::upper_bound(edges.begin(), edges.end(), v);
        std::size_t bin = static_cast<std::size_t>(it - edges.begin());
        bin = bin == 0 ? 0 : bin - 1;
        if (bin >= n_bins) bin = n_bins - 1; // max value lands in the last bin
        acc[bin] += std::abs((pred[i] - v) / v);
        ++counts[bin];
    }

    BinnedCurve curve;
    curve.bin_edges = std::move(edges);
    curve.bin_counts = counts;
    curve.bin_values.resize(n_bins);
    for (std::size_t b = 0; b < n_bins; ++b)
        curve.bin_values[b] = counts[b] > 0
                                  ? 100.0 * acc[b] / static_cast<double>(counts[b])
                                  : std::numeric_limits<double>::quiet_NaN();
    return curve;
}

/// Median DSC over the shrinking case subsets {i : measure_i >= t}, with t
/// swept from the minimum to the `upper_quantile` quantile of the measure
/// in increments of `step`.
inline BinnedCurve threshold_subset_dsc(const std::vector<double>& measure_values,
                                        const std::vector<double>& dsc_values, double step,
                                        double upper_quantile = 0.85) {
    if (measure_values.size() != dsc_values.size())
        throw parameter_error("threshold_subset_dsc: length mismatch");
    if (measure_values.empty()) throw parameter_error("threshold_subset_dsc: empty input");
    if (!(step > 0.0)) throw parameter_error("threshold_subset_dsc: step must be positive");
    if (!(upper_quantile > 0.0 && upper_quantile <= 1.0))
        throw parameter_error("threshold_subset_dsc: quantile out of range");

    std::vector<double> sorted = measure_values;
    std::sort(sorted.begin(), sorted.end());
    const double t_min = sorted.front();
    const double t_cap = quantile_sorted(sorted, upper_quantile);

    BinnedCurve curve;
    for (int k = 0;; ++k) {
        const double t = t_min + static_cast<double>(k) * step;
        if (t > t_cap + 1e-12 * std::max(1.0, std::abs(t_cap))) break;
        std::vector<double> subset;
        for (std::size_t i = 0; i < measure_values.size(); ++i)
            if (measure_values[i] >= t) subset.push_back(dsc_values[i]);
        curve.bin_edges.push_back(t);
        curve.bin_values.push_back(median(subset));
        curve.bin_counts.push_back(subset.size());
    }
    return curve;
}

} // namespace lesioneval
