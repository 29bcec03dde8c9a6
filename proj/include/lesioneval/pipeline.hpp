#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lesioneval/agreement.hpp"
#include "lesioneval/core.hpp"
#include "lesioneval/detection.hpp"
#include "lesioneval/manifest.hpp"
#include "lesioneval/measures.hpp"
#include "lesioneval/metrics.hpp"
#include "lesioneval/nifti.hpp"
#include "lesioneval/phantom.hpp"
#include "lesioneval/report.hpp"
#include "lesioneval/stats.hpp"
#include "lesioneval/volume.hpp"

namespace lesioneval {

struct PipelineOptions {
    ReportFormat format = ReportFormat::Json;
    int workers = 1;
    Connectivity connectivity = Connectivity::Corners26;
    bool strict = false;
    std::optional<std::uint64_t> seed; // overrides config seeds when set
    bool resample_pred = true;
};

struct CommandResult {
    Report report;
    std::vector<std::string> written_files;
    std::size_t n_failures = 0;
};

namespace detail {

inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    workers = std::clamp(workers, 1, 256);
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    for (auto& th : pool) th.join();
}

inline Cell num(double v) {
    if (std::isnan(v)) return Cell{std::monostate{}};
    return Cell{v};
}

inline Cell integer(long v) { return Cell{static_cast<std::int64_t>(v)}; }

inline const std::vector<std::string>& measure_names() {
    static const std::vector<std::string> names{"suv_mean", "suv_max",  "n_lesions",
                                                "tmtv_ml",  "tlg_ml",   "dmax_cm"};
    return names;
}

inline double measure_value(const LesionMeasures& m, const std::string& name) {
    if (name == "suv_mean") return m.suv_mean;
    if (name == "suv_max") return m.suv_max;
    if (name == "n_lesions") return static_cast<double>(m.n_lesions);
    if (name == "tmtv_ml") return m.tmtv_ml;
    if (name == "tlg_ml") return m.tlg_ml;
    if (name == "dmax_cm") return m.dmax_cm;
    throw parameter_error("unknown measure " + name);
}

/// Threshold sweep step per measure (SUV, SUV, count, ml, ml, cm).
inline double measure_step(const std::string& name) {
    if (name == "suv_mean") return 1.0;
    if (name == "suv_max") return 2.0;
    if (name == "n_lesions") return 1.0;
    if (name == "tmtv_ml") return 25.0;
    if (name == "tlg_ml") return 150.0;
    if (name == "dmax_cm") return 3.0;
    throw parameter_error("unknown measure " + name);
}

struct LoadedCase {
    ScalarVolume pet;
    BinaryMask gt;
    std::vector<std::pair<std::string, BinaryMask>> preds;
};

/// Load one case and bring the PET volume and every prediction onto the
/// ground truth grid (resampling is how predictions from other grids are
/// scored; disable it to require exact geometry instead).
inline LoadedCase load_case_aligned(const CohortCase& c, bool resample_pred) {
    ScalarVolume pet = read_volume(c.pet_path, Unit::SUV);
    auto [gt, gt_warn] = read_mask(c.gt_path);
    (void)gt_warn;

    if (!(pet.dims() == gt.dims() && pet.spacing() == gt.spacing())) {
        if (!resample_pred)
            throw geometry_error(c.case_id + ": PET and ground truth grids differ");
        pet = resample_onto(pet, gt.dims(), gt.spacing(), ResampleMode::Trilinear);
    }

    LoadedCase out{std::move(pet), std::move(gt), {}};
    for (const auto& [model, path] : c.pred_paths) {
        auto [pred, warn] = read_mask(path);
        (void)warn;
        if (!pred.same_geometry(out.gt)) {
            if (!resample_pred)
                throw geometry_error(c.case_id + ": prediction grid differs for model " + model);
            pred = resample_mask_onto(pred, out.gt.dims(), out.gt.spacing());
        }
        out.preds.emplace_back(model, std::move(pred));
    }
    return out;
}

struct EvalRow {
    std::string model; // "ground_truth" for the reference measures row
    bool is_gt = false;
    SegScores seg;
    LesionMeasures measures;
};

struct CaseOutcome {
    std::string case_id;
    std::vector<EvalRow> rows;
    std::string error; // nonempty marks a failed case
};

} // namespace detail

/// Score one case: segmentation metrics plus lesion measures for the
/// ground truth and every prediction.
inline std::vector<detail::EvalRow> evaluate_case(const ScalarVolume& pet, const BinaryMask& gt,
                                                  const std::vector<std::pair<std::string, BinaryMask>>& preds,
                                                  Connectivity conn) {
    std::vector<detail::EvalRow> rows;
    const LabeledComponents gt_cc = connected_components(gt, conn);

    detail::EvalRow gt_row;
    gt_row.model = "ground_truth";
    gt_row.is_gt = true;
    gt_row.measures = lesion_measures(pet, gt, gt_cc);
    rows.push_back(std::move(gt_row));

    for (const auto& [model, pred] : preds) {
        detail::EvalRow row;
        row.model = model;
        const LabeledComponents pred_cc = connected_components(pred, conn);
        row.seg.dsc = dsc(gt, pred);
        row.seg.fpv_ml = fpv(gt, pred_cc);
        row.seg.fnv_ml = fnv(gt_cc, pred);
        row.measures = lesion_measures(pet, pred, pred_cc);
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Evaluate a cohort: per-case scores and measures plus per-model cohort
/// summaries. Failed cases are reported, not fatal.
inline CommandResult cmd_evaluate(const CohortManifest& manifest, const std::string& out_base,
                                  const PipelineOptions& opts) {
    std::vector<detail::CaseOutcome> outcomes(manifest.cases.size());
    detail::parallel_for(manifest.cases.size(), opts.workers, [&](std::size_t i) {
        const CohortCase& c = manifest.cases[i];
        outcomes[i].case_id = c.case_id;
        try {
            const auto loaded = detail::load_case_aligned(c, opts.resample_pred);
            outcomes[i].rows =
                evaluate_case(loaded.pet, loaded.gt, loaded.preds, opts.connectivity);
        } catch (const std::exception& e) {
            outcomes[i].error = e.what();
        }
    });

    CommandResult result;
    std::vector<std::string> case_cols{"case_id", "model",   "dsc",       "fpv_ml",
                                       "fnv_ml",  "suv_mean", "suv_max",  "n_lesions",
                                       "tmtv_ml", "tlg_ml",   "dmax_cm",  "empty_mask"};
    Table& cases = result.report.add_table("cases", case_cols);

    // metric -> model -> values, in first-seen order
    std::vector<std::string> summary_models;
    std::map<std::string, std::map<std::string, std::vector<double>>> pools;
    const auto pool_add = [&](const std::string& model, const std::string& metric, double v) {
        auto& vec = pools[model][metric];
        if (vec.empty() &&
            std::find(summary_models.begin(), summary_models.end(), model) == summary_models.end())
            summary_models.push_back(model);
        vec.push_back(v);
    };

    for (const auto& oc : outcomes) {
        if (!oc.error.empty()) {
            ++result.n_failures;
            continue;
        }
        for (const auto& row : oc.rows) {
            std::vector<Cell> cells;
            cells.emplace_back(oc.case_id);
            cells.emplace_back(row.model);
            if (row.is_gt) {
                cells.emplace_back(std::monostate{});
                cells.emplace_back(std::monostate{});
                cells.emplace_back(std::monostate{});
            } else {
                cells.emplace_back(row.seg.dsc);
                cells.emplace_back(row.seg.fpv_ml);
                cells.emplace_back(row.seg.fnv_ml);
                pool_add(row.model, "dsc", row.seg.dsc);
                pool_add(row.model, "fpv_ml", row.seg.fpv_ml);
                pool_add(row.model, "fnv_ml", row.seg.fnv_ml);
            }
            for (const auto& name : detail::measure_names()) {
                const double v = detail::measure_value(row.measures, name);
                cells.push_back(detail::num(v));
                pool_add(row.model, name, v);
            }
            cells.push_back(detail::integer(row.measures.empty ? 1 : 0));
            cases.add_row(std::move(cells));
        }
    }

    Table& summary_t = result.report.add_table(
        "summary", {"model", "metric", "n", "mean", "sd", "median", "q25", "q75"});
    for (const auto& model : summary_models) {
        for (const auto& [metric, values] : pools[model]) {
            if (values.empty()) continue;
            const Summary s = summary(values);
            summary_t.add_row({Cell{model}, Cell{metric}, detail::integer(static_cast<long>(values.size())),
                               Cell{s.mean}, Cell{s.sd}, Cell{s.median}, Cell{s.q25}, Cell{s.q75}});
        }
    }

    Table& failures = result.report.add_table("failures", {"case_id", "error"});
    for (const auto& oc : outcomes)
        if (!oc.error.empty()) failures.add_row({Cell{oc.case_id}, Cell{oc.error}});

    const std::string ext = opts.format == ReportFormat::Json ? ".json" : ".csv";
    result.written_files = write_report(result.report, opts.format, out_base + ext);
    return result;
}

/// Detection scoring over a cohort for the selected criteria.
inline CommandResult cmd_detect(const CohortManifest& manifest, const std::string& out_base,
                                const PipelineOptions& opts, const std::set<int>& criteria = {1, 2, 3},
                                double iou_threshold = 0.5) {
    for (const int c : criteria)
        if (c < 1 || c > 3) throw parameter_error("detection criteria must be within {1,2,3}");
    if (criteria.empty()) throw parameter_error("no detection criterion selected");

    struct DetectRow {
        std::string model;
        DetectionOutcome outcome;
    };
    struct CaseDetect {
        std::string case_id;
        std::vector<DetectRow> rows;
        std::string error;
    };
    std::vector<CaseDetect> outcomes(manifest.cases.size());

    detail::parallel_for(manifest.cases.size(), opts.workers, [&](std::size_t i) {
        const CohortCase& c = manifest.cases[i];
        outcomes[i].case_id = c.case_id;
        try {
            const auto loaded = detail::load_case_aligned(c, opts.resample_pred);
            const LabeledComponents gt_cc = connected_components(loaded.gt, opts.connectivity);
            for (const auto& [model, pred] : loaded.preds) {
                const LabeledComponents pred_cc = connected_components(pred, opts.connectivity);
                const MatchTable match = match_lesions(gt_cc, pred_cc);
                if (criteria.count(1))
                    outcomes[i].rows.push_back({model, criterion1(gt_cc, pred_cc)});
                if (criteria.count(2))
                    outcomes[i].rows.push_back({model, criterion2(match, iou_threshold)});
                if (criteria.count(3))
                    outcomes[i].rows.push_back(
                        {model, criterion3(match, gt_cc, pred, loaded.pet)});
            }
        } catch (const std::exception& e) {
            outcomes[i].error = e.what();
        }
    });

    CommandResult result;
    Table& cases = result.report.add_table(
        "cases", {"case_id", "model", "criterion", "tp", "fp", "fn", "fn_strict", "sensitivity",
                  "no_gt_lesions"});

    std::vector<std::string> model_order;
    std::map<std::string, std::map<int, std::vector<double>>> sens_pool, fp_pool;
    for (const auto& oc : outcomes) {
        if (!oc.error.empty()) {
            ++result.n_failures;
            continue;
        }
        for (const auto& row : oc.rows) {
            const auto& o = row.outcome;
            cases.add_row({Cell{oc.case_id}, Cell{row.model},
                           detail::integer(static_cast<long>(o.criterion)), detail::integer(o.tp),
                           detail::integer(o.fp), detail::integer(o.fn),
                           detail::integer(o.fn_strict), detail::num(o.sensitivity),
                           detail::integer(o.no_gt_lesions ? 1 : 0)});
            if (std::find(model_order.begin(), model_order.end(), row.model) == model_order.end())
                model_order.push_back(row.model);
            if (!o.no_gt_lesions)
                sens_pool[row.model][static_cast<int>(o.criterion)].push_back(o.sensitivity);
            fp_pool[row.model][static_cast<int>(o.criterion)].push_back(
                static_cast<double>(o.fp));
        }
    }

    Table& summary_t = result.report.add_table(
        "summary", {"model", "criterion", "metric", "n", "median", "q25", "q75"});
    for (const auto& model : model_order) {
        for (const int c : criteria) {
            const auto add_summary = [&](const char* metric, const std::vector<double>& values) {
                if (values.empty()) return;
                const Summary s = summary(values);
                summary_t.add_row({Cell{model}, detail::integer(c), Cell{std::string(metric)},
                                   detail::integer(static_cast<long>(values.size())),
                                   Cell{s.median}, Cell{s.q25}, Cell{s.q75}});
            };
            add_summary("sensitivity", sens_pool[model][c]);
            add_summary("fp_per_patient", fp_pool[model][c]);
        }
    }

    Table& failures = result.report.add_table("failures", {"case_id", "error"});
    for (const auto& oc : outcomes)
        if (!oc.error.empty()) failures.add_row({Cell{oc.case_id}, Cell{oc.error}});

    const std::string ext = opts.format == ReportFormat::Json ? ".json" : ".csv";
    result.written_files = write_report(result.report, opts.format, out_base + ext);
    return result;
}

struct AgreementOptions {
    bool staple = false;
    bool crop_body = false;
    int staple_max_iter = 100;
    double staple_tol = 1e-6;
};

/// Observer agreement over cases with rater masks: per-case Fleiss kappa,
/// cohort kappa mean, pairwise rater DSC statistics, and optional STAPLE
/// consensus masks with per-rater DSC against the consensus.
inline CommandResult cmd_agreement(const CohortManifest& manifest, const std::string& out_base,
                                   const PipelineOptions& opts, const AgreementOptions& aopts = {}) {
    struct CaseAgreement {
        std::string case_id;
        std::size_t n_raters = 0;
        KappaResult kappa;
        std::vector<std::vector<double>> pair_dsc;
        std::vector<double> staple_dsc, staple_sens, staple_spec;
        bool staple_converged = false;
        std::string staple_path;
        std::string error;
    };
    std::vector<CaseAgreement> outcomes(manifest.cases.size());
    const std::filesystem::path out_dir = std::filesystem::path(out_base).parent_path();

    detail::parallel_for(manifest.cases.size(), opts.workers, [&](std::size_t i) {
        const CohortCase& c = manifest.cases[i];
        outcomes[i].case_id = c.case_id;
        try {
            if (c.rater_paths.size() < 2)
                throw data_error(c.case_id + ": agreement needs at least two rater masks");
            std::vector<BinaryMask> masks;
            for (const auto& path : c.rater_paths) masks.push_back(read_mask(path).mask);
            const RaterStack stack(std::move(masks));
            outcomes[i].n_raters = stack.rater_count();

            std::optional<VoxelBox> crop;
            if (aopts.crop_body) {
                const ScalarVolume pet = read_volume(c.pet_path, Unit::SUV);
                if (!(pet.dims() == stack.dims() && pet.spacing() == stack.spacing()))
                    throw geometry_error(c.case_id + ": PET and rater grids differ for crop");
                crop = body_bounding_box(pet);
            }
            outcomes[i].kappa = fleiss_kappa(stack, crop);
            outcomes[i].pair_dsc = pairwise_dsc(stack);

            if (aopts.staple) {
                const StapleResult st = staple(stack, aopts.staple_max_iter, aopts.staple_tol);
                outcomes[i].staple_converged = st.converged;
                outcomes[i].staple_sens = st.sensitivity;
                outcomes[i].staple_spec = st.specificity;
                for (const auto& mask : stack.masks())
                    outcomes[i].staple_dsc.push_back(dsc(mask, st.consensus));
                const auto path = (out_dir / (c.case_id + "_staple.nii.gz")).string();
                write_mask(path, st.consensus);
                outcomes[i].staple_path = path;
            }
        } catch (const std::exception& e) {
            outcomes[i].error = e.what();
        }
    });

    CommandResult result;
    Table& cases = result.report.add_table(
        "cases", {"case_id", "n_raters", "kappa", "p_bar", "p_e", "band", "degenerate"});
    std::vector<KappaResult> kappas;
    std::map<std::pair<int, int>, std::vector<double>> pair_pool;
    for (const auto& oc : outcomes) {
        if (!oc.error.empty()) {
            ++result.n_failures;
            continue;
        }
        cases.add_row({Cell{oc.case_id}, detail::integer(static_cast<long>(oc.n_raters)),
                       Cell{oc.kappa.kappa}, Cell{oc.kappa.p_bar}, Cell{oc.kappa.p_e},
                       Cell{std::string(band_name(oc.kappa.band))},
                       detail::integer(oc.kappa.degenerate ? 1 : 0)});
        kappas.push_back(oc.kappa);
        for (std::size_t a = 0; a < oc.pair_dsc.size(); ++a)
            for (std::size_t b = a + 1; b < oc.pair_dsc.size(); ++b)
                pair_pool[{static_cast<int>(a) + 1, static_cast<int>(b) + 1}].push_back(
                    oc.pair_dsc[a][b]);
    }

    Table& mean_t = result.report.add_table("kappa_mean", {"n_cases", "kappa_mean"});
    if (!kappas.empty())
        mean_t.add_row({detail::integer(static_cast<long>(kappas.size())), Cell{kappa_mean(kappas)}});

    Table& pair_t = result.report.add_table("pairwise_dsc",
                                            {"rater_a", "rater_b", "n", "mean", "sd"});
    for (const auto& [pair, values] : pair_pool) {
        const Summary s = summary(values);
        pair_t.add_row({detail::integer(pair.first), detail::integer(pair.second),
                        detail::integer(static_cast<long>(values.size())), Cell{s.mean},
                        Cell{s.sd}});
    }

    if (aopts.staple) {
        Table& staple_t = result.report.add_table(
            "staple", {"case_id", "rater", "dsc_vs_consensus", "sensitivity", "specificity",
                       "converged", "consensus_path"});
        for (const auto& oc : outcomes) {
            if (!oc.error.empty()) continue;
            for (std::size_t r = 0; r < oc.staple_dsc.size(); ++r)
                staple_t.add_row({Cell{oc.case_id}, detail::integer(static_cast<long>(r) + 1),
                                  Cell{oc.staple_dsc[r]}, Cell{oc.staple_sens[r]},
                                  Cell{oc.staple_spec[r]},
                                  detail::integer(oc.staple_converged ? 1 : 0),
                                  Cell{oc.staple_path}});
        }
    }

    Table& failures = result.report.add_table("failures", {"case_id", "error"});
    for (const auto& oc : outcomes)
        if (!oc.error.empty()) failures.add_row({Cell{oc.case_id}, Cell{oc.error}});

    const std::string ext = opts.format == ReportFormat::Json ? ".json" : ".csv";
    auto files = write_report(result.report, opts.format, out_base + ext);
    result.written_files.insert(result.written_files.end(), files.begin(), files.end());
    return result;
}

struct AnalyzeOptions {
    double alpha = 0.05;
    bool reproducibility = true;
    bool mape_curves = true;
    bool threshold_curves = true;
    int n_log_bins = 8;
    double threshold_quantile_cap = 0.85;
};

/// Statistical analysis of an evaluation report (JSON produced by
/// cmd_evaluate): paired t-tests against the ground truth measures with
/// Bonferroni correction over models x measures, MAPE values and curves,
/// and threshold-subset DSC curves.
inline CommandResult cmd_analyze(const std::string& evaluate_report_path,
                                 const std::string& out_base, const PipelineOptions& opts,
                                 const AnalyzeOptions& aopts = {}) {
    std::ifstream in(evaluate_report_path);
    if (!in) throw io_error("cannot open report " + evaluate_report_path);
    nlohmann::json root;
    try {
        in >> root;
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("report parse error: ") + e.what());
    }
    if (!root.contains("cases")) throw data_error("report has no cases table");

    // case_id -> model -> (dsc, measures)
    struct ModelRow {
        double dsc = std::numeric_limits<double>::quiet_NaN();
        std::map<std::string, double> measures;
    };
    std::map<std::string, std::map<std::string, ModelRow>> by_case;
    std::vector<std::string> case_order;
    std::set<std::string> model_set;
    for (const auto& row : root["cases"]) {
        const std::string case_id = row.at("case_id").get<std::string>();
        const std::string model = row.at("model").get<std::string>();
        if (by_case.find(case_id) == by_case.end()) case_order.push_back(case_id);
        ModelRow mr;
        if (row.contains("dsc") && row["dsc"].is_number()) mr.dsc = row["dsc"].get<double>();
        for (const auto& name : detail::measure_names())
            if (row.contains(name) && row[name].is_number())
                mr.measures[name] = row[name].get<double>();
        by_case[case_id][model] = std::move(mr);
        if (model != "ground_truth") model_set.insert(model);
    }
    if (case_order.size() < 2) throw data_error("analysis needs at least two cases");
    if (model_set.empty()) throw data_error("report contains no model predictions");

    const std::vector<std::string> models(model_set.begin(), model_set.end());
    const int n_tests =
        static_cast<int>(models.size() * detail::measure_names().size());
    const double alpha_corrected = aopts.alpha / static_cast<double>(n_tests);

    CommandResult result;
    Table& config = result.report.add_table(
        "config", {"alpha", "n_models", "n_measures", "n_tests", "alpha_corrected",
                   "threshold_quantile_cap", "step_suv_mean", "step_suv_max", "step_n_lesions",
                   "step_tmtv_ml", "step_tlg_ml", "step_dmax_cm"});
    config.add_row({Cell{aopts.alpha}, detail::integer(static_cast<long>(models.size())),
                    detail::integer(static_cast<long>(detail::measure_names().size())),
                    detail::integer(n_tests), Cell{alpha_corrected},
                    Cell{aopts.threshold_quantile_cap}, Cell{detail::measure_step("suv_mean")},
                    Cell{detail::measure_step("suv_max")}, Cell{detail::measure_step("n_lesions")},
                    Cell{detail::measure_step("tmtv_ml")}, Cell{detail::measure_step("tlg_ml")},
                    Cell{detail::measure_step("dmax_cm")}});

    Table& ttests = result.report.add_table(
        "ttests",
        {"model", "measure", "n", "t", "p", "alpha_corrected", "reject", "degenerate"});
    Table& mape_t =
        result.report.add_table("mape", {"model", "measure", "mape_pct", "n_used", "n_excluded"});
    Table& mape_curve_t = result.report.add_table(
        "mape_curves", {"model", "measure", "bin_lo", "bin_hi", "mape_pct", "count"});
    Table& thr_t = result.report.add_table(
        "threshold_curves", {"model", "measure", "threshold", "median_dsc", "count"});

    for (const auto& model : models) {
        // Paired vectors over cases where both ground truth and this model
        // produced values.
        std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> paired;
        std::vector<double> dsc_values;
        std::map<std::string, std::vector<double>> gt_for_dsc;
        for (const auto& case_id : case_order) {
            const auto& rows = by_case[case_id];
            const auto git = rows.find("ground_truth");
            const auto mit = rows.find(model);
            if (git == rows.end() || mit == rows.end()) continue;
            for (const auto& name : detail::measure_names()) {
                const auto gv = git->second.measures.find(name);
                const auto pv = mit->second.measures.find(name);
                if (gv == git->second.measures.end() || pv == mit->second.measures.end()) continue;
                paired[name].first.push_back(gv->second);
                paired[name].second.push_back(pv->second);
            }
            if (std::isfinite(mit->second.dsc)) {
                dsc_values.push_back(mit->second.dsc);
                for (const auto& name : detail::measure_names()) {
                    const auto gv = git->second.measures.find(name);
                    if (gv != git->second.measures.end())
                        gt_for_dsc[name].push_back(gv->second);
                }
            }
        }

        for (const auto& name : detail::measure_names()) {
            const auto& [gt_vec, pred_vec] = paired[name];
            if (aopts.reproducibility && gt_vec.size() >= 2) {
                const PairedTestResult t = paired_t_test(gt_vec, pred_vec, aopts.alpha, n_tests);
                ttests.add_row({Cell{model}, Cell{name}, detail::integer(t.n), detail::num(t.t_stat),
                                Cell{t.p_value}, Cell{t.alpha_corrected},
                                detail::integer(t.reject ? 1 : 0),
                                detail::integer(t.degenerate ? 1 : 0)});
            }
            if (gt_vec.empty()) continue;
            try {
                const MapeResult m = mape(gt_vec, pred_vec);
                mape_t.add_row({Cell{model}, Cell{name}, Cell{m.value_pct},
                                detail::integer(static_cast<long>(m.n_used)),
                                detail::integer(static_cast<long>(m.n_excluded))});
            } catch (const data_error&) {
                // every original value zero; nothing to report for this measure
            }
            if (aopts.mape_curves) {
                std::vector<double> positive;
                for (const double v : gt_vec)
                    if (v > 0.0) positive.push_back(v);
                if (!positive.empty()) {
                    const double break_at = std::max(1e-9, median(positive));
                    const BinnedCurve curve = mape_curve(gt_vec, pred_vec, break_at,
                                                         aopts.n_log_bins,
                                                         detail::measure_step(name));
                    for (std::size_t b = 0; b + 1 <= curve.bin_values.size(); ++b)
                        mape_curve_t.add_row({Cell{model}, Cell{name}, Cell{curve.bin_edges[b]},
                                              Cell{curve.bin_edges[b + 1]},
                                              detail::num(curve.bin_values[b]),
                                              detail::integer(static_cast<long>(curve.bin_counts[b]))});
                }
            }
            if (aopts.threshold_curves && !gt_for_dsc[name].empty()) {
                const BinnedCurve curve =
                    threshold_subset_dsc(gt_for_dsc[name], dsc_values, detail::measure_step(name),
                                         aopts.threshold_quantile_cap);
                for (std::size_t b = 0; b < curve.bin_values.size(); ++b)
                    thr_t.add_row({Cell{model}, Cell{name}, Cell{curve.bin_edges[b]},
                                   Cell{curve.bin_values[b]},
                                   detail::integer(static_cast<long>(curve.bin_counts[b]))});
            }
        }
    }

    const std::string ext = opts.format == ReportFormat::Json ? ".json" : ".csv";
    result.written_files = write_report(result.report, opts.format, out_base + ext);
    return result;
}

struct PhantomConfig {
    PhantomSpec base;
    double jitter_center_mm = 0.0;
    double jitter_radii_mm = 0.0;
    double jitter_suv = 0.0;
    std::vector<std::pair<std::string, std::vector<DegradeOp>>> predictions;
};

namespace detail {

inline DegradeOp parse_degrade_op(const nlohmann::json& j) {
    const std::string op = j.at("op").get<std::string>();
    if (op == "dilate") return DegradeOp::dilate(j.value("k", 1));
    if (op == "erode") return DegradeOp::erode(j.value("k", 1));
    if (op == "drop_component") return DegradeOp::drop_component(j.value("index", 1));
    if (op == "shift") {
        const auto v = j.at("voxels");
        return DegradeOp::shift_by({v.at(0).get<int>(), v.at(1).get<int>(), v.at(2).get<int>()});
    }
    if (op == "add_blob") {
        std::array<double, 3> radii{4.0, 4.0, 4.0};
        if (j.contains("radii_mm")) {
            const auto r = j["radii_mm"];
            radii = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
        }
        if (j.contains("center_mm")) {
            const auto c = j["center_mm"];
            return DegradeOp::add_blob(
                {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()}, radii);
        }
        return DegradeOp::add_random_blob(radii);
    }
    throw parameter_error("unknown degrade op " + op);
}

} // namespace detail

inline PhantomConfig load_phantom_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open phantom config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("phantom config " + path + ": " + e.what());
    }

    PhantomConfig cfg;
    if (j.contains("dims")) {
        const auto& d = j["dims"];
        cfg.base.dims = Dims{d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>()};
    }
    if (j.contains("spacing")) {
        const auto& s = j["spacing"];
        cfg.base.spacing =
            Spacing(s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>());
    }
    cfg.base.background_suv = j.value("background_suv", 1.0);
    cfg.base.noise_sd = j.value("noise_sd", 0.1);
    cfg.base.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("lesions")) {
        for (const auto& jl : j["lesions"]) {
            EllipsoidSpec l;
            const auto& c = jl.at("center_mm");
            const auto& r = jl.at("radii_mm");
            l.center_mm = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
            l.radii_mm = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
            l.suv = jl.at("suv").get<double>();
            cfg.base.lesions.push_back(l);
        }
    }
    cfg.jitter_center_mm = j.value("jitter_center_mm", 0.0);
    cfg.jitter_radii_mm = j.value("jitter_radii_mm", 0.0);
    cfg.jitter_suv = j.value("jitter_suv", 0.0);
    if (j.contains("predictions")) {
        for (const auto& [name, ops] : j["predictions"].items()) {
            std::vector<DegradeOp> parsed;
            for (const auto& jop : ops) parsed.push_back(detail::parse_degrade_op(jop));
            cfg.predictions.emplace_back(name, std::move(parsed));
        }
    }
    if (cfg.predictions.empty()) cfg.predictions.emplace_back("identity", std::vector<DegradeOp>{});
    cfg.base.validate();
    return cfg;
}

/// Randomize one case's lesion layout around the base spec. Radii and SUV
/// jitter first, then centers are clamped so every lesion stays inside.
inline PhantomSpec jitter_spec(const PhantomConfig& cfg, std::uint64_t case_seed) {
    PhantomSpec spec = cfg.base;
    spec.seed = case_seed;
    Rng rng(Rng::derive(case_seed, 0xa11ce));
    const std::array<double, 3> extent{spec.dims.nx * spec.spacing.dx,
                                       spec.dims.ny * spec.spacing.dy,
                                       spec.dims.nz * spec.spacing.dz};
    for (auto& l : spec.lesions) {
        for (int a = 0; a < 3; ++a) {
            const auto au = static_cast<std::size_t>(a);
            if (cfg.jitter_radii_mm > 0.0)
                l.radii_mm[au] = std::max(
                    1.0, l.radii_mm[au] + rng.uniform(-cfg.jitter_radii_mm, cfg.jitter_radii_mm));
            if (cfg.jitter_center_mm > 0.0)
                l.center_mm[au] += rng.uniform(-cfg.jitter_center_mm, cfg.jitter_center_mm);
            l.center_mm[au] =
                std::clamp(l.center_mm[au], l.radii_mm[au], extent[au] - l.radii_mm[au]);
        }
        if (cfg.jitter_suv > 0.0)
            l.suv = std::max(spec.background_suv + 0.5,
                             l.suv + rng.uniform(-cfg.jitter_suv, cfg.jitter_suv));
    }
    return spec;
}

/// Generate a phantom cohort on disk: per case a PET volume, ground truth
/// mask and one prediction per configured model, plus manifest.json and a
/// truth.json sidecar with the ground truth measures.
inline CommandResult cmd_phantom(const PhantomConfig& cfg, int n_cases,
                                 const std::string& out_dir, const PipelineOptions& opts) {
    if (n_cases < 1) throw parameter_error("phantom cohort needs at least one case");
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir)) throw io_error("cannot create output directory " + out_dir);

    const std::uint64_t base_seed = opts.seed.value_or(cfg.base.seed);

    struct CaseArtifacts {
        std::string case_id;
        LesionMeasures truth;
        std::string pet, gt;
        std::vector<std::pair<std::string, std::string>> preds;
        std::string error;
    };
    std::vector<CaseArtifacts> artifacts(static_cast<std::size_t>(n_cases));

    detail::parallel_for(static_cast<std::size_t>(n_cases), opts.workers, [&](std::size_t i) {
        auto& art = artifacts[i];
        char id[32];
        std::snprintf(id, sizeof(id), "case_%03zu", i);
        art.case_id = id;
        try {
            const std::uint64_t case_seed = Rng::derive(base_seed, i);
            const PhantomSpec spec = jitter_spec(cfg, case_seed);
            const PhantomCase pc = generate(spec);
            art.truth = pc.truth;

            art.pet = art.case_id + "_pet.nii.gz";
            art.gt = art.case_id + "_gt.nii.gz";
            write_volume((fs::path(out_dir) / art.pet).string(), pc.suv);
            write_mask((fs::path(out_dir) / art.gt).string(), pc.gt);

            std::size_t model_index = 0;
            for (const auto& [model, ops] : cfg.predictions) {
                const BinaryMask pred =
                    degrade(pc.gt, ops, Rng::derive(case_seed, 1000 + model_index++));
                const std::string name = art.case_id + "_pred_" + model + ".nii.gz";
                write_mask((fs::path(out_dir) / name).string(), pred);
                art.preds.emplace_back(model, name);
            }
        } catch (const std::exception& e) {
            art.error = e.what();
        }
    });

    CommandResult result;
    for (const auto& art : artifacts)
        if (!art.error.empty()) ++result.n_failures;
    if (result.n_failures > 0) {
        std::string first;
        for (const auto& art : artifacts)
            if (!art.error.empty()) {
                first = art.case_id + ": " + art.error;
                break;
            }
        throw data_error("phantom generation failed (" + first + ")");
    }

    nlohmann::json manifest;
    manifest["cases"] = nlohmann::json::array();
    for (const auto& art : artifacts) {
        nlohmann::json jc;
        jc["case_id"] = art.case_id;
        jc["pet_path"] = art.pet;
        jc["gt_path"] = art.gt;
        nlohmann::json preds = nlohmann::json::object();
        for (const auto& [model, path] : art.preds) preds[model] = path;
        jc["pred_paths"] = std::move(preds);
        manifest["cases"].push_back(std::move(jc));
    }
    const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
    {
        std::ofstream out(manifest_path, std::ios::binary);
        if (!out) throw io_error("cannot write " + manifest_path);
        out << manifest.dump(2) << "\n";
    }
    result.written_files.push_back(manifest_path);

    Report truth_report;
    Table& truth_t = truth_report.add_table(
        "truth", {"case_id", "suv_mean", "suv_max", "n_lesions", "tmtv_ml", "tlg_ml", "dmax_cm",
                  "empty_mask"});
    for (const auto& art : artifacts) {
        truth_t.add_row({Cell{art.case_id}, Cell{art.truth.suv_mean}, Cell{art.truth.suv_max},
                         detail::integer(art.truth.n_lesions), Cell{art.truth.tmtv_ml},
                         Cell{art.truth.tlg_ml}, Cell{art.truth.dmax_cm},
                         detail::integer(art.truth.empty ? 1 : 0)});
    }
    const std::string truth_path = (fs::path(out_dir) / "truth.json").string();
    auto files = write_report(truth_report, ReportFormat::Json, truth_path);
    result.written_files.insert(result.written_files.end(), files.begin(), files.end());
    result.report = std::move(truth_report);
    return result;
}

inline CommandResult cmd_phantom(const std::string& config_path, int n_cases,
                                 const std::string& out_dir, const PipelineOptions& opts) {
    return cmd_phantom(load_phantom_config(config_path), n_cases, out_dir, opts);
}

} // namespace lesioneval
