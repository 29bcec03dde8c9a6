#include <cstdint>
#include <cstdio>
#include <exception>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lesioneval/lesioneval.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCaseFailures = 3;

struct GlobalArgs {
    std::string manifest;
    std::string out = "results";
    std::string format = "json";
    int workers = 1;
    int connectivity = 26;
    bool strict = false;
    std::optional<std::uint64_t> seed;
    std::string resample_pred = "on";

    lesioneval::PipelineOptions options() const {
        lesioneval::PipelineOptions o;
        o.format = lesioneval::report_format_from_string(format);
        o.workers = workers;
        o.connectivity = lesioneval::connectivity_from_int(connectivity);
        o.strict = strict;
        o.seed = seed;
        if (resample_pred == "on")
            o.resample_pred = true;
        else if (resample_pred == "off")
            o.resample_pred = false;
        else
            throw lesioneval::parameter_error("--resample-pred must be on or off");
        return o;
    }
};

void add_common(CLI::App* cmd, GlobalArgs& g, bool with_manifest) {
    if (with_manifest)
        cmd->add_option("--manifest", g.manifest, "Cohort manifest (JSON)")->required();
    cmd->add_option("--out", g.out, "Output directory");
    cmd->add_option("--format", g.format, "Report format: csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
    cmd->add_option("--workers", g.workers, "Parallel case workers")->check(CLI::Range(1, 256));
    cmd->add_option("--connectivity", g.connectivity, "Component connectivity: 6, 18 or 26")
        ->check(CLI::IsMember({6, 18, 26}));
    cmd->add_flag("--strict", g.strict, "Exit nonzero when any case fails");
    cmd->add_option("--seed", g.seed, "Seed override for generation commands");
    cmd->add_option("--resample-pred", g.resample_pred,
                    "Resample predictions onto the ground truth grid: on or off")
        ->check(CLI::IsMember({"on", "off"}));
}

std::string out_base(const GlobalArgs& g, const char* command) {
    std::error_code ec;
    std::filesystem::create_directories(g.out, ec);
    return (std::filesystem::path(g.out) / command).string();
}

int finish(const lesioneval::CommandResult& result, const GlobalArgs& g) {
    for (const auto& f : result.written_files) std::printf("wrote %s\n", f.c_str());
    if (result.n_failures > 0) {
        std::fprintf(stderr, "%zu case(s) failed; see the failures table\n", result.n_failures);
        if (g.strict) return kExitCaseFailures;
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lesion segmentation evaluation toolkit for PET/CT volumes"};
    app.require_subcommand(1);

    GlobalArgs g;

    auto* evaluate = app.add_subcommand("evaluate", "Segmentation metrics and lesion measures");
    add_common(evaluate, g, true);

    auto* detect = app.add_subcommand("detect", "Per-lesion detection criteria");
    add_common(detect, g, true);
    std::vector<int> criteria{1, 2, 3};
    double iou_threshold = 0.5;
    detect->add_option("--criteria", criteria, "Detection criteria subset")
        ->check(CLI::IsMember({1, 2, 3}));
    detect->add_option("--iou-threshold", iou_threshold, "Criterion 2 IoU threshold")
        ->check(CLI::Range(0.0, 1.0));

    auto* agreement = app.add_subcommand("agreement", "Inter-observer agreement statistics");
    add_common(agreement, g, true);
    lesioneval::AgreementOptions aopts;
    agreement->add_flag("--staple", aopts.staple, "Write STAPLE consensus masks and scores");
    agreement->add_flag("--crop-body", aopts.crop_body,
                        "Restrict kappa to the PET body bounding box");
    agreement->add_option("--staple-max-iter", aopts.staple_max_iter, "STAPLE iteration cap");
    agreement->add_option("--staple-tol", aopts.staple_tol, "STAPLE convergence tolerance");

    auto* analyze = app.add_subcommand("analyze", "Statistical analysis of an evaluation report");
    add_common(analyze, g, false);
    std::string report_path;
    lesioneval::AnalyzeOptions anopts;
    std::vector<std::string> analyses{"reproducibility", "mape_curves", "threshold_curves"};
    analyze->add_option("--report", report_path, "JSON report from the evaluate command")
        ->required();
    analyze->add_option("--alpha", anopts.alpha, "Significance level before correction")
        ->check(CLI::Range(1e-12, 1.0));
    analyze->add_option("--analyses", analyses, "Subset of analyses to run")
        ->check(CLI::IsMember({"reproducibility", "mape_curves", "threshold_curves"}));
    analyze->add_option("--log-bins", anopts.n_log_bins, "Log bins below the MAPE curve break");
    analyze->add_option("--quantile-cap", anopts.threshold_quantile_cap,
                        "Upper quantile for threshold sweeps");

    auto* phantom = app.add_subcommand("phantom", "Generate a synthetic phantom cohort");
    add_common(phantom, g, false);
    std::string config_path;
    int n_cases = 1;
    phantom->add_option("--config", config_path, "Phantom spec (JSON)")->required();
    phantom->add_option("--cases", n_cases, "Number of cases")->check(CLI::Range(1, 100000));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        const lesioneval::PipelineOptions opts = g.options();
        if (evaluate->parsed()) {
            const auto manifest = lesioneval::load_manifest(g.manifest);
            return finish(lesioneval::cmd_evaluate(manifest, out_base(g, "evaluate"), opts), g);
        }
        if (detect->parsed()) {
            const auto manifest = lesioneval::load_manifest(g.manifest);
            const std::set<int> selected(criteria.begin(), criteria.end());
            return finish(lesioneval::cmd_detect(manifest, out_base(g, "detect"), opts, selected,
                                                 iou_threshold),
                          g);
        }
        if (agreement->parsed()) {
            const auto manifest = lesioneval::load_manifest(g.manifest);
            return finish(
                lesioneval::cmd_agreement(manifest, out_base(g, "agreement"), opts, aopts), g);
        }
        if (analyze->parsed()) {
            anopts.reproducibility = false;
            anopts.mape_curves = false;
            anopts.threshold_curves = false;
            for (const auto& a : analyses) {
                if (a == "reproducibility") anopts.reproducibility = true;
                if (a == "mape_curves") anopts.mape_curves = true;
                if (a == "threshold_curves") anopts.threshold_curves = true;
            }
            return finish(lesioneval::cmd_analyze(report_path, out_base(g, "analyze"), opts, anopts),
                          g);
        }
        if (phantom->parsed()) {
            return finish(lesioneval::cmd_phantom(config_path, n_cases, g.out, opts), g);
        }
    } catch (const lesioneval::error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return kExitUsage;
}
