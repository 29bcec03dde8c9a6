#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lesioneval/core.hpp"

namespace lesioneval {

struct CohortCase {
    std::string case_id;
    std::string pet_path;
    std::string gt_path;
    std::vector<std::pair<std::string, std::string>> pred_paths; // model name -> path
    std::vector<std::string> rater_paths;
};

struct CohortManifest {
    std::vector<CohortCase> cases;

    /// Union of model names across cases, alphabetical.
    std::vector<std::string> model_names() const {
        std::set<std::string> names;
        for (const auto& c : cases)
            for (const auto& [name, _] : c.pred_paths) names.insert(name);
        return {names.begin(), names.end()};
    }
};

/// Load a cohort manifest. Relative paths are resolved against the
/// manifest's directory and every referenced file must already exist.
inline CohortManifest load_manifest(const std::string& path) {
    namespace fs = std::filesystem;
    std::ifstream in(path);
    if (!in) throw io_error("cannot open manifest " + path);
    nlohmann::json root;
    try {
        in >> root;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("manifest " + path + ": " + e.what());
    }
    if (!root.contains("cases") || !root["cases"].is_array() || root["cases"].empty())
        throw data_error("manifest " + path + " has no cases");

    const fs::path base = fs::path(path).parent_path();
    const auto resolve = [&](const std::string& p) {
        const fs::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    const auto require_file = [&](const std::string& p, const std::string& case_id) {
        if (!fs::exists(p))
            throw data_error("manifest " + path + ": case " + case_id + " references missing file " + p);
        return p;
    };

    CohortManifest m;
    std::set<std::string> seen_ids;
    for (const auto& jc : root["cases"]) {
        CohortCase c;
        c.case_id = jc.value("case_id", "");
        if (c.case_id.empty()) throw data_error("manifest " + path + ": case without case_id");
        if (!seen_ids.insert(c.case_id).second)
            throw data_error("manifest " + path + ": duplicate case_id " + c.case_id);
        if (!jc.contains("pet_path") || !jc.contains("gt_path"))
            throw data_error("manifest " + path + ": case " + c.case_id +
                             " needs pet_path and gt_path");
        c.pet_path = require_file(resolve(jc["pet_path"].get<std::string>()), c.case_id);
        c.gt_path = require_file(resolve(jc["gt_path"].get<std::string>()), c.case_id);
        if (jc.contains("pred_paths")) {
            // nlohmann objects iterate in key order, keeping model order stable
            for (const auto& [name, p] : jc["pred_paths"].items())
                c.pred_paths.emplace_back(
                    name, require_file(resolve(p.get<std::string>()), c.case_id));
        }
        if (jc.contains("rater_paths")) {
            for (const auto& p : jc["rater_paths"])
                c.rater_paths.push_back(require_file(resolve(p.get<std::string>()), c.case_id));
        }
        m.cases.push_back(std::move(c));
    }
    return m;
}

} // namespace lesioneval
