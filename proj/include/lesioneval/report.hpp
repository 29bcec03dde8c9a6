#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "lesioneval/core.hpp"

namespace lesioneval {

enum class ReportFormat { Csv, Json };

inline ReportFormat report_format_from_string(const std::string& s) {
    if (s == "csv") return ReportFormat::Csv;
    if (s == "json") return ReportFormat::Json;
    throw parameter_error("report format must be csv or json");
}

/// A single report value. Reals are serialized with 6 significant digits
/// in both formats; missing values become the empty CSV field or JSON null.
using Cell = std::variant<std::monostate, double, std::int64_t, std::string>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add_row(std::vector<Cell> row) {
        if (row.size() != columns.size())
            throw parameter_error("report row width " + std::to_string(row.size()) +
                                  " does not match column count " +
                                  std::to_string(columns.size()) +
                                  (columns.empty() ? "" : " (first column " + columns[0] + ")"));
        rows.push_back(std::move(row));
    }
};

/// Ordered collection of named tables forming one report. A deque keeps
/// references returned by add_table valid while later tables are added.
struct Report {
    std::deque<std::pair<std::string, Table>> tables;

    Table& add_table(const std::string& name, std::vector<std::string> columns) {
        tables.emplace_back(name, Table{std::move(columns), {}});
        return tables.back().second;
    }
};

namespace detail {

inline std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

/// Real value rounded to its 6-significant-digit serialization, so JSON
/// numbers and CSV text agree exactly.
inline double round_6sig(double v) {
    if (!std::isfinite(v)) return v;
    return std::strtod(format_real(v).c_str(), nullptr);
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

inline std::string cell_csv(const Cell& c) {
    if (std::holds_alternative<std::monostate>(c)) return "";
    if (const auto* d = std::get_if<double>(&c)) return format_real(*d);
    if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
    return csv_escape(std::get<std::string>(c));
}

inline nlohmann::json cell_json(const Cell& c) {
    if (std::holds_alternative<std::monostate>(c)) return nullptr;
    if (const auto* d = std::get_if<double>(&c)) {
        if (!std::isfinite(*d)) return format_real(*d); // JSON has no inf/nan
        return round_6sig(*d);
    }
    if (const auto* i = std::get_if<std::int64_t>(&c)) return *i;
    return std::get<std::string>(c);
}

} // namespace detail

/// Write one report. JSON keeps all tables in a single `<path>` file;
/// CSV writes one RFC-4180 file per table named `<path stem>_<table>.csv`
/// (or `<path>` itself when the report has a single table).
inline std::vector<std::string> write_report(const Report& report, ReportFormat format,
                                             const std::string& path) {
    if (report.tables.empty()) throw parameter_error("write_report: empty report");
    namespace fs = std::filesystem;
    std::vector<std::string> written;

    if (format == ReportFormat::Json) {
        nlohmann::json root = nlohmann::json::object();
        for (const auto& [name, table] : report.tables) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& row : table.rows) {
                nlohmann::json obj = nlohmann::json::object();
                for (std::size_t c = 0; c < table.columns.size(); ++c)
                    obj[table.columns[c]] = detail::cell_json(row[c]);
                arr.push_back(std::move(obj));
            }
            root[name] = std::move(arr);
        }
        std::ofstream out(path, std::ios::binary);
        if (!out) throw io_error("cannot write " + path);
        out << root.dump(2) << "\n";
        if (!out) throw io_error("write failed for " + path);
        written.push_back(path);
        return written;
    }

    const fs::path base(path);
    const fs::path dir = base.parent_path();
    const std::string stem = base.stem().string();
    for (const auto& [name, table] : report.tables) {
        fs::path file = base;
        if (report.tables.size() > 1) file = dir / (stem + "_" + name + ".csv");
        std::ofstream out(file, std::ios::binary);
        if (!out) throw io_error("cannot write " + file.string());
        for (std::size_t c = 0; c < table.columns.size(); ++c)
            out << (c ? "," : "") << detail::csv_escape(table.columns[c]);
        out << "\r\n";
        for (const auto& row : table.rows) {
            for (std::size_t c = 0; c < row.size(); ++c)
                out << (c ? "," : "") << detail::cell_csv(row[c]);
            out << "\r\n";
        }
        if (!out) throw io_error("write failed for " + file.string());
        written.push_back(file.string());
    }
    return written;
}

} // namespace lesioneval
