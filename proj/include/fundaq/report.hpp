#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fundaq/csv.hpp"
#include "fundaq/metrics.hpp"

namespace fundaq::report {

enum class Format { text, csv };

inline Format format_from_string(std::string_view s) {
    if (s == "text") return Format::text;
    if (s == "csv") return Format::csv;
    throw std::invalid_argument("unknown report format '" + std::string(s) + "' (expected text or csv)");
}

inline constexpr std::string_view kUndefinedText = "undefined";
inline constexpr std::string_view kUndefinedCsv = "NA";

inline std::string fixed4(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    std::string s(buf);
    return s == "-0.0000" ? "0.0000" : s;
}

inline std::string text_value(std::optional<double> v) { return v ? fixed4(*v) : std::string(kUndefinedText); }
inline std::string csv_value(std::optional<double> v) { return v ? csv::full_precision(*v) : std::string(kUndefinedCsv); }

inline std::optional<double> parse_csv_value(const std::string& s, std::size_t row, const std::string& col) {
    if (s == kUndefinedCsv) return std::nullopt;
    return csv::to_real(s, row, col);
}

/// Left-aligned columns separated by two spaces; second and later columns of
/// numeric tables are right-aligned.
inline std::string aligned_table(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& r : rows) {
        width.resize(std::max(width.size(), r.size()), 0);
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    }
    std::string out;
    for (const auto& r : rows) {
        std::string line;
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c) line += "  ";
            const std::string pad(width[c] - r[c].size(), ' ');
            line += c == 0 ? r[c] + pad : pad + r[c];
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
    }
    return out;
}

// ---- regression -----------------------------------------------------------

inline const std::vector<std::string>& regression_columns() {
    static const std::vector<std::string> c = {"mse", "mae", "rmse", "r2", "explained_variance", "median_abs_error"};
    return c;
}

inline std::string emit_report(const metrics::RegressionReport& r, Format f) {
    const std::array<std::optional<double>, 6> v = {r.mse, r.mae, r.rmse, r.r2, r.explained_variance, r.median_abs_error};
    if (f == Format::csv) {
        csv::Row row;
        for (auto x : v) row.push_back(csv_value(x));
        return csv::join(regression_columns()) + csv::join(row);
    }
    static const std::array<const char*, 6> labels = {"Mean Squared Error (MSE)",   "Mean Absolute Error (MAE)",
                                                      "Root MSE (RMSE)",            "R^2 (Coefficient of Determination)",
                                                      "Explained Variance",         "Median Absolute Error"};
    std::vector<std::vector<std::string>> rows = {{"Metric", "Value"}};
    for (std::size_t i = 0; i < 6; ++i) rows.push_back({labels[i], text_value(v[i])});
    return aligned_table(rows);
}

inline metrics::RegressionReport parse_regression_csv(std::string_view bytes) {
    const auto rows = csv::split_rows(bytes);
    const auto& names = regression_columns();
    if (rows.size() != 2) throw csv::ParseError(rows.size(), names[0], "expected header and one data row");
    const auto cols = csv::require_columns(rows[0], names);
    auto get = [&](std::size_t k) { return parse_csv_value(csv::cell(rows[1], cols[k], 1, names[k]), 1, names[k]); };
    auto must = [&](std::size_t k) {
        auto v = get(k);
        if (!v) throw csv::ParseError(1, names[k], "value may not be undefined");
        return *v;
    };
    metrics::RegressionReport r;
    r.mse = must(0);
    r.mae = must(1);
    r.rmse = must(2);
    r.r2 = get(3);
    r.explained_variance = get(4);
    r.median_abs_error = must(5);
    return r;
}

// ---- category statistics ---------------------------------------------------

inline const std::vector<std::string>& stat_columns() {
    static const std::vector<std::string> c = {"spearman_rho", "anova_f", "anova_p", "ols_intercept", "ols_slope", "ols_r2", "ols_slope_p"};
    return c;
}

inline std::string emit_report(const metrics::StatReport& r, Format f) {
    const std::array<std::optional<double>, 7> v = {r.spearman_rho, r.anova_f, r.anova_p, r.ols_intercept, r.ols_slope, r.ols_r2, r.ols_slope_p};
    if (f == Format::csv) {
        csv::Row row;
        for (auto x : v) row.push_back(csv_value(x));
        return csv::join(stat_columns()) + csv::join(row);
    }
    std::vector<std::vector<std::string>> rows = {
        {"Statistical Analysis", "Metrics", "Value"},
        {"Spearman Correlation", "Coefficient", text_value(v[0])},
        {"ANOVA Test", "F-statistic", text_value(v[1])},
        {"ANOVA Test", "p-value", text_value(v[2])},
        {"OLS Regression", "Intercept", text_value(v[3])},
        {"OLS Regression", "Coefficient", text_value(v[4])},
        {"OLS Regression", "R^2", text_value(v[5])},
        {"OLS Regression", "p-value", text_value(v[6])},
    };
    return aligned_table(rows);
}

inline metrics::StatReport parse_stat_csv(std::string_view bytes) {
    const auto rows = csv::split_rows(bytes);
    const auto& names = stat_columns();
    if (rows.size() != 2) throw csv::ParseError(rows.size(), names[0], "expected header and one data row");
    const auto cols = csv::require_columns(rows[0], names);
    auto get = [&](std::size_t k) { return parse_csv_value(csv::cell(rows[1], cols[k], 1, names[k]), 1, names[k]); };
    auto must = [&](std::size_t k) {
        auto v = get(k);
        if (!v) throw csv::ParseError(1, names[k], "value may not be undefined");
        return *v;
    };
    metrics::StatReport r;
    r.spearman_rho = get(0);
    r.anova_f = must(1);
    r.anova_p = must(2);
    r.ols_intercept = must(3);
    r.ols_slope = must(4);
    r.ols_r2 = get(5);
    r.ols_slope_p = must(6);
    return r;
}

/// Per-category five-number summaries.
inline std::string emit_report(const std::map<int, stats::Quartiles>& q, Format f) {
    const std::vector<std::string> head = {"category", "n", "min", "q1", "median", "q3", "max"};
    if (f == Format::csv) {
        std::string out = csv::join(head);
        for (const auto& [c, s] : q)
            out += csv::join({std::to_string(c), std::to_string(s.n), csv::full_precision(s.min), csv::full_precision(s.q1),
                              csv::full_precision(s.median), csv::full_precision(s.q3), csv::full_precision(s.max)});
        return out;
    }
    std::vector<std::vector<std::string>> rows = {{"Category", "N", "Min", "Q1", "Median", "Q3", "Max"}};
    for (const auto& [c, s] : q)
        rows.push_back({std::to_string(c), std::to_string(s.n), fixed4(s.min), fixed4(s.q1), fixed4(s.median), fixed4(s.q3), fixed4(s.max)});
    return aligned_table(rows);
}

// ---- quality-gated DR performance -----------------------------------------

inline std::string_view bucket_label(QualityBucket b) {
    switch (b) {
    case QualityBucket::bad: return "Bad (score < 0.4)";
    case QualityBucket::medium: return "Medium (0.4 <= score < 0.8)";
    case QualityBucket::good: return "Good (score >= 0.8)";
    }
    return "?";
}

inline const std::vector<std::string>& gated_columns() {
    static const std::vector<std::string> c = {
        "bucket",          "size",         "accuracy",          "micro_precision", "micro_recall",    "micro_specificity",
        "micro_f1",        "macro_precision", "macro_recall",   "macro_specificity", "macro_f1",      "c00",
        "c01",             "c02",          "c10",               "c11",             "c12",             "c20",
        "c21",             "c22",          "excluded"};
    return c;
}

inline std::string emit_report(const std::array<metrics::BucketReport, 3>& buckets, Format f) {
    if (f == Format::csv) {
        std::string out = csv::join(gated_columns());
        for (const auto& b : buckets) {
            csv::Row row = {std::string(to_string(b.bucket)), std::to_string(b.size)};
            if (!b.report) {
                row.resize(gated_columns().size(), std::string(kUndefinedCsv));
                for (std::size_t i = 11; i < 20; ++i) row[i] = "0";
                row[20] = "";
            } else {
                const auto& r = *b.report;
                row.push_back(csv_value(r.accuracy));
                for (const auto* avg : {&r.micro, &r.macro})
                    for (auto v : {avg->precision, avg->recall, avg->specificity, avg->f1}) row.push_back(csv_value(v));
                for (const auto& line : r.confusion)
                    for (auto c : line) row.push_back(std::to_string(c));
                std::string ex;
                for (const auto& e : r.excluded) ex += (ex.empty() ? "" : ";") + e;
                row.push_back(ex);
            }
            out += csv::join(row);
        }
        return out;
    }

    auto table = [&](bool micro) {
        std::vector<std::vector<std::string>> rows = {{"Quality Group", "N", "Accuracy", "Sensitivity", "Specificity", "F1-Score"}};
        for (const auto& b : buckets) {
            std::vector<std::string> row = {std::string(bucket_label(b.bucket)), std::to_string(b.size)};
            if (!b.report) {
                row.insert(row.end(), 4, "empty");
            } else {
                const auto& avg = micro ? b.report->micro : b.report->macro;
                row.push_back(fixed4(b.report->accuracy));
                row.push_back(text_value(avg.recall));
                row.push_back(text_value(avg.specificity));
                row.push_back(text_value(avg.f1));
            }
            rows.push_back(std::move(row));
        }
        return aligned_table(rows);
    };
    std::string out = "Micro-averaged\n" + table(true) + "\nMacro-averaged\n" + table(false);
    std::string notes;
    for (const auto& b : buckets)
        if (b.report)
            for (const auto& e : b.report->excluded) notes += "  " + std::string(to_string(b.bucket)) + ": " + e + " undefined, excluded from macro mean\n";
    if (!notes.empty()) out += "\n" + notes;
    return out;
}

}  // namespace fundaq::report
