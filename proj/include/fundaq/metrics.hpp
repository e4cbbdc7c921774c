#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fundaq/csv.hpp"
#include "fundaq/rubric.hpp"
#include "fundaq/stats.hpp"

namespace fundaq::metrics {

struct RegressionReport {
    double mse = 0;
    double mae = 0;
    double rmse = 0;
    std::optional<double> r2;                  // nullopt: zero-variance targets
    std::optional<double> explained_variance;  // nullopt: zero-variance targets
    double median_abs_error = 0;
};

inline RegressionReport regression_metrics(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size() || pred.empty()) throw std::invalid_argument("regression_metrics: need equal non-zero lengths");
    const double n = static_cast<double>(pred.size());
    std::vector<double> abs_err(pred.size()), resid(pred.size());
    double sse = 0, sae = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        resid[i] = target[i] - pred[i];
        abs_err[i] = std::abs(resid[i]);
        sse += resid[i] * resid[i];
        sae += abs_err[i];
    }
    RegressionReport r;
    r.mse = sse / n;
    r.mae = sae / n;
    r.rmse = std::sqrt(r.mse);

    const double mt = stats::mean(target);
    double sst = 0;
    for (double t : target) sst += (t - mt) * (t - mt);
    if (sst > 0.0) {
        r.r2 = 1.0 - sse / sst;
        const double mr = stats::mean(resid);
        double ssr = 0;
        for (double e : resid) ssr += (e - mr) * (e - mr);
        r.explained_variance = 1.0 - ssr / sst;
    }

    std::sort(abs_err.begin(), abs_err.end());
    const std::size_t m = abs_err.size();
    r.median_abs_error = m % 2 ? abs_err[m / 2] : 0.5 * (abs_err[m / 2 - 1] + abs_err[m / 2]);
    return r;
}

struct StatReport {
    std::optional<double> spearman_rho;
    double anova_f = 0;
    double anova_p = 1;
    double ols_intercept = 0;
    double ols_slope = 0;
    std::optional<double> ols_r2;
    double ols_slope_p = 1;
};

/// Association between continuous predicted scores and ordinal categories:
/// Spearman, one-way ANOVA across categories, OLS of score on category.
inline StatReport compare_categories(std::span<const int> category, std::span<const double> score) {
    if (category.size() != score.size()) throw std::invalid_argument("compare_categories: length mismatch");
    std::vector<double> cat(category.begin(), category.end());
    std::map<int, std::vector<double>> by_cat;
    for (std::size_t i = 0; i < category.size(); ++i) by_cat[category[i]].push_back(score[i]);
    std::vector<std::vector<double>> groups;
    for (auto& [_, g] : by_cat) groups.push_back(std::move(g));

    StatReport r;
    r.spearman_rho = stats::spearman(score, cat);
    const auto anova = stats::anova_oneway(groups);
    r.anova_f = anova.f;
    r.anova_p = anova.p;
    const auto ols = stats::ols_simple(cat, score);
    r.ols_intercept = ols.intercept;
    r.ols_slope = ols.slope;
    r.ols_r2 = ols.r2;
    r.ols_slope_p = ols.slope_p;
    return r;
}

/// 0 -> 0, {1,2} -> 1, {3,4} -> 2.
inline int collapse_dr_grade(int grade) {
    if (grade < 0 || grade > 4) throw std::out_of_range("DR grade outside 0..4: " + std::to_string(grade));
    return grade == 0 ? 0 : grade <= 2 ? 1 : 2;
}

inline constexpr std::size_t kClasses = 3;
using Confusion = std::array<std::array<std::uint64_t, kClasses>, kClasses>;  // [true][pred]

struct ClassMetrics {
    std::optional<double> precision;
    std::optional<double> recall;  // sensitivity
    std::optional<double> specificity;
    std::optional<double> f1;
};

struct AveragedMetrics {
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> specificity;
    std::optional<double> f1;
};

struct ClassificationReport {
    Confusion confusion{};
    std::uint64_t total = 0;
    double accuracy = 0;
    std::array<ClassMetrics, kClasses> per_class;
    AveragedMetrics micro;
    AveragedMetrics macro;
    /// Classes whose metric was undefined and left out of the macro mean.
    std::vector<std::string> excluded;
};

namespace detail {
inline std::optional<double> ratio(double num, double den) {
    if (den == 0.0) return std::nullopt;
    return num / den;
}
inline std::optional<double> harmonic(std::optional<double> p, std::optional<double> r) {
    if (!p || !r) return std::nullopt;
    if (*p + *r == 0.0) return 0.0;
    return 2.0 * *p * *r / (*p + *r);
}
}  // namespace detail

/// One-vs-rest metrics per class, pooled (micro) and unweighted (macro) averages.
/// Micro precision, recall and F1 all reduce to trace/total.
inline ClassificationReport classification_report(const Confusion& c) {
    ClassificationReport r;
    r.confusion = c;
    std::uint64_t trace = 0;
    for (std::size_t i = 0; i < kClasses; ++i) {
        trace += c[i][i];
        for (std::size_t j = 0; j < kClasses; ++j) r.total += c[i][j];
    }
    if (r.total == 0) throw std::invalid_argument("classification_report: empty confusion matrix");
    const double total = static_cast<double>(r.total);
    r.accuracy = static_cast<double>(trace) / total;

    double tp_sum = 0, fp_sum = 0, fn_sum = 0, tn_sum = 0;
    std::array<std::vector<double>, 4> macro_terms;
    static constexpr std::array<const char*, 4> kMetricNames = {"precision", "recall", "specificity", "f1"};
    for (std::size_t k = 0; k < kClasses; ++k) {
        double tp = static_cast<double>(c[k][k]), fp = 0, fn = 0;
        for (std::size_t j = 0; j < kClasses; ++j) {
            if (j == k) continue;
            fp += static_cast<double>(c[j][k]);
            fn += static_cast<double>(c[k][j]);
        }
        const double tn = total - tp - fp - fn;
        tp_sum += tp;
        fp_sum += fp;
        fn_sum += fn;
        tn_sum += tn;

        auto& m = r.per_class[k];
        m.precision = detail::ratio(tp, tp + fp);
        m.recall = detail::ratio(tp, tp + fn);
        m.specificity = detail::ratio(tn, tn + fp);
        m.f1 = detail::harmonic(m.precision, m.recall);
        const std::array<std::optional<double>, 4> vals = {m.precision, m.recall, m.specificity, m.f1};
        for (std::size_t q = 0; q < 4; ++q) {
            if (vals[q]) macro_terms[q].push_back(*vals[q]);
            else r.excluded.push_back("class " + std::to_string(k) + " " + kMetricNames[q]);
        }
    }
    r.micro.precision = detail::ratio(tp_sum, tp_sum + fp_sum);
    r.micro.recall = detail::ratio(tp_sum, tp_sum + fn_sum);
    r.micro.specificity = detail::ratio(tn_sum, tn_sum + fp_sum);
    r.micro.f1 = detail::harmonic(r.micro.precision, r.micro.recall);

    auto avg = [](const std::vector<double>& v) -> std::optional<double> {
        if (v.empty()) return std::nullopt;
        double s = 0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    r.macro.precision = avg(macro_terms[0]);
    r.macro.recall = avg(macro_terms[1]);
    r.macro.specificity = avg(macro_terms[2]);
    r.macro.f1 = avg(macro_terms[3]);
    return r;
}

struct GatedRecord {
    std::string image_id;
    QualityScore quality;
    int dr_true = 0;  // 0..4
    int dr_pred = 0;  // 0..4
};

struct BucketReport {
    QualityBucket bucket;
    std::uint64_t size = 0;
    std::optional<ClassificationReport> report;  // nullopt for an empty bucket
};

/// Collapses both grades, routes each record by quality bucket and reports
/// DR performance per bucket (Bad, Medium, Good order).
inline std::array<BucketReport, 3> gated_report(std::span<const GatedRecord> records) {
    std::array<Confusion, 3> conf{};
    std::array<BucketReport, 3> out = {{{QualityBucket::bad, 0, {}}, {QualityBucket::medium, 0, {}}, {QualityBucket::good, 0, {}}}};
    for (const auto& rec : records) {
        const auto b = static_cast<std::size_t>(quality_bucket(rec.quality));
        const auto t = static_cast<std::size_t>(collapse_dr_grade(rec.dr_true));
        const auto p = static_cast<std::size_t>(collapse_dr_grade(rec.dr_pred));
        ++conf[b][t][p];
        ++out[b].size;
    }
    for (std::size_t b = 0; b < 3; ++b)
        if (out[b].size) out[b].report = classification_report(conf[b]);
    return out;
}

struct EyeqRow {
    std::string image_id;
    int category = 0;  // 0..2
    double predicted = 0;
};

/// `image_id,eyeq_category,predicted_score`
inline std::vector<EyeqRow> parse_eyeq_csv(std::string_view bytes) {
    const auto rows = csv::split_rows(bytes);
    const std::vector<std::string> names = {"image_id", "eyeq_category", "predicted_score"};
    if (rows.empty()) throw csv::ParseError(0, names[0], "missing header");
    const auto cols = csv::require_columns(rows.front(), names);
    std::vector<EyeqRow> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        EyeqRow e;
        e.image_id = csv::cell(rows[r], cols[0], r, names[0]);
        if (e.image_id.empty()) throw csv::ParseError(r, names[0], "empty image_id");
        const auto c = csv::to_int(csv::cell(rows[r], cols[1], r, names[1]), r, names[1]);
        if (c < 0 || c > 2) throw csv::ParseError(r, names[1], "category out of range: " + std::to_string(c));
        e.category = static_cast<int>(c);
        e.predicted = csv::to_real(csv::cell(rows[r], cols[2], r, names[2]), r, names[2]);
        if (!std::isfinite(e.predicted)) throw csv::ParseError(r, names[2], "non-finite score");
        out.push_back(std::move(e));
    }
    return out;
}

/// `image_id,quality_score,dr_true,dr_pred`
inline std::vector<GatedRecord> parse_gating_csv(std::string_view bytes) {
    const auto rows = csv::split_rows(bytes);
    const std::vector<std::string> names = {"image_id", "quality_score", "dr_true", "dr_pred"};
    if (rows.empty()) throw csv::ParseError(0, names[0], "missing header");
    const auto cols = csv::require_columns(rows.front(), names);
    std::vector<GatedRecord> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        GatedRecord g;
        g.image_id = csv::cell(rows[r], cols[0], r, names[0]);
        if (g.image_id.empty()) throw csv::ParseError(r, names[0], "empty image_id");
        const double q = csv::to_real(csv::cell(rows[r], cols[1], r, names[1]), r, names[1]);
        if (!(q >= 0.0 && q <= 1.0)) throw csv::ParseError(r, names[1], "score outside [0,1]");
        g.quality = QualityScore(q);
        for (std::size_t k : {std::size_t{2}, std::size_t{3}}) {
            const auto v = csv::to_int(csv::cell(rows[r], cols[k], r, names[k]), r, names[k]);
            if (v < 0 || v > 4) throw csv::ParseError(r, names[k], "DR grade out of range: " + std::to_string(v));
            (k == 2 ? g.dr_true : g.dr_pred) = static_cast<int>(v);
        }
        out.push_back(std::move(g));
    }
    return out;
}

struct EyeqComparison {
    StatReport stats;
    std::map<int, stats::Quartiles> by_category;  // box-plot data
};

inline EyeqComparison compare_eyeq(std::span<const EyeqRow> rows) {
    std::vector<int> cat;
    std::vector<double> score;
    std::map<int, std::vector<double>> groups;
    for (const auto& r : rows) {
        cat.push_back(r.category);
        score.push_back(r.predicted);
        groups[r.category].push_back(r.predicted);
    }
    EyeqComparison out{compare_categories(cat, score), {}};
    for (auto& [c, g] : groups) out.by_category.emplace(c, stats::quartiles(std::move(g)));
    return out;
}

}  // namespace fundaq::metrics
