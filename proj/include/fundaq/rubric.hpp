#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fundaq/csv.hpp"

namespace fundaq {

/// The eight FundaQ-8 attributes, in rubric order.
enum class Attribute : std::uint8_t {
    resolution,
    field_of_view,
    color_fidelity,
    artifacts,
    vessels,
    macula,
    optic_disc,
    optic_cup,
};

inline constexpr std::size_t kAttributeCount = 8;
inline constexpr int kMaxAttributeScore = 2;
inline constexpr int kMaxTotal = kMaxAttributeScore * static_cast<int>(kAttributeCount);

inline constexpr std::array<std::string_view, kAttributeCount> kAttributeNames = {
    "resolution", "field_of_view", "color_fidelity", "artifacts",
    "vessels",    "macula",        "optic_disc",     "optic_cup",
};

/// One grader's scores for one image. Each entry is expected in {0,1,2};
/// out-of-range values are representable so that validation can report them.
struct Fundaq8Sheet {
    std::array<int, kAttributeCount> scores{};

    int& operator[](Attribute a) { return scores[static_cast<std::size_t>(a)]; }
    int operator[](Attribute a) const { return scores[static_cast<std::size_t>(a)]; }

    int total() const {
        int t = 0;
        for (int s : scores) t += s;
        return t;
    }

    static Fundaq8Sheet uniform(int v) {
        Fundaq8Sheet s;
        s.scores.fill(v);
        return s;
    }

    friend bool operator==(const Fundaq8Sheet&, const Fundaq8Sheet&) = default;
};

struct InvalidSheet : std::invalid_argument {
    explicit InvalidSheet(std::vector<Attribute> fields)
        : std::invalid_argument(describe(fields)), fields(std::move(fields)) {}
    std::vector<Attribute> fields;

private:
    static std::string describe(const std::vector<Attribute>& fs) {
        std::string msg = "attribute score outside {0,1,2}:";
        for (auto f : fs) msg += " " + std::string(kAttributeNames[static_cast<std::size_t>(f)]);
        return msg;
    }
};

/// Continuous quality in [0,1].
class QualityScore {
public:
    QualityScore() = default;
    explicit QualityScore(double v) : value_(v) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::out_of_range("quality score outside [0,1]: " + std::to_string(v));
    }
    double value() const { return value_; }
    friend bool operator==(const QualityScore&, const QualityScore&) = default;

private:
    double value_ = 0.0;
};

enum class QualityBucket : std::uint8_t { bad, medium, good };

inline std::string_view to_string(QualityBucket b) {
    switch (b) {
    case QualityBucket::bad: return "Bad";
    case QualityBucket::medium: return "Medium";
    case QualityBucket::good: return "Good";
    }
    return "?";
}

/// Empty result means the sheet is valid.
inline std::vector<Attribute> validate_sheet(const Fundaq8Sheet& sheet) {
    std::vector<Attribute> bad;
    for (std::size_t i = 0; i < kAttributeCount; ++i)
        if (sheet.scores[i] < 0 || sheet.scores[i] > kMaxAttributeScore) bad.push_back(static_cast<Attribute>(i));
    return bad;
}

/// total/16. The total is an exact integer, so the single division is correctly rounded.
inline QualityScore normalize_sheet(const Fundaq8Sheet& sheet) {
    if (auto bad = validate_sheet(sheet); !bad.empty()) throw InvalidSheet(std::move(bad));
    return QualityScore(static_cast<double>(sheet.total()) / kMaxTotal);
}

inline constexpr double kMediumLowerBound = 0.4;
inline constexpr double kGoodLowerBound = 0.8;

/// [0,0.4) Bad, [0.4,0.8) Medium, [0.8,1] Good.
inline QualityBucket quality_bucket(double score) {
    if (!(score >= 0.0 && score <= 1.0)) throw std::out_of_range("quality score outside [0,1]");
    if (score < kMediumLowerBound) return QualityBucket::bad;
    if (score < kGoodLowerBound) return QualityBucket::medium;
    return QualityBucket::good;
}

inline QualityBucket quality_bucket(QualityScore s) { return quality_bucket(s.value()); }

struct LabelRecord {
    std::string image_id;
    std::string grader_id;
    std::int64_t timestamp = 0;  // UTC seconds
    Fundaq8Sheet sheet;

    friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

inline const std::vector<std::string>& label_csv_header() {
    static const std::vector<std::string> h = [] {
        std::vector<std::string> v = {"image_id", "grader_id", "timestamp"};
        for (auto n : kAttributeNames) v.emplace_back(n);
        return v;
    }();
    return h;
}

/// Parses the label CSV. Errors name the 1-based data row and the column.
inline std::vector<LabelRecord> parse_labels(std::string_view bytes) {
    const auto rows = csv::split_rows(bytes);
    if (rows.empty()) throw csv::ParseError(0, "image_id", "missing header");
    const auto& header_names = label_csv_header();
    const auto cols = csv::require_columns(rows.front(), header_names);

    std::vector<LabelRecord> out;
    out.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        LabelRecord rec;
        rec.image_id = csv::cell(row, cols[0], r, header_names[0]);
        if (rec.image_id.empty()) throw csv::ParseError(r, "image_id", "empty image_id");
        rec.grader_id = csv::cell(row, cols[1], r, header_names[1]);
        if (rec.grader_id.empty()) throw csv::ParseError(r, "grader_id", "empty grader_id");
        rec.timestamp = csv::to_int(csv::cell(row, cols[2], r, header_names[2]), r, header_names[2]);
        for (std::size_t a = 0; a < kAttributeCount; ++a) {
            const auto& name = header_names[3 + a];
            const auto v = csv::to_int(csv::cell(row, cols[3 + a], r, name), r, name);
            if (v < 0 || v > kMaxAttributeScore) throw csv::ParseError(r, name, "score out of range: " + std::to_string(v));
            rec.sheet.scores[a] = static_cast<int>(v);
        }
        out.push_back(std::move(rec));
    }
    return out;
}

inline std::string serialize_labels(const std::vector<LabelRecord>& records) {
    std::string out = csv::join(label_csv_header());
    for (const auto& rec : records) {
        csv::Row row = {rec.image_id, rec.grader_id, std::to_string(rec.timestamp)};
        for (int s : rec.sheet.scores) row.push_back(std::to_string(s));
        out += csv::join(row);
    }
    return out;
}

/// Per image, the unweighted mean of each record's normalized score.
inline std::map<std::string, QualityScore> aggregate_labels(const std::vector<LabelRecord>& records) {
    struct Acc {
        long long total_points = 0;
        long long count = 0;
    };
    std::map<std::string, Acc> acc;
    for (const auto& rec : records) {
        if (auto bad = validate_sheet(rec.sheet); !bad.empty()) throw InvalidSheet(std::move(bad));
        auto& a = acc[rec.image_id];
        a.total_points += rec.sheet.total();
        a.count += 1;
    }
    // Sum of integer totals divided once keeps single-grader scores exactly total/16.
    std::map<std::string, QualityScore> out;
    for (const auto& [id, a] : acc)
        out.emplace(id, QualityScore(static_cast<double>(a.total_points) / static_cast<double>(kMaxTotal * a.count)));
    return out;
}

/// Level descriptions per attribute, index = score (0,1,2). Served to the grading console.
struct RubricEntry {
    std::string_view attribute;
    std::string_view title;
    std::array<std::string_view, 3> levels;
};

inline constexpr std::array<RubricEntry, kAttributeCount> kRubric = {{
    {"resolution", "Resolution (Blurry)",
     {"Blurry; key features difficult to distinguish.",
      "Clear but slightly blurry; details still distinguishable.",
      "Very clear, sharp details visible."}},
    {"field_of_view", "Field of View (Coverage)",
     {"Incomplete; key features missing (e.g., macula not visible).",
      "Partial coverage; optic disc and macula visible, but periphery incomplete.",
      "Full coverage, including optic disc, macula, and peripheral retina."}},
    {"color_fidelity", "Color Fidelity",
     {"Severe discoloration; features difficult to identify.",
      "Slight discoloration; features still identifiable.",
      "Natural, realistic colors; no discoloration."}},
    {"artifacts", "Presence of Artifacts",
     {"Major artifacts obscure key features (e.g., glare or smudges).",
      "Minor artifacts (e.g., slight glare or dust) that do not obscure key features.",
      "No artifacts; image is clean."}},
    {"vessels", "Vessels",
     {"Vessels are blurry or indistinguishable.",
      "Vessels are partially visible; slight loss of detail.",
      "Vessels are clearly visible with good contrast."}},
    {"macula", "Macula",
     {"Macula is not visible or indistinct.",
      "Macula is visible, but slightly blurred or with some detail loss.",
      "Macula is clearly visible with defined edges."}},
    {"optic_disc", "Optic Disc",
     {"Optic disc is not visible or indistinct.",
      "Optic disc is visible, but slightly blurred or with some detail loss.",
      "Optic disc is clearly visible with distinct edges."}},
    {"optic_cup", "Optic Cup",
     {"Optic cup is not visible or indistinct.",
      "Optic cup is visible, but slightly blurred or with some detail loss.",
      "Optic cup is clearly visible and distinguishable from the disc."}},
}};

}  // namespace fundaq
