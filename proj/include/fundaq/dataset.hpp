#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fundaq/csv.hpp"
#include "fundaq/rng.hpp"
#include "fundaq/rubric.hpp"

namespace fundaq::dataset {

struct ManifestEntry {
    std::string image_path;
    QualityScore score;
    std::optional<int> dr_grade;       // 0..4
    std::optional<int> eyeq_category;  // 0..2

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> warnings;
};

inline bool is_image_file(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png";
}

/// Binds PNG files in `image_dir` to labels by file stem. Entries are in
/// lexicographic path order; mismatches on either side become warnings.
inline Manifest build_manifest(const std::filesystem::path& image_dir, const std::map<std::string, QualityScore>& labels) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(image_dir, ec)) throw std::runtime_error("image directory not readable: " + image_dir.string());
    std::vector<fs::path> files;
    for (fs::directory_iterator it(image_dir, ec), end; !ec && it != end; it.increment(ec))
        if (it->is_regular_file() && is_image_file(it->path())) files.push_back(it->path());
    if (ec) throw std::runtime_error("image directory not readable: " + image_dir.string() + ": " + ec.message());
    std::sort(files.begin(), files.end());

    Manifest m;
    std::set<std::string> seen;
    for (const auto& f : files) {
        const auto stem = f.stem().string();
        auto it = labels.find(stem);
        if (it == labels.end()) {
            m.warnings.push_back("unlabeled file: " + f.string());
            continue;
        }
        seen.insert(stem);
        m.entries.push_back({f.string(), it->second, std::nullopt, std::nullopt});
    }
    for (const auto& [id, _] : labels)
        if (!seen.count(id)) m.warnings.push_back("labeled id with no file: " + id);
    return m;
}

inline const std::vector<std::string>& manifest_header() {
    static const std::vector<std::string> h = {"image_path", "score", "dr_grade", "eyeq_category"};
    return h;
}

inline std::string serialize_manifest(const std::vector<ManifestEntry>& entries) {
    std::string out = csv::join(manifest_header());
    for (const auto& e : entries)
        out += csv::join({e.image_path, csv::full_precision(e.score.value()),
                          e.dr_grade ? std::to_string(*e.dr_grade) : "",
                          e.eyeq_category ? std::to_string(*e.eyeq_category) : ""});
    return out;
}

inline std::vector<ManifestEntry> parse_manifest(std::string_view bytes) {
    const auto rows = csv::split_rows(bytes);
    if (rows.empty()) throw csv::ParseError(0, "image_path", "missing header");
    const auto& names = manifest_header();
    const auto cols = csv::require_columns(rows.front(), names);
    std::vector<ManifestEntry> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        ManifestEntry e;
        e.image_path = csv::cell(row, cols[0], r, names[0]);
        if (e.image_path.empty()) throw csv::ParseError(r, names[0], "empty path");
        const double s = csv::to_real(csv::cell(row, cols[1], r, names[1]), r, names[1]);
        if (!(s >= 0.0 && s <= 1.0)) throw csv::ParseError(r, names[1], "score outside [0,1]");
        e.score = QualityScore(s);
        auto optional_int = [&](std::size_t k, int hi) -> std::optional<int> {
            const std::string& v = cols[k] < row.size() ? row[cols[k]] : std::string();
            if (v.empty()) return std::nullopt;
            const auto x = csv::to_int(v, r, names[k]);
            if (x < 0 || x > hi) throw csv::ParseError(r, names[k], "value out of range: " + v);
            return static_cast<int>(x);
        };
        e.dr_grade = optional_int(2, 4);
        e.eyeq_category = optional_int(3, 2);
        out.push_back(std::move(e));
    }
    return out;
}

enum class Split : std::uint8_t { train, val, test };
inline constexpr std::array<Split, 3> kSplits = {Split::train, Split::val, Split::test};

inline std::string_view to_string(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "?";
}

inline Split split_from_string(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

/// Interior edges at the midpoints between multiples of 1/16: one stratum per
/// attainable rubric total.
inline std::vector<double> default_strata_edges() {
    std::vector<double> e;
    for (int k = 0; k < kMaxTotal; ++k) e.push_back((k + 0.5) / kMaxTotal);
    return e;
}

struct SplitConfig {
    std::array<double, 3> fractions{0.70, 0.15, 0.15};
    std::uint64_t seed = 42;
    std::vector<double> strata_edges = default_strata_edges();

    void validate() const {
        double sum = 0;
        for (double f : fractions) {
            if (!(f > 0.0)) throw std::invalid_argument("split fractions must be positive");
            sum += f;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");
        for (std::size_t i = 0; i < strata_edges.size(); ++i) {
            if (!(strata_edges[i] > 0.0 && strata_edges[i] < 1.0)) throw std::invalid_argument("strata edges must lie inside (0,1)");
            if (i && !(strata_edges[i] > strata_edges[i - 1])) throw std::invalid_argument("strata edges must be strictly increasing");
        }
    }

    std::size_t stratum_of(double score) const {
        return static_cast<std::size_t>(std::upper_bound(strata_edges.begin(), strata_edges.end(), score) - strata_edges.begin());
    }
    std::size_t strata_count() const { return strata_edges.size() + 1; }
};

using SplitAssignment = std::map<std::string, Split>;

/// Hamilton apportionment of n items to the given fractions. Ties on the
/// fractional part go to the lower split index.
inline std::array<std::size_t, 3> largest_remainder(std::size_t n, const std::array<double, 3>& fractions) {
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double q = fractions[k] * static_cast<double>(n);
        // Guard exact products like 0.7 * 1800 = 1259.9999999999998.
        double fl = std::floor(q + 1e-9);
        counts[k] = static_cast<std::size_t>(fl);
        rem[k] = std::max(0.0, q - fl);
        assigned += counts[k];
    }
    std::array<std::size_t, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    while (assigned > n) {
        // Only possible through the 1e-9 guard; take back from the smallest remainder.
        for (auto it = order.rbegin(); it != order.rend() && assigned > n; ++it)
            if (counts[*it] > 0) { --counts[*it]; --assigned; }
    }
    for (std::size_t i = 0; assigned < n; i = (i + 1) % 3, ++assigned) ++counts[order[i]];
    return counts;
}

namespace detail {

/// Per-stratum counts whose column sums equal the global apportionment and
/// whose cells each lie within [floor, floor+1] of the real-valued target.
/// Leftover units are placed by augmenting-path max flow on the bipartite
/// graph strata -> splits (cell capacity 1), trying larger remainders first.
inline std::vector<std::array<std::size_t, 3>> controlled_rounding(const std::vector<std::size_t>& sizes,
                                                                   const std::array<double, 3>& fractions,
                                                                   std::array<std::size_t, 3> global) {
    const std::size_t S = sizes.size();
    std::vector<std::array<std::size_t, 3>> cells(S);
    std::vector<std::array<double, 3>> rem(S);
    std::vector<std::size_t> stratum_need(S);
    std::array<long long, 3> split_need{};
    for (std::size_t k = 0; k < 3; ++k) split_need[k] = static_cast<long long>(global[k]);
    for (std::size_t s = 0; s < S; ++s) {
        std::size_t used = 0;
        for (std::size_t k = 0; k < 3; ++k) {
            const double q = fractions[k] * static_cast<double>(sizes[s]);
            const double fl = std::floor(q + 1e-9);
            cells[s][k] = static_cast<std::size_t>(fl);
            rem[s][k] = std::max(0.0, q - fl);
            used += cells[s][k];
            split_need[k] -= static_cast<long long>(cells[s][k]);
        }
        stratum_need[s] = sizes[s] - used;
    }

    // flow[s][k] in {0,1}: extra unit placed in cell (s,k).
    std::vector<std::array<int, 3>> flow(S, {0, 0, 0});
    std::array<long long, 3> split_recv{};

    // DFS over alternating paths: stratum -> split (unused cell) -> stratum (used cell) -> ...
    std::vector<char> visited_split;
    std::function<bool(std::size_t)> augment = [&](std::size_t s) -> bool {
        std::array<std::size_t, 3> order = {0, 1, 2};
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[s][a] > rem[s][b]; });
        for (std::size_t k : order) {
            if (flow[s][k] || visited_split[k]) continue;
            visited_split[k] = 1;
            if (split_recv[k] < split_need[k]) {
                flow[s][k] = 1;
                ++split_recv[k];
                return true;
            }
            // Split k is full: try to reroute one of its units from another stratum.
            for (std::size_t t = 0; t < S; ++t) {
                if (t == s || !flow[t][k]) continue;
                flow[t][k] = 0;
                --split_recv[k];
                if (augment(t)) {
                    flow[s][k] = 1;
                    ++split_recv[k];
                    return true;
                }
                flow[t][k] = 1;
                ++split_recv[k];
            }
        }
        return false;
    };

    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t u = 0; u < stratum_need[s]; ++u) {
            visited_split.assign(3, 0);
            if (!augment(s)) throw std::logic_error("stratified apportionment infeasible");
        }
    }
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t k = 0; k < 3; ++k) cells[s][k] += static_cast<std::size_t>(flow[s][k]);
    return cells;
}

}  // namespace detail

/// Stratified split: strata by score bins, per-stratum counts by controlled
/// rounding (global totals equal the largest-remainder apportionment of N),
/// then a seeded Fisher-Yates shuffle of each stratum's lexicographically
/// sorted paths fills train, val, test in that order.
inline SplitAssignment stratified_split(const std::vector<ManifestEntry>& manifest, const SplitConfig& cfg) {
    cfg.validate();
    if (manifest.empty()) throw std::invalid_argument("cannot split an empty manifest");

    std::vector<std::vector<std::string>> strata(cfg.strata_count());
    for (const auto& e : manifest) strata[cfg.stratum_of(e.score.value())].push_back(e.image_path);

    std::vector<std::size_t> sizes;
    for (auto& s : strata) {
        std::sort(s.begin(), s.end());
        if (std::adjacent_find(s.begin(), s.end()) != s.end()) throw std::invalid_argument("duplicate image_path in manifest");
        sizes.push_back(s.size());
    }
    const auto global = largest_remainder(manifest.size(), cfg.fractions);
    const auto cells = detail::controlled_rounding(sizes, cfg.fractions, global);

    Rng rng(cfg.seed);
    SplitAssignment out;
    for (std::size_t s = 0; s < strata.size(); ++s) {
        auto& items = strata[s];
        rng.shuffle(std::span<std::string>(items));
        std::size_t pos = 0;
        for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t c = 0; c < cells[s][k]; ++c) out.emplace(items[pos++], kSplits[k]);
    }
    return out;
}

struct StratumDeviation {
    std::size_t stratum;
    std::size_t size;
    std::array<std::size_t, 3> counts;
    std::array<double, 3> deviation;  // count - fraction * size
    bool flagged;
};

struct SplitReport {
    std::array<std::size_t, 3> totals{};
    std::vector<StratumDeviation> strata;  // non-empty strata only
    std::vector<std::size_t> flagged;
    bool ok() const { return flagged.empty(); }
};

inline SplitReport verify_split(const std::vector<ManifestEntry>& manifest, const SplitAssignment& assignment, const SplitConfig& cfg) {
    cfg.validate();
    std::vector<std::size_t> sizes(cfg.strata_count());
    std::vector<std::array<std::size_t, 3>> counts(cfg.strata_count(), {0, 0, 0});
    SplitReport rep;
    for (const auto& e : manifest) {
        auto it = assignment.find(e.image_path);
        if (it == assignment.end()) throw std::invalid_argument("assignment missing entry: " + e.image_path);
        const auto s = cfg.stratum_of(e.score.value());
        ++sizes[s];
        ++counts[s][static_cast<std::size_t>(it->second)];
        ++rep.totals[static_cast<std::size_t>(it->second)];
    }
    for (std::size_t s = 0; s < sizes.size(); ++s) {
        if (sizes[s] == 0) continue;
        StratumDeviation d{s, sizes[s], counts[s], {}, false};
        for (std::size_t k = 0; k < 3; ++k) {
            d.deviation[k] = static_cast<double>(counts[s][k]) - cfg.fractions[k] * static_cast<double>(sizes[s]);
            if (std::abs(d.deviation[k]) > 1.0 + 1e-9) d.flagged = true;
        }
        if (d.flagged) rep.flagged.push_back(s);
        rep.strata.push_back(d);
    }
    return rep;
}

inline std::string serialize_split(const SplitAssignment& a) {
    std::string out = csv::join({"image_path", "split"});
    for (const auto& [path, split] : a) out += csv::join({path, std::string(to_string(split))});
    return out;
}

inline SplitAssignment parse_split(std::string_view bytes) {
    const auto rows = csv::split_rows(bytes);
    if (rows.empty()) throw csv::ParseError(0, "image_path", "missing header");
    const auto cols = csv::require_columns(rows.front(), {"image_path", "split"});
    SplitAssignment out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& path = csv::cell(rows[r], cols[0], r, "image_path");
        const auto& split = csv::cell(rows[r], cols[1], r, "split");
        try {
            out[path] = split_from_string(split);
        } catch (const std::invalid_argument& e) {
            throw csv::ParseError(r, "split", e.what());
        }
    }
    return out;
}

}  // namespace fundaq::dataset
