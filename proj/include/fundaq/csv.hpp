#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fundaq::csv {

struct ParseError : std::runtime_error {
    ParseError(std::size_t row, std::string column, const std::string& what)
        : std::runtime_error("row " + std::to_string(row) + ", column '" + column + "': " + what),
          row(row), column(std::move(column)) {}
    std::size_t row;  // 1-based data row (header is row 0)
    std::string column;
};

using Row = std::vector<std::string>;

/// Splits CSV text into rows. Handles RFC 4180 quoting and CRLF line ends.
/// Blank lines are skipped.
inline std::vector<Row> split_rows(std::string_view text) {
    std::vector<Row> rows;
    Row row;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"': quoted = true; any = true; break;
        case ',':
            row.push_back(std::move(field));
            field.clear();
            any = true;
            break;
        case '\r': break;
        case '\n':
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
            break;
        default: field.push_back(c); any = true;
        }
    }
    if (quoted) throw std::runtime_error("unterminated quoted field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string quote(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline std::string join(const Row& row) {
    std::string out;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out.push_back(',');
        out += quote(row[i]);
    }
    out.push_back('\n');
    return out;
}

/// Maps required header names to column indices; throws naming the first absent column.
inline std::vector<std::size_t> require_columns(const Row& header, const std::vector<std::string>& names) {
    std::vector<std::size_t> idx;
    for (const auto& name : names) {
        std::size_t found = header.size();
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) found = i;
        if (found == header.size()) throw ParseError(0, name, "missing column");
        idx.push_back(found);
    }
    return idx;
}

inline const std::string& cell(const Row& row, std::size_t col, std::size_t row_no, const std::string& name) {
    if (col >= row.size()) throw ParseError(row_no, name, "missing value");
    return row[col];
}

inline long long to_int(const std::string& s, std::size_t row_no, const std::string& name) {
    long long v = 0;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || p != end || s.empty()) throw ParseError(row_no, name, "not an integer: '" + s + "'");
    return v;
}

inline double to_real(const std::string& s, std::size_t row_no, const std::string& name) {
    // strtod rather than from_chars<double>: the latter is missing from older libstdc++.
    if (s.empty()) throw ParseError(row_no, name, "empty value");
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) throw ParseError(row_no, name, "not a number: '" + s + "'");
    return v;
}

/// Shortest round-tripping decimal for a double.
inline std::string full_precision(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace fundaq::csv
