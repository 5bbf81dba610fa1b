#pragma once

// Comma-separated tables with a header row, LF endings, shortest round-trip floats.

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "bsi/errors.hpp"
#include "bsi/linalg.hpp"

namespace bsi::io {

/// Missing files, unparsable content, schema violations.
class DataError : public Error {
public:
    using Error::Error;
};

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& context) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s == "nan") return std::nan("");
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
        throw DataError(context + ": cannot parse number '" + std::string(s) + "'");
    }
    return v;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        throw DataError("table has no column '" + name + "'");
    }
};

inline std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.emplace_back(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    for (auto& f : out) {
        while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
        while (!f.empty() && f.front() == ' ') f.erase(f.begin());
    }
    return out;
}

inline Table read_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    Table t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_line(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
    }
    if (t.header.empty()) throw DataError("'" + path + "' is empty");
    return t;
}

inline void write_table(const std::string& path, const Table& t) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path + "'");
    const auto emit = [&out](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out << ',';
            out << fields[i];
        }
        out << '\n';
    };
    emit(t.header);
    for (const auto& r : t.rows) emit(r);
    if (!out) throw DataError("write to '" + path + "' failed");
}

/// Single-column numeric CSV with the given header name.
inline Vector read_vector_csv(const std::string& path, const std::string& name) {
    const Table t = read_table(path);
    const std::size_t c = t.column(name);
    Vector v(static_cast<Index>(t.rows.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        v(static_cast<Index>(i)) = parse_double(t.rows[i][c], path + ":" + std::to_string(i + 2));
        if (!std::isfinite(v(static_cast<Index>(i)))) {
            throw DataError(path + ":" + std::to_string(i + 2) + ": non-finite value");
        }
    }
    if (v.size() == 0) throw DataError("'" + path + "' has no data rows");
    return v;
}

inline void write_vector_csv(const std::string& path, const std::string& name, const Vector& v) {
    Table t;
    t.header = {name};
    t.rows.reserve(static_cast<std::size_t>(v.size()));
    for (Index i = 0; i < v.size(); ++i) t.rows.push_back({format_double(v(i))});
    write_table(path, t);
}

}  // namespace bsi::io
