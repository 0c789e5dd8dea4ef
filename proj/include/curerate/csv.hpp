#pragma once

#include <cstdio>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "curerate/error.hpp"

namespace curerate::csv {

/// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    if (quoted) throw Error(ErrorCode::Parse, "unterminated quoted field");
    fields.push_back(std::move(cur));
    return fields;
}

/// Reads non-blank records; returns (1-based line number, fields).
inline std::vector<std::pair<int, std::vector<std::string>>> read_records(std::istream& in) {
    std::vector<std::pair<int, std::vector<std::string>>> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.emplace_back(lineno, split(line));
    }
    return out;
}

/// Fixed six-decimal formatting with '.' separator.
inline std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v == 0.0 ? 0.0 : v);
    return buf;
}

inline std::string quote_if_needed(std::string_view s) {
    if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace curerate::csv
