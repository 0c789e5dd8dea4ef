#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "curerate/config.hpp"
#include "curerate/csv.hpp"
#include "curerate/error.hpp"

namespace curerate {

using Date = std::chrono::year_month_day;

/// Parses an ISO-8601 calendar date (YYYY-MM-DD).
inline Date parse_date(std::string_view text) {
    int y = 0;
    unsigned m = 0, d = 0;
    auto bad = [&] { return Error(ErrorCode::Parse, "invalid ISO date: " + std::string(text)); };
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw bad();
    auto num = [&](std::size_t pos, std::size_t len, auto& out) {
        auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, out);
        if (ec != std::errc{} || ptr != text.data() + pos + len) throw bad();
    };
    num(0, 4, y);
    num(5, 2, m);
    num(8, 2, d);
    Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!date.ok()) throw bad();
    return date;
}

inline std::string format_date(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
    return buf;
}

struct LoanSnapshot {
    std::string loan_id;
    Date as_of;
    int days_past_due = 0;
    bool forborne = false;
    double balance = 0.0;
};

struct ObservedTransition {
    std::string loan_id;
    int from_state = 0;
    int to_state = 0;
    double weight = 1.0;

    friend bool operator==(const ObservedTransition&, const ObservedTransition&) = default;
};

/// Maps a loan to its chain state from whole months past due and the forborne flag.
inline int assign_state(const LoanSnapshot& snap, const ChainConfig& cfg) {
    const int m = snap.days_past_due / cfg.month_length_days;
    if (m >= cfg.n_writeoff) return state::kLost;
    if (snap.forborne && m < cfg.npl_threshold) return state::kForborne;
    if (m == 0) return state::kCured;
    return state::past_due(m);
}

namespace detail {

inline Date common_as_of(const std::vector<LoanSnapshot>& snaps, const char* which) {
    if (snaps.empty()) throw Error(ErrorCode::EmptyInput, std::string(which) + " snapshot is empty");
    const Date d = snaps.front().as_of;
    for (const auto& s : snaps) {
        if (s.as_of != d) {
            throw Error(ErrorCode::DateMismatch,
                        std::string(which) + " snapshot mixes as_of dates " + format_date(d) +
                            " and " + format_date(s.as_of));
        }
    }
    return d;
}

inline std::map<std::string, const LoanSnapshot*> index_by_id(const std::vector<LoanSnapshot>& snaps) {
    std::map<std::string, const LoanSnapshot*> out;
    for (const auto& s : snaps) {
        if (!out.emplace(s.loan_id, &s).second) {
            throw Error(ErrorCode::DuplicateLoan, "loan_id '" + s.loan_id + "' appears twice");
        }
    }
    return out;
}

}  // namespace detail

/// Pairs two annual snapshots into observed transitions.
///
/// Only loans in a transitive state at the earlier date emit an observation.
/// A forborne loan resolves to Cured when it is current (zero months past due)
/// a year later and to Lost otherwise. Loans missing from `curr` follow
/// `cfg.disappearance_policy`. Output is sorted by loan_id.
inline std::vector<ObservedTransition> pair_snapshots(const std::vector<LoanSnapshot>& prev,
                                                      const std::vector<LoanSnapshot>& curr,
                                                      const ChainConfig& cfg) {
    using namespace std::chrono;
    const Date prev_date = detail::common_as_of(prev, "previous");
    const Date curr_date = detail::common_as_of(curr, "current");

    Date anniversary = prev_date + years{1};
    if (!anniversary.ok()) anniversary = anniversary.year() / anniversary.month() / last;  // Feb 29
    const auto gap = (sys_days{curr_date} - sys_days{anniversary}).count();
    if (gap < -cfg.date_tolerance_days || gap > cfg.date_tolerance_days) {
        throw Error(ErrorCode::DateMismatch, "snapshots " + format_date(prev_date) + " and " +
                                                 format_date(curr_date) + " are not one year apart");
    }

    const auto prev_by_id = detail::index_by_id(prev);
    const auto curr_by_id = detail::index_by_id(curr);

    std::vector<ObservedTransition> out;
    for (const auto& [id, snap] : prev_by_id) {
        const int from = assign_state(*snap, cfg);
        if (state::is_absorbing(from)) continue;

        const double weight = cfg.weighting == Weighting::Count ? 1.0 : snap->balance;
        if (!(weight > 0.0)) continue;

        int to = state::kLost;
        auto it = curr_by_id.find(id);
        if (it == curr_by_id.end()) {
            if (cfg.disappearance_policy == DisappearancePolicy::Exclude) continue;
        } else if (from == state::kForborne) {
            const int months = it->second->days_past_due / cfg.month_length_days;
            to = months == 0 ? state::kCured : state::kLost;
        } else {
            to = assign_state(*it->second, cfg);
        }
        out.push_back({id, from, to, weight});
    }
    return out;
}

namespace detail {

inline bool parse_bool(const std::string& s, int lineno) {
    if (s == "1" || s == "true" || s == "TRUE" || s == "True") return true;
    if (s == "0" || s == "false" || s == "FALSE" || s == "False") return false;
    throw Error(ErrorCode::Parse, "line " + std::to_string(lineno) + ": bad forborne flag '" + s + "'");
}

inline long long parse_integer(const std::string& s, int lineno, const char* what) {
    long long out = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw Error(ErrorCode::Parse, "line " + std::to_string(lineno) + ": bad " + what + " '" + s + "'");
    }
    return out;
}

inline void expect_header(const std::vector<std::string>& got, const std::vector<std::string>& want) {
    std::vector<std::string> trimmed;
    for (const auto& g : got) trimmed.emplace_back(ConfigFile::trim(g));
    if (trimmed != want) {
        std::string w;
        for (const auto& s : want) w += (w.empty() ? "" : ",") + s;
        throw Error(ErrorCode::Parse, "expected CSV header '" + w + "'");
    }
}

}  // namespace detail

/// Reads `loan_id,as_of,days_past_due,forborne,balance`.
inline std::vector<LoanSnapshot> read_snapshots(std::istream& in) {
    auto records = csv::read_records(in);
    if (records.empty()) throw Error(ErrorCode::Parse, "snapshot CSV has no header");
    detail::expect_header(records.front().second,
                          {"loan_id", "as_of", "days_past_due", "forborne", "balance"});
    std::vector<LoanSnapshot> out;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& [lineno, f] = records[r];
        if (f.size() != 5) {
            throw Error(ErrorCode::Parse, "line " + std::to_string(lineno) + ": expected 5 fields");
        }
        LoanSnapshot s;
        s.loan_id = f[0];
        s.as_of = parse_date(ConfigFile::trim(f[1]));
        const auto dpd = detail::parse_integer(std::string(ConfigFile::trim(f[2])), lineno, "days_past_due");
        if (dpd < 0) {
            throw Error(ErrorCode::InvariantViolation,
                        "line " + std::to_string(lineno) + ": negative days_past_due");
        }
        s.days_past_due = static_cast<int>(dpd);
        s.forborne = detail::parse_bool(std::string(ConfigFile::trim(f[3])), lineno);
        s.balance = ConfigFile::parse_double(ConfigFile::trim(f[4]), "balance");
        if (s.balance < 0.0) {
            throw Error(ErrorCode::InvariantViolation, "line " + std::to_string(lineno) + ": negative balance");
        }
        out.push_back(std::move(s));
    }
    detail::index_by_id(out);
    return out;
}

inline std::vector<LoanSnapshot> read_snapshots(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Parse, "cannot open " + path);
    return read_snapshots(in);
}

/// Reads `loan_id,state_from,state_to,weight` with integer state indices.
inline std::vector<ObservedTransition> read_transitions(std::istream& in) {
    auto records = csv::read_records(in);
    if (records.empty()) throw Error(ErrorCode::Parse, "transitions CSV has no header");
    detail::expect_header(records.front().second, {"loan_id", "state_from", "state_to", "weight"});
    std::vector<ObservedTransition> out;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& [lineno, f] = records[r];
        if (f.size() != 4) {
            throw Error(ErrorCode::Parse, "line " + std::to_string(lineno) + ": expected 4 fields");
        }
        ObservedTransition t;
        t.loan_id = f[0];
        t.from_state = static_cast<int>(detail::parse_integer(std::string(ConfigFile::trim(f[1])), lineno, "state_from"));
        t.to_state = static_cast<int>(detail::parse_integer(std::string(ConfigFile::trim(f[2])), lineno, "state_to"));
        t.weight = ConfigFile::parse_double(ConfigFile::trim(f[3]), "weight");
        out.push_back(std::move(t));
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.loan_id < b.loan_id; });
    return out;
}

inline std::vector<ObservedTransition> read_transitions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Parse, "cannot open " + path);
    return read_transitions(in);
}

inline void write_transitions(std::ostream& out, const std::vector<ObservedTransition>& ts) {
    out << "loan_id,state_from,state_to,weight\n";
    for (const auto& t : ts) {
        out << csv::quote_if_needed(t.loan_id) << ',' << t.from_state << ',' << t.to_state << ','
            << csv::fixed6(t.weight) << '\n';
    }
}

}  // namespace curerate
