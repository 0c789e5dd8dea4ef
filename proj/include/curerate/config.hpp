#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "curerate/error.hpp"

namespace curerate {

enum class Weighting { Count, Balance };
enum class ZeroRowPolicy { Error, Lost };
enum class DisappearancePolicy { Lost, Exclude };

/// Chain layout and estimation conventions.
///
/// States are indexed Cured=0, Lost=1, Forborne=2 and PastDue(m)=m+2 for
/// m in [1, N-1], giving N+2 states in total.
struct ChainConfig {
    int n_writeoff = 8;
    int npl_threshold = 3;
    double delta = 0.5;
    int month_length_days = 30;
    Weighting weighting = Weighting::Count;
    ZeroRowPolicy zero_row_policy = ZeroRowPolicy::Lost;
    DisappearancePolicy disappearance_policy = DisappearancePolicy::Lost;
    int date_tolerance_days = 15;
    double edge_threshold = 0.0;

    int n_states() const noexcept { return n_writeoff + 2; }

    void validate() const {
        if (n_writeoff < 4) {
            throw Error(ErrorCode::InvariantViolation, "n_writeoff must be at least 4");
        }
        if (npl_threshold < 1 || npl_threshold >= n_writeoff) {
            throw Error(ErrorCode::InvariantViolation,
                        "npl_threshold must satisfy 1 <= npl_threshold < n_writeoff");
        }
        if (!(delta > 0.0 && delta < 1.0)) {
            throw Error(ErrorCode::InvariantViolation, "delta must lie in (0, 1)");
        }
        if (month_length_days < 1) {
            throw Error(ErrorCode::InvariantViolation, "month_length_days must be positive");
        }
        if (date_tolerance_days < 0) {
            throw Error(ErrorCode::InvariantViolation, "date_tolerance_days must be non-negative");
        }
        if (edge_threshold < 0.0) {
            throw Error(ErrorCode::InvariantViolation, "edge_threshold must be non-negative");
        }
    }
};

namespace state {
inline constexpr int kCured = 0;
inline constexpr int kLost = 1;
inline constexpr int kForborne = 2;
inline constexpr int kFirstPastDue = 3;

constexpr int past_due(int months) noexcept { return months + 2; }
constexpr int months_past_due(int index) noexcept { return index - 2; }
constexpr bool is_absorbing(int index) noexcept { return index == kCured || index == kLost; }

inline std::string label(int index) { return "S" + std::to_string(index); }
}  // namespace state

/// Flat `key = value` configuration text. `#` starts a comment.
class ConfigFile {
public:
    ConfigFile() = default;

    static ConfigFile parse(std::istream& in) {
        ConfigFile cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const auto trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string_view::npos) {
                throw Error(ErrorCode::Parse,
                            "config line " + std::to_string(lineno) + ": expected key=value");
            }
            std::string key(trim(trimmed.substr(0, eq)));
            std::string value(trim(trimmed.substr(eq + 1)));
            if (key.empty()) {
                throw Error(ErrorCode::Parse, "config line " + std::to_string(lineno) + ": empty key");
            }
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static ConfigFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorCode::Parse, "cannot open config file " + path);
        return parse(in);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    std::optional<std::string> get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<double> get_double(const std::string& key) const {
        auto v = get(key);
        if (!v) return std::nullopt;
        return parse_double(*v, key);
    }

    std::optional<std::int64_t> get_int(const std::string& key) const {
        auto v = get(key);
        if (!v) return std::nullopt;
        std::int64_t out = 0;
        auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
        if (ec != std::errc{} || ptr != v->data() + v->size()) {
            throw Error(ErrorCode::Parse, "config key '" + key + "': not an integer: " + *v);
        }
        return out;
    }

    std::optional<std::uint64_t> get_uint(const std::string& key) const {
        auto v = get(key);
        if (!v) return std::nullopt;
        std::uint64_t out = 0;
        auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
        if (ec != std::errc{} || ptr != v->data() + v->size()) {
            throw Error(ErrorCode::Parse, "config key '" + key + "': not an unsigned integer: " + *v);
        }
        return out;
    }

    ChainConfig chain_config() const {
        ChainConfig c;
        if (auto v = get_int("n_writeoff")) c.n_writeoff = static_cast<int>(*v);
        if (auto v = get_int("npl_threshold")) c.npl_threshold = static_cast<int>(*v);
        if (auto v = get_double("delta")) c.delta = *v;
        if (auto v = get_int("month_length_days")) c.month_length_days = static_cast<int>(*v);
        if (auto v = get_int("date_tolerance_days")) c.date_tolerance_days = static_cast<int>(*v);
        if (auto v = get_double("edge_threshold")) c.edge_threshold = *v;
        if (auto v = get("weighting")) {
            if (*v == "count") c.weighting = Weighting::Count;
            else if (*v == "balance") c.weighting = Weighting::Balance;
            else throw Error(ErrorCode::Parse, "weighting must be count or balance");
        }
        if (auto v = get("zero_row_policy")) {
            if (*v == "lost") c.zero_row_policy = ZeroRowPolicy::Lost;
            else if (*v == "error") c.zero_row_policy = ZeroRowPolicy::Error;
            else throw Error(ErrorCode::Parse, "zero_row_policy must be lost or error");
        }
        if (auto v = get("disappearance_policy")) {
            if (*v == "lost") c.disappearance_policy = DisappearancePolicy::Lost;
            else if (*v == "exclude") c.disappearance_policy = DisappearancePolicy::Exclude;
            else throw Error(ErrorCode::Parse, "disappearance_policy must be lost or exclude");
        }
        return c;
    }

    static double parse_double(std::string_view text, std::string_view what) {
        // from_chars is locale-independent.
        double out = 0.0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
        if (ec != std::errc{} || ptr != text.data() + text.size()) {
            throw Error(ErrorCode::Parse, std::string(what) + ": not a number: " + std::string(text));
        }
        return out;
    }

    static std::string_view trim(std::string_view s) {
        const auto first = s.find_first_not_of(" \t\r\n");
        if (first == std::string_view::npos) return {};
        const auto last = s.find_last_not_of(" \t\r\n");
        return s.substr(first, last - first + 1);
    }

private:
    std::map<std::string, std::string> values_;
};

inline std::string_view to_string(Weighting w) { return w == Weighting::Count ? "count" : "balance"; }
inline std::string_view to_string(ZeroRowPolicy p) { return p == ZeroRowPolicy::Lost ? "lost" : "error"; }
inline std::string_view to_string(DisappearancePolicy p) {
    return p == DisappearancePolicy::Lost ? "lost" : "exclude";
}

}  // namespace curerate
