#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "curerate/config.hpp"
#include "curerate/csv.hpp"
#include "curerate/error.hpp"
#include "curerate/loan_tape.hpp"
#include "curerate/matrix.hpp"

namespace curerate {

inline constexpr double kRowSumTolerance = 1e-9;
inline constexpr double kFileRowSumTolerance = 5e-3;

/// Row-stochastic matrix in canonical order: Cured, Lost, Forborne, PastDue(1..N-1).
///
/// Rows 0 and 1 are the unit vectors e0 and e1 and the Forborne row only
/// reaches the two absorbing states. Immutable once constructed.
class TransitionMatrix {
public:
    explicit TransitionMatrix(Matrix entries) : entries_(std::move(entries)) { validate(); }

    std::size_t n_states() const noexcept { return entries_.rows(); }
    std::size_t n_transitive() const noexcept { return entries_.rows() - 2; }
    /// Write-off threshold N implied by the dimension.
    int n_writeoff() const noexcept { return static_cast<int>(entries_.rows()) - 2; }

    double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }
    const Matrix& entries() const noexcept { return entries_; }

private:
    void validate() const {
        const std::size_t n = entries_.rows();
        if (n < 3 || entries_.cols() != n) {
            throw Error(ErrorCode::InvariantViolation,
                        "transition matrix must be square with at least 3 states");
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double v = entries_(i, j);
                if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
                    throw Error(ErrorCode::InvariantViolation,
                                "entry (" + std::to_string(i) + "," + std::to_string(j) +
                                    ") outside [0,1]");
                }
            }
            if (std::abs(entries_.row_sum(i) - 1.0) > kRowSumTolerance) {
                throw Error(ErrorCode::InvariantViolation,
                            "row " + std::to_string(i) + " does not sum to 1");
            }
        }
        for (std::size_t a = 0; a < 2; ++a) {
            if (entries_(a, a) != 1.0) {
                throw Error(ErrorCode::InvariantViolation,
                            "state " + std::to_string(a) + " must be absorbing");
            }
        }
        for (std::size_t j = 2; j < n; ++j) {
            if (entries_(state::kForborne, j) != 0.0) {
                throw Error(ErrorCode::InvariantViolation,
                            "forborne row may only reach the cured and lost states");
            }
        }
    }

    Matrix entries_;
};

/// Result of ratio estimation together with the per-row evidence behind it.
struct Estimate {
    TransitionMatrix matrix;
    std::vector<double> row_weight;    // total outgoing weight per state
    std::vector<long> row_count;       // number of observations per state
    std::vector<int> imputed_rows;     // transitive rows filled by zero_row_policy
};

inline Estimate estimate_with_counts(const std::vector<ObservedTransition>& transitions,
                                     const ChainConfig& cfg) {
    if (transitions.empty()) throw Error(ErrorCode::EmptyInput, "no observed transitions");
    const auto n = static_cast<std::size_t>(cfg.n_states());
    Matrix weights(n, n);
    std::vector<double> row_weight(n, 0.0);
    std::vector<long> row_count(n, 0);

    for (const auto& t : transitions) {
        if (t.from_state < 2 || static_cast<std::size_t>(t.from_state) >= n) {
            throw Error(ErrorCode::InvariantViolation,
                        "loan '" + t.loan_id + "': from_state " + std::to_string(t.from_state) +
                            " is not transitive");
        }
        if (t.to_state < 0 || static_cast<std::size_t>(t.to_state) >= n) {
            throw Error(ErrorCode::InvariantViolation,
                        "loan '" + t.loan_id + "': to_state out of range");
        }
        if (!(t.weight > 0.0) || !std::isfinite(t.weight)) {
            throw Error(ErrorCode::InvariantViolation, "loan '" + t.loan_id + "': weight must be positive");
        }
        weights(t.from_state, t.to_state) += t.weight;
        row_weight[t.from_state] += t.weight;
        ++row_count[t.from_state];
    }

    Matrix a(n, n);
    a(state::kCured, state::kCured) = 1.0;
    a(state::kLost, state::kLost) = 1.0;
    std::vector<int> imputed;
    for (std::size_t i = 2; i < n; ++i) {
        if (row_weight[i] == 0.0) {
            if (cfg.zero_row_policy == ZeroRowPolicy::Error) {
                throw Error(ErrorCode::ZeroRow, "state " + state::label(static_cast<int>(i)) +
                                                    " has no observations");
            }
            a(i, state::kLost) = 1.0;
            imputed.push_back(static_cast<int>(i));
            continue;
        }
        for (std::size_t j = 0; j < n; ++j) a(i, j) = weights(i, j) / row_weight[i];
        // Absorb the last ulp of rounding into the largest entry.
        const double drift = a.row_sum(i) - 1.0;
        auto row = a.row(i);
        *std::max_element(row.begin(), row.end()) -= drift;
    }
    return {TransitionMatrix(std::move(a)), std::move(row_weight), std::move(row_count),
            std::move(imputed)};
}

/// Ratio estimator A[i][j] = weight(i->j) / weight(i->*).
inline TransitionMatrix estimate(const std::vector<ObservedTransition>& transitions,
                                 const ChainConfig& cfg) {
    return estimate_with_counts(transitions, cfg).matrix;
}

/// Transitive-to-absorbing (T, N x 2) and transitive-to-transitive (S, N x N) blocks.
struct Blocks {
    Matrix T;
    Matrix S;
};

inline Blocks to_blocks(const TransitionMatrix& a) {
    const std::size_t n = a.n_transitive();
    return {a.entries().block(2, 0, n, 2), a.entries().block(2, 2, n, n)};
}

enum class Verdict { Applicable, Cyclic };

inline std::string_view to_string(Verdict v) { return v == Verdict::Applicable ? "applicable" : "cyclic"; }

struct CommunicationClass {
    std::vector<int> members;  // ascending
    bool closed = false;

    friend bool operator==(const CommunicationClass&, const CommunicationClass&) = default;
};

struct Classification {
    std::vector<CommunicationClass> classes;  // ordered by smallest member
    Verdict verdict = Verdict::Applicable;
    std::vector<CommunicationClass> offending_classes;
};

/// Strongly connected components of the digraph i -> j iff A[i][j] > threshold.
/// A class is closed when no edge leaves it; any closed class other than the
/// two absorbing singletons makes the chain cyclic.
inline Classification classify(const TransitionMatrix& a, double edge_threshold = 0.0) {
    const int n = static_cast<int>(a.n_states());
    auto edge = [&](int i, int j) { return a(i, j) > edge_threshold; };

    // Tarjan's algorithm; chains are small, recursion depth is at most n.
    std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
    std::vector<bool> on_stack(n, false);
    std::vector<int> stack;
    int counter = 0, n_comp = 0;
    std::function<void(int)> visit = [&](int v) {
        index[v] = low[v] = counter++;
        stack.push_back(v);
        on_stack[v] = true;
        for (int w = 0; w < n; ++w) {
            if (!edge(v, w)) continue;
            if (index[w] < 0) {
                visit(w);
                low[v] = std::min(low[v], low[w]);
            } else if (on_stack[w]) {
                low[v] = std::min(low[v], index[w]);
            }
        }
        if (low[v] == index[v]) {
            int w;
            do {
                w = stack.back();
                stack.pop_back();
                on_stack[w] = false;
                comp[w] = n_comp;
            } while (w != v);
            ++n_comp;
        }
    };
    for (int v = 0; v < n; ++v)
        if (index[v] < 0) visit(v);

    std::vector<CommunicationClass> by_comp(n_comp);
    for (int v = 0; v < n; ++v) by_comp[comp[v]].members.push_back(v);
    for (auto& c : by_comp) {
        c.closed = true;
        for (int v : c.members)
            for (int w = 0; w < n && c.closed; ++w)
                if (edge(v, w) && comp[w] != comp[v]) c.closed = false;
    }
    std::sort(by_comp.begin(), by_comp.end(),
              [](const auto& x, const auto& y) { return x.members.front() < y.members.front(); });

    Classification out;
    out.classes = std::move(by_comp);
    for (const auto& c : out.classes) {
        const bool absorbing_singleton =
            c.members.size() == 1 && state::is_absorbing(c.members.front());
        if (c.closed && !absorbing_singleton) out.offending_classes.push_back(c);
    }
    out.verdict = out.offending_classes.empty() ? Verdict::Applicable : Verdict::Cyclic;
    return out;
}

/// A matrix read from file together with the row renormalizations applied to it.
struct LoadedMatrix {
    TransitionMatrix matrix;
    std::vector<Warning> warnings;
};

/// Accepts rows summing to 1 within `kFileRowSumTolerance` and rescales them exactly.
inline LoadedMatrix normalize_rounded(Matrix raw) {
    const std::size_t n = raw.rows();
    if (n < 3 || raw.cols() != n) {
        throw Error(ErrorCode::InvariantViolation, "matrix must be square with at least 3 states");
    }
    std::vector<Warning> warnings;
    for (std::size_t i = 0; i < n; ++i) {
        for (double v : raw.row(i)) {
            if (!std::isfinite(v) || v < 0.0) {
                throw Error(ErrorCode::InvariantViolation,
                            "row " + std::to_string(i) + " has a negative or non-finite entry");
            }
        }
        const double sum = raw.row_sum(i);
        if (std::abs(sum - 1.0) > kFileRowSumTolerance) {
            throw Error(ErrorCode::InvariantViolation,
                        "row " + std::to_string(i) + " sums to " + std::to_string(sum));
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance) {
            for (double& v : raw.row(i)) v /= sum;
            warnings.push_back({"ROW_RENORMALIZED", "row " + state::label(static_cast<int>(i)) +
                                                        " summed to " + csv::fixed6(sum) +
                                                        " and was rescaled to 1"});
        }
    }
    return {TransitionMatrix(std::move(raw)), std::move(warnings)};
}

/// Reads an (N+2) x (N+2) headerless numeric CSV in canonical state order.
inline LoadedMatrix read_matrix_csv(std::istream& in) {
    auto records = csv::read_records(in);
    if (records.empty()) throw Error(ErrorCode::Parse, "matrix CSV is empty");
    const std::size_t n = records.size();
    Matrix raw(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& [lineno, fields] = records[i];
        if (fields.size() != n) {
            throw Error(ErrorCode::InvariantViolation,
                        "line " + std::to_string(lineno) + ": expected " + std::to_string(n) +
                            " columns, found " + std::to_string(fields.size()));
        }
        for (std::size_t j = 0; j < n; ++j) {
            raw(i, j) = ConfigFile::parse_double(ConfigFile::trim(fields[j]),
                                                 "matrix line " + std::to_string(lineno));
        }
    }
    return normalize_rounded(std::move(raw));
}

inline LoadedMatrix read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Parse, "cannot open " + path);
    return read_matrix_csv(in);
}

inline void write_matrix_csv(std::ostream& out, const Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? "," : "") << csv::fixed6(m(i, j));
        out << '\n';
    }
}

}  // namespace curerate
