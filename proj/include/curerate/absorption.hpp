#pragma once

#include <cmath>
#include <vector>

#include "curerate/chain.hpp"
#include "curerate/error.hpp"
#include "curerate/matrix.hpp"

namespace curerate {

inline constexpr double kSingularRcond = 1e-12;

/// (I - S)^-1 by dense LU with partial pivoting.
///
/// Entry (i, j) is the expected number of periods spent in transitive state
/// j starting from transitive state i, counting the starting period.
inline Matrix fundamental_matrix(const Matrix& S) {
    if (S.rows() != S.cols()) throw Error(ErrorCode::InvariantViolation, "S must be square");
    const std::size_t n = S.rows();
    const LuDecomposition lu(Matrix::identity(n) - S);
    if (lu.singular()) {
        throw Error(ErrorCode::SingularBlock, "I - S has a zero pivot; a recurrent class remains");
    }
    Matrix F = lu.inverse();
    const double rcond = 1.0 / ((Matrix::identity(n) - S).norm1() * F.norm1());
    if (!(rcond >= kSingularRcond)) {
        throw Error(ErrorCode::SingularBlock,
                    "I - S is numerically singular (rcond " + std::to_string(rcond) + ")");
    }
    return F;
}

struct AbsorptionResult {
    Matrix fundamental;                  // F = (I - S)^-1, N x N
    Matrix t_inf;                        // F * T, rows (p_i, q_i)
    std::vector<double> expected_time;   // row sums of F

    std::size_t n_transitive() const noexcept { return fundamental.rows(); }

    /// Probability of eventual cure from canonical state `index` (>= 2).
    double cure_probability(int index) const { return t_inf(index - 2, 0); }
    double loss_probability(int index) const { return t_inf(index - 2, 1); }
};

inline AbsorptionResult absorb(const Blocks& blocks) {
    AbsorptionResult r;
    r.fundamental = fundamental_matrix(blocks.S);
    r.t_inf = r.fundamental * blocks.T;
    r.expected_time.resize(r.fundamental.rows());
    for (std::size_t i = 0; i < r.fundamental.rows(); ++i) r.expected_time[i] = r.fundamental.row_sum(i);
    return r;
}

/// Expected periods spent in `to_state` before absorption, starting from `from_state`.
inline double early_warning_times(const AbsorptionResult& result, int from_state, int to_state) {
    const int hi = static_cast<int>(result.n_transitive()) + 1;
    for (int s : {from_state, to_state}) {
        if (s < 2 || s > hi) {
            throw Error(ErrorCode::NotTransitive, state::label(s) + " is not a transitive state");
        }
    }
    return result.fundamental(from_state - 2, to_state - 2);
}

/// Limit matrix lim A^n = [[I, 0], [T_inf, 0]] in canonical order.
inline Matrix limit_matrix(const AbsorptionResult& result) {
    const std::size_t n = result.n_transitive() + 2;
    Matrix out(n, n);
    out(0, 0) = 1.0;
    out(1, 1) = 1.0;
    for (std::size_t i = 0; i < result.n_transitive(); ++i) {
        out(i + 2, 0) = result.t_inf(i, 0);
        out(i + 2, 1) = result.t_inf(i, 1);
    }
    return out;
}

}  // namespace curerate
