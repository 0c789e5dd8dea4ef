#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "curerate/absorption.hpp"
#include "curerate/config.hpp"
#include "curerate/csv.hpp"
#include "curerate/error.hpp"

namespace curerate {

struct SurvivalPoint {
    double x = 0.0;  // months past due
    double s = 0.0;  // probability of eventual cure

    friend bool operator==(const SurvivalPoint&, const SurvivalPoint&) = default;
};

/// (0,1), (delta, p_forborne), (m, p_m) for m = 1..N-1, (N, 0).
struct SurvivalPoints {
    std::vector<SurvivalPoint> points;
    double delta = 0.5;
};

inline SurvivalPoints build_points(const AbsorptionResult& result, const ChainConfig& cfg) {
    const int n = static_cast<int>(result.n_transitive());
    SurvivalPoints out;
    out.delta = cfg.delta;
    out.points.push_back({0.0, 1.0});
    out.points.push_back({cfg.delta, result.cure_probability(state::kForborne)});
    for (int m = 1; m <= n - 1; ++m) {
        out.points.push_back({static_cast<double>(m), result.cure_probability(state::past_due(m))});
    }
    out.points.push_back({static_cast<double>(n), 0.0});
    return out;
}

/// Flags every adjacent pair where the raw survival value rises.
inline std::vector<Warning> check_conditions(const SurvivalPoints& pts) {
    std::vector<Warning> out;
    const auto& p = pts.points;
    for (std::size_t i = 1; i < p.size(); ++i) {
        if (p[i].s > p[i - 1].s) {
            out.push_back({"NON_MONOTONE_RAW",
                           "raw cure probability rises from " + csv::fixed6(p[i - 1].s) + " at x=" +
                               csv::fixed6(p[i - 1].x) + " to " + csv::fixed6(p[i].s) +
                               " at x=" + csv::fixed6(p[i].x)});
        }
    }
    return out;
}

enum class FitMethod { LogLogOls, Nls };

inline std::string_view to_string(FitMethod m) { return m == FitMethod::LogLogOls ? "loglog_ols" : "nls"; }

struct WeibullFit {
    double lambda = 1.0;  // scale
    double k = 1.0;       // shape
    double se_lambda = 0.0;
    double se_k = 0.0;
    double t_lambda = 0.0;
    double t_k = 0.0;
    double r_squared = 0.0;
    double p_one_sided_k_le_1 = 0.0;
    int df = 0;
    int n_points_used = 0;
    FitMethod method = FitMethod::LogLogOls;
    int iterations = 0;  // nls only
};

/// S(x) = exp(-(x / lambda)^k).
inline double survival_at(double lambda, double k, double x) {
    if (x <= 0.0) return 1.0;
    return std::exp(-std::pow(x / lambda, k));
}

inline double survival_at(const WeibullFit& fit, double x) { return survival_at(fit.lambda, fit.k, x); }

/// Portfolio cure rate: the fitted survival at the non-performing threshold.
inline double cure_rate(const WeibullFit& fit, const ChainConfig& cfg) {
    return survival_at(fit, static_cast<double>(cfg.npl_threshold));
}

/// One-sided p-value of H0: k <= 1 from t = (k - 1) / se_k on `df` degrees of freedom.
inline double one_sided_p_k_le_1(double k, double se_k, int df) {
    if (df < 1) return std::numeric_limits<double>::quiet_NaN();
    if (se_k == 0.0) return k > 1.0 ? 0.0 : 1.0;
    const boost::math::students_t dist(static_cast<double>(df));
    return boost::math::cdf(boost::math::complement(dist, (k - 1.0) / se_k));
}

namespace detail {

struct UsablePoint {
    double x;
    double s;
};

inline std::vector<UsablePoint> loglog_usable(const SurvivalPoints& pts, double clip_epsilon) {
    std::vector<UsablePoint> out;
    for (const auto& p : pts.points) {
        if (clip_epsilon > 0.0) {
            const double x = p.x > 0.0 ? p.x : pts.delta / 2.0;
            out.push_back({x, std::clamp(p.s, clip_epsilon, 1.0 - clip_epsilon)});
        } else if (p.x > 0.0 && p.s > 0.0 && p.s < 1.0) {
            out.push_back({p.x, p.s});
        }
    }
    return out;
}

inline void check_design(const std::vector<UsablePoint>& pts) {
    if (pts.size() < 3) {
        throw Error(ErrorCode::TooFewPoints,
                    "need at least 3 usable points, have " + std::to_string(pts.size()));
    }
    const bool all_equal = std::all_of(pts.begin(), pts.end(),
                                       [&](const UsablePoint& p) { return p.x == pts.front().x; });
    if (all_equal) throw Error(ErrorCode::DegenerateDesign, "all usable x coincide");
}

inline void finish_statistics(WeibullFit& fit) {
    fit.t_k = fit.se_k > 0.0 ? fit.k / fit.se_k : std::numeric_limits<double>::infinity();
    fit.t_lambda = fit.se_lambda > 0.0 ? fit.lambda / fit.se_lambda : std::numeric_limits<double>::infinity();
    fit.p_one_sided_k_le_1 = one_sided_p_k_le_1(fit.k, fit.se_k, fit.df);
}

inline WeibullFit fit_loglog(const std::vector<UsablePoint>& pts) {
    // y = a + k u with u = ln x, y = ln(-ln s); lambda = exp(-a / k).
    const auto n = static_cast<double>(pts.size());
    double mean_u = 0.0, mean_y = 0.0;
    std::vector<double> u, y;
    for (const auto& p : pts) {
        u.push_back(std::log(p.x));
        y.push_back(std::log(-std::log(p.s)));
        mean_u += u.back();
        mean_y += y.back();
    }
    mean_u /= n;
    mean_y /= n;
    double suu = 0.0, suy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        suu += (u[i] - mean_u) * (u[i] - mean_u);
        suy += (u[i] - mean_u) * (y[i] - mean_y);
        syy += (y[i] - mean_y) * (y[i] - mean_y);
    }
    const double k = suy / suu;
    const double a = mean_y - k * mean_u;
    if (!(k > 0.0)) {
        throw Error(ErrorCode::DegenerateDesign, "fitted shape is not positive (k = " + std::to_string(k) + ")");
    }

    double ssr = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double r = y[i] - (a + k * u[i]);
        ssr += r * r;
    }
    WeibullFit fit;
    fit.method = FitMethod::LogLogOls;
    fit.n_points_used = static_cast<int>(pts.size());
    fit.df = fit.n_points_used - 2;
    fit.k = k;
    fit.lambda = std::exp(-a / k);

    const double sigma2 = ssr / fit.df;
    const double var_k = sigma2 / suu;
    const double var_a = sigma2 * (1.0 / n + mean_u * mean_u / suu);
    const double cov_ak = -sigma2 * mean_u / suu;
    fit.se_k = std::sqrt(var_k);
    // Delta method: d lambda / d(a, k) = (-lambda / k, lambda a / k^2).
    const double ga = -fit.lambda / k;
    const double gk = fit.lambda * a / (k * k);
    fit.se_lambda = std::sqrt(std::max(0.0, ga * ga * var_a + 2.0 * ga * gk * cov_ak + gk * gk * var_k));
    fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;
    finish_statistics(fit);
    return fit;
}

inline WeibullFit fit_nls(const SurvivalPoints& pts, const WeibullFit& start) {
    constexpr int kMaxIterations = 200;
    constexpr double kStepTolerance = 1e-10;

    std::vector<UsablePoint> data;
    for (const auto& p : pts.points)
        if (p.x >= 0.0) data.push_back({p.x, p.s});

    auto ssr_at = [&](double lambda, double k) {
        double ssr = 0.0;
        for (const auto& p : data) {
            const double r = p.s - survival_at(lambda, k, p.x);
            ssr += r * r;
        }
        return ssr;
    };
    // Gradient of the model with respect to (lambda, k).
    auto jacobian_row = [](double lambda, double k, double x, double& d_lambda, double& d_k) {
        if (x <= 0.0) {
            d_lambda = d_k = 0.0;
            return;
        }
        const double z = std::pow(x / lambda, k);
        const double m = std::exp(-z);
        d_lambda = m * z * k / lambda;
        d_k = -m * z * std::log(x / lambda);
    };

    double lambda = start.lambda, k = start.k;
    double ssr = ssr_at(lambda, k);
    bool converged = false;
    int iter = 0;
    for (; iter < kMaxIterations && !converged; ++iter) {
        double jtj00 = 0, jtj01 = 0, jtj11 = 0, jtr0 = 0, jtr1 = 0;
        for (const auto& p : data) {
            double dl, dk;
            jacobian_row(lambda, k, p.x, dl, dk);
            const double r = p.s - survival_at(lambda, k, p.x);
            jtj00 += dl * dl;
            jtj01 += dl * dk;
            jtj11 += dk * dk;
            jtr0 += dl * r;
            jtr1 += dk * r;
        }
        const double det = jtj00 * jtj11 - jtj01 * jtj01;
        if (!(std::abs(det) > 0.0)) {
            throw Error(ErrorCode::NonConvergence, "singular Gauss-Newton normal equations");
        }
        double step_l = (jtj11 * jtr0 - jtj01 * jtr1) / det;
        double step_k = (jtj00 * jtr1 - jtj01 * jtr0) / det;

        // Backtrack until the step keeps parameters positive and does not raise SSR.
        double scale = 1.0;
        double next_l = lambda, next_k = k, next_ssr = ssr;
        for (int halving = 0; halving < 60; ++halving, scale *= 0.5) {
            next_l = lambda + scale * step_l;
            next_k = k + scale * step_k;
            if (next_l > 0.0 && next_k > 0.0) {
                next_ssr = ssr_at(next_l, next_k);
                if (next_ssr <= ssr) break;
            }
        }
        const double moved = std::max(std::abs(next_l - lambda) / (1.0 + std::abs(lambda)),
                                      std::abs(next_k - k) / (1.0 + std::abs(k)));
        if (next_l > 0.0 && next_k > 0.0 && next_ssr <= ssr) {
            lambda = next_l;
            k = next_k;
            ssr = next_ssr;
        }
        converged = moved < kStepTolerance;
    }
    if (!converged) {
        throw Error(ErrorCode::NonConvergence,
                    "Gauss-Newton did not converge in " + std::to_string(kMaxIterations) + " iterations");
    }

    WeibullFit fit;
    fit.method = FitMethod::Nls;
    fit.iterations = iter;
    fit.lambda = lambda;
    fit.k = k;
    fit.n_points_used = static_cast<int>(data.size());
    fit.df = fit.n_points_used - 2;

    double jtj00 = 0, jtj01 = 0, jtj11 = 0, mean_s = 0.0;
    for (const auto& p : data) {
        double dl, dk;
        jacobian_row(lambda, k, p.x, dl, dk);
        jtj00 += dl * dl;
        jtj01 += dl * dk;
        jtj11 += dk * dk;
        mean_s += p.s;
    }
    mean_s /= static_cast<double>(data.size());
    double sst = 0.0;
    for (const auto& p : data) sst += (p.s - mean_s) * (p.s - mean_s);

    const double sigma2 = ssr / fit.df;
    const double det = jtj00 * jtj11 - jtj01 * jtj01;
    fit.se_lambda = std::sqrt(std::max(0.0, sigma2 * jtj11 / det));
    fit.se_k = std::sqrt(std::max(0.0, sigma2 * jtj00 / det));
    fit.r_squared = sst > 0.0 ? std::clamp(1.0 - ssr / sst, 0.0, 1.0) : 1.0;
    finish_statistics(fit);
    return fit;
}

}  // namespace detail

/// Fits S(x) = exp(-(x / lambda)^k) to survival points.
///
/// LogLogOls regresses ln(-ln s) on ln x over points with x > 0 and 0 < s < 1.
/// With clip_epsilon > 0 every point is used instead: s is clipped into
/// [eps, 1 - eps] and x = 0 is moved to delta / 2. Nls runs Gauss-Newton on
/// the untransformed values of all points, started from the log-log fit.
inline WeibullFit fit_weibull(const SurvivalPoints& pts, FitMethod method = FitMethod::LogLogOls,
                              double clip_epsilon = 0.0) {
    if (clip_epsilon < 0.0 || clip_epsilon >= 0.5) {
        throw Error(ErrorCode::InvariantViolation, "clip_epsilon must lie in [0, 0.5)");
    }
    const auto usable = detail::loglog_usable(pts, clip_epsilon);
    detail::check_design(usable);
    const WeibullFit ols = detail::fit_loglog(usable);
    if (method == FitMethod::LogLogOls) return ols;
    return detail::fit_nls(pts, ols);
}

struct HazardProfile {
    std::vector<SurvivalPoint> grid;  // (x, h(x))
    bool monotone_increasing = false;
};

/// h(x) = (k / lambda) (x / lambda)^(k - 1).
inline double hazard_at(const WeibullFit& fit, double x) {
    return (fit.k / fit.lambda) * std::pow(x / fit.lambda, fit.k - 1.0);
}

inline std::vector<double> default_hazard_grid(int n_writeoff) {
    std::vector<double> grid;
    for (int i = 1; i <= 4 * n_writeoff; ++i) grid.push_back(0.25 * i);
    return grid;
}

inline HazardProfile hazard_profile(const WeibullFit& fit, const std::vector<double>& grid) {
    HazardProfile out;
    for (double x : grid) {
        if (!(x > 0.0)) throw Error(ErrorCode::InvariantViolation, "hazard grid must be positive");
        out.grid.push_back({x, hazard_at(fit, x)});
    }
    out.monotone_increasing = fit.k > 1.0;
    return out;
}

}  // namespace curerate
