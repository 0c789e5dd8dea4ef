#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "curerate/absorption.hpp"
#include "curerate/chain.hpp"
#include "curerate/config.hpp"
#include "curerate/csv.hpp"
#include "curerate/error.hpp"
#include "curerate/simulate.hpp"
#include "curerate/survival.hpp"

namespace curerate {

inline constexpr const char* kReportSchemaVersion = "1.0";

/// Externally supplied fit (e.g. a previously published one) shown next to ours.
struct ReferenceFit {
    double lambda = 0.0;
    double k = 0.0;
    std::optional<double> r_squared;
};

struct AnalysisOptions {
    ChainConfig chain;
    FitMethod fit_method = FitMethod::LogLogOls;
    bool both_fits = false;
    double clip_epsilon = 0.0;
    std::vector<std::pair<int, int>> early_warning_pairs = {{3, 5}, {4, 5}};
    std::optional<ReferenceFit> reference;
    std::optional<SimConfig> simulation;
};

struct SimulationCheck {
    int state = 0;
    double simulated_cured = 0.0;
    double se_cured = 0.0;
    double analytic_cured = 0.0;
    double simulated_steps = 0.0;
    double se_steps = 0.0;
    double analytic_steps = 0.0;
    double unabsorbed = 0.0;
};

struct CureRateReport {
    AnalysisOptions options;
    TransitionMatrix matrix;
    Classification classification;
    std::optional<AbsorptionResult> absorption;
    std::vector<std::pair<std::pair<int, int>, double>> early_warning;
    std::optional<SurvivalPoints> points;
    std::vector<WeibullFit> fits;  // selected method first
    std::optional<double> cure_rate;
    std::optional<HazardProfile> hazard;
    std::vector<Warning> warnings;
    std::optional<std::vector<SimulationCheck>> simulation;

    const WeibullFit* selected_fit() const { return fits.empty() ? nullptr : &fits.front(); }
};

/// classify -> absorb -> build points -> fit -> cure rate. A cyclic verdict
/// stops after classification; that is a diagnosis, not a failure.
inline CureRateReport analyze(const LoadedMatrix& loaded, AnalysisOptions options) {
    const TransitionMatrix& a = loaded.matrix;
    options.chain.n_writeoff = a.n_writeoff();
    options.chain.validate();

    CureRateReport rep{options, a, classify(a, options.chain.edge_threshold), {}, {}, {}, {}, {}, {},
                       loaded.warnings, {}};
    if (rep.classification.verdict == Verdict::Cyclic) {
        for (const auto& c : rep.classification.offending_classes) {
            std::string members;
            for (int m : c.members) members += (members.empty() ? "" : ",") + state::label(m);
            rep.warnings.push_back({"CYCLIC_CLASS", "closed recurrent class {" + members +
                                                        "}: cure rate is not applicable"});
        }
        return rep;
    }

    rep.absorption = absorb(to_blocks(a));
    const auto& ab = *rep.absorption;
    const int hi = a.n_writeoff() + 1;
    for (const auto& [from, to] : options.early_warning_pairs) {
        if (from < 2 || from > hi || to < 2 || to > hi) {
            rep.warnings.push_back({"EARLY_WARNING_PAIR_SKIPPED",
                                    "pair (" + state::label(from) + "," + state::label(to) +
                                        ") is not transitive in this chain"});
            continue;
        }
        rep.early_warning.push_back({{from, to}, early_warning_times(ab, from, to)});
    }

    rep.points = build_points(ab, options.chain);
    for (auto& w : check_conditions(*rep.points)) rep.warnings.push_back(std::move(w));

    std::vector<FitMethod> methods{options.fit_method};
    if (options.both_fits) {
        methods.push_back(options.fit_method == FitMethod::LogLogOls ? FitMethod::Nls : FitMethod::LogLogOls);
    }
    for (FitMethod m : methods) {
        try {
            rep.fits.push_back(fit_weibull(*rep.points, m, options.clip_epsilon));
        } catch (const Error& e) {
            if (m == options.fit_method) {
                rep.warnings.push_back({"FIT_FAILED", e.what()});
                break;
            }
            rep.warnings.push_back({"ALTERNATIVE_FIT_FAILED", e.what()});
        }
    }
    if (rep.selected_fit() && rep.selected_fit()->method == options.fit_method) {
        rep.cure_rate = cure_rate(*rep.selected_fit(), options.chain);
        rep.hazard = hazard_profile(*rep.selected_fit(), default_hazard_grid(a.n_writeoff()));
    } else {
        rep.fits.clear();
    }

    if (options.simulation) {
        const auto sim = simulate_paths(a, *options.simulation);
        std::vector<SimulationCheck> checks;
        for (const auto& r : sim.per_start) {
            if (r.start_state < 2) continue;
            checks.push_back({r.start_state, r.cured, r.se_cured, ab.cure_probability(r.start_state),
                              r.mean_steps, r.se_mean_steps,
                              ab.expected_time[static_cast<std::size_t>(r.start_state - 2)], r.unabsorbed});
        }
        rep.simulation = std::move(checks);
        for (const auto& w : sim.warnings) rep.warnings.push_back(w);
    }
    return rep;
}

namespace detail {

/// JSON has no infinities; non-finite values become null.
inline nlohmann::json number(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

inline nlohmann::json matrix_json(const Matrix& m) {
    auto out = nlohmann::json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (double v : m.row(i)) row.push_back(v);
        out.push_back(std::move(row));
    }
    return out;
}

inline nlohmann::json fit_json(const WeibullFit& f) {
    return {
        {"method", to_string(f.method)},
        {"lambda", number(f.lambda)},
        {"k", number(f.k)},
        {"se_lambda", number(f.se_lambda)},
        {"se_k", number(f.se_k)},
        {"t_lambda", number(f.t_lambda)},
        {"t_k", number(f.t_k)},
        {"r_squared", number(f.r_squared)},
        {"r_squared_scale", f.method == FitMethod::LogLogOls ? "loglog" : "survival"},
        {"p_one_sided_k_le_1", number(f.p_one_sided_k_le_1)},
        {"df", f.df},
        {"n_points_used", f.n_points_used},
        {"iterations", f.iterations},
    };
}

inline nlohmann::json class_json(const CommunicationClass& c) {
    auto labels = nlohmann::json::array();
    for (int m : c.members) labels.push_back(state::label(m));
    return {{"members", c.members}, {"labels", labels}, {"closed", c.closed}};
}

inline std::string state_kind(int index) {
    switch (index) {
    case state::kCured: return "cured";
    case state::kLost: return "lost";
    case state::kForborne: return "forborne";
    default: return "past_due";
    }
}

}  // namespace detail

/// Piecewise-linear interpolation through the raw survival points.
inline double interpolate_raw(const std::vector<SurvivalPoint>& pts, double x) {
    if (pts.empty()) return std::nan("");
    if (x <= pts.front().x) return pts.front().s;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (x <= pts[i].x) {
            const double t = (x - pts[i - 1].x) / (pts[i].x - pts[i - 1].x);
            return pts[i - 1].s + t * (pts[i].s - pts[i - 1].s);
        }
    }
    return pts.back().s;
}

struct CurveRow {
    double x, survival_raw, survival_fitted, hazard;
};

/// 0.1-month grid on [0, N] merged with the raw abscissae.
inline std::vector<CurveRow> curve_rows(const std::vector<SurvivalPoint>& pts, double lambda, double k) {
    std::vector<double> xs;
    const double x_max = pts.empty() ? 0.0 : pts.back().x;
    for (int i = 0; i * 0.1 <= x_max + 1e-9; ++i) xs.push_back(i / 10.0);
    for (const auto& p : pts) xs.push_back(p.x);
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end(), [](double a, double b) { return std::abs(a - b) < 1e-9; }),
             xs.end());
    std::vector<CurveRow> out;
    for (double x : xs) {
        const double h = (k / lambda) * std::pow(x / lambda, k - 1.0);
        out.push_back({x, interpolate_raw(pts, x), survival_at(lambda, k, x), h});
    }
    return out;
}

inline void write_curve_csv(std::ostream& out, const std::vector<CurveRow>& rows) {
    out << "x,survival_raw,survival_fitted,hazard\n";
    for (const auto& r : rows) {
        out << csv::fixed6(r.x) << ',' << csv::fixed6(r.survival_raw) << ',' << csv::fixed6(r.survival_fitted)
            << ',' << (std::isfinite(r.hazard) ? csv::fixed6(r.hazard) : std::string("inf")) << '\n';
    }
}

inline nlohmann::json to_json(const CureRateReport& rep) {
    using nlohmann::json;
    const auto& o = rep.options;
    json config = {
        {"n_writeoff", o.chain.n_writeoff},
        {"npl_threshold", o.chain.npl_threshold},
        {"delta", o.chain.delta},
        {"month_length_days", o.chain.month_length_days},
        {"weighting", to_string(o.chain.weighting)},
        {"zero_row_policy", to_string(o.chain.zero_row_policy)},
        {"disappearance_policy", to_string(o.chain.disappearance_policy)},
        {"date_tolerance_days", o.chain.date_tolerance_days},
        {"edge_threshold", o.chain.edge_threshold},
        {"fit_method", to_string(o.fit_method)},
        {"both_fits", o.both_fits},
        {"clip_epsilon", o.clip_epsilon},
    };
    auto pairs = json::array();
    for (const auto& [f, t] : o.early_warning_pairs) pairs.push_back({f, t});
    config["early_warning_pairs"] = pairs;
    if (o.simulation) {
        config["seed"] = o.simulation->seed;
        config["n_paths"] = o.simulation->n_paths;
        config["max_steps"] = o.simulation->max_steps;
    }

    json j = {
        {"schema_version", kReportSchemaVersion},
        {"config", config},
        {"n_states", rep.matrix.n_states()},
        {"transition_matrix", detail::matrix_json(rep.matrix.entries())},
    };

    auto classes = json::array();
    for (const auto& c : rep.classification.classes) classes.push_back(detail::class_json(c));
    auto offending = json::array();
    for (const auto& c : rep.classification.offending_classes) offending.push_back(detail::class_json(c));
    j["classification"] = {{"verdict", to_string(rep.classification.verdict)},
                           {"edge_threshold", o.chain.edge_threshold},
                           {"classes", classes},
                           {"offending_classes", offending}};

    if (rep.absorption) {
        const auto& ab = *rep.absorption;
        j["fundamental_matrix"] = detail::matrix_json(ab.fundamental);
        j["t_inf"] = detail::matrix_json(ab.t_inf);
        j["expected_time"] = ab.expected_time;
        auto states = json::array();
        for (std::size_t i = 0; i < ab.n_transitive(); ++i) {
            const int idx = static_cast<int>(i) + 2;
            states.push_back({{"index", idx},
                              {"label", state::label(idx)},
                              {"kind", detail::state_kind(idx)},
                              {"months_past_due", idx >= state::kFirstPastDue ? json(state::months_past_due(idx))
                                                                             : json(nullptr)},
                              {"cure_probability", ab.t_inf(i, 0)},
                              {"loss_probability", ab.t_inf(i, 1)},
                              {"expected_time", ab.expected_time[i]}});
        }
        j["states"] = states;
    }
    auto ew = json::array();
    for (const auto& [pair, v] : rep.early_warning) {
        ew.push_back({{"from", pair.first}, {"to", pair.second}, {"expected_periods", v}});
    }
    j["early_warning"] = ew;

    if (rep.points) {
        auto pts = json::array();
        for (const auto& p : rep.points->points) pts.push_back({{"x", p.x}, {"s", p.s}});
        j["survival_points"] = pts;
    }
    json fits = json::object();
    for (const auto& f : rep.fits) fits[std::string(to_string(f.method))] = detail::fit_json(f);
    j["fits"] = fits;
    j["cure_rate"] = rep.cure_rate ? json(*rep.cure_rate) : json(nullptr);

    if (o.reference) {
        json ref = {{"lambda", o.reference->lambda},
                    {"k", o.reference->k},
                    {"cure_rate", survival_at(o.reference->lambda, o.reference->k,
                                              static_cast<double>(o.chain.npl_threshold))}};
        ref["r_squared"] = o.reference->r_squared ? json(*o.reference->r_squared) : json(nullptr);
        j["reference_fit"] = ref;
    }

    if (rep.hazard) {
        auto grid = json::array();
        for (const auto& g : rep.hazard->grid) grid.push_back({{"x", g.x}, {"h", detail::number(g.s)}});
        j["hazard"] = {{"monotone_increasing", rep.hazard->monotone_increasing}, {"grid", grid}};
    }
    if (const auto* f = rep.selected_fit(); f && rep.points) {
        auto curve = json::array();
        for (const auto& r : curve_rows(rep.points->points, f->lambda, f->k)) {
            curve.push_back({{"x", r.x}, {"survival_raw", r.survival_raw}, {"survival_fitted", r.survival_fitted}});
        }
        j["curve"] = curve;
    }

    auto warnings = json::array();
    for (const auto& w : rep.warnings) warnings.push_back({{"code", w.code}, {"message", w.message}});
    j["warnings"] = warnings;

    if (rep.simulation) {
        auto sim = json::array();
        for (const auto& c : *rep.simulation) {
            sim.push_back({{"state", c.state},
                           {"simulated_cured", c.simulated_cured},
                           {"se_cured", c.se_cured},
                           {"analytic_cured", c.analytic_cured},
                           {"delta_cured", c.simulated_cured - c.analytic_cured},
                           {"simulated_mean_steps", c.simulated_steps},
                           {"se_mean_steps", c.se_steps},
                           {"analytic_expected_time", c.analytic_steps},
                           {"delta_steps", c.simulated_steps - c.analytic_steps},
                           {"unabsorbed", c.unabsorbed}});
        }
        j["simulation"] = sim;
    }
    return j;
}

/// Serializes a SimResult; `absorption`, when present, adds analytic deltas.
inline nlohmann::json to_json(const SimResult& sim, const SimConfig& cfg,
                              const std::optional<AbsorptionResult>& absorption) {
    using nlohmann::json;
    auto per = json::array();
    for (const auto& r : sim.per_start) {
        json e = {{"start_state", r.start_state >= 0 ? json(r.start_state) : json(nullptr)},
                  {"n_paths", r.n_paths},
                  {"cured", r.cured},
                  {"lost", r.lost},
                  {"unabsorbed", r.unabsorbed},
                  {"se_cured", r.se_cured},
                  {"se_lost", r.se_lost},
                  {"mean_steps", r.mean_steps},
                  {"se_mean_steps", r.se_mean_steps},
                  {"mean_visits", r.mean_visits},
                  {"se_visits", r.se_visits}};
        if (absorption && r.start_state >= 2) {
            const auto i = static_cast<std::size_t>(r.start_state - 2);
            e["analytic"] = {{"cured", absorption->t_inf(i, 0)},
                             {"expected_time", absorption->expected_time[i]},
                             {"delta_cured", r.cured - absorption->t_inf(i, 0)},
                             {"delta_steps", r.mean_steps - absorption->expected_time[i]}};
        }
        per.push_back(std::move(e));
    }
    auto warnings = json::array();
    for (const auto& w : sim.warnings) warnings.push_back({{"code", w.code}, {"message", w.message}});
    return {{"schema_version", kReportSchemaVersion},
            {"simulation",
             {{"seed", cfg.seed},
              {"n_paths", cfg.n_paths},
              {"max_steps", cfg.max_steps},
              {"per_start", per},
              {"warnings", warnings}}}};
}

/// Rebuilds the raw-vs-fitted curve from a serialized report.
inline std::vector<CurveRow> curve_from_report(const nlohmann::json& report) {
    if (report.value("classification", nlohmann::json::object()).value("verdict", "") == "cyclic") {
        throw Error(ErrorCode::MissingPrerequisite, "report has a cyclic verdict; no fit to export");
    }
    const auto method = report.value("config", nlohmann::json::object()).value("fit_method", "loglog_ols");
    if (!report.contains("fits") || !report["fits"].contains(method) || !report.contains("survival_points")) {
        throw Error(ErrorCode::MissingPrerequisite, "report contains no fitted curve");
    }
    const auto& fit = report["fits"][method];
    std::vector<SurvivalPoint> pts;
    for (const auto& p : report["survival_points"]) pts.push_back({p.at("x").get<double>(), p.at("s").get<double>()});
    return curve_rows(pts, fit.at("lambda").get<double>(), fit.at("k").get<double>());
}

}  // namespace curerate
