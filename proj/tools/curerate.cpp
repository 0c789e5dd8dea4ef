#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "curerate/curerate.hpp"

namespace {

using namespace curerate;

enum ExitCode : int {
    kOk = 0,
    kParse = 2,
    kDateMismatch = 3,
    kInvariant = 4,
    kMissingPrerequisite = 5,
};

int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::Parse: return kParse;
    case ErrorCode::DateMismatch: return kDateMismatch;
    case ErrorCode::MissingPrerequisite: return kMissingPrerequisite;
    default: return kInvariant;
    }
}

/// Writes to `path`, or stdout when the path is empty or "-".
class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty() && path != "-") {
            file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
            if (!*file_) throw Error(ErrorCode::Parse, "cannot write " + path);
        }
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
};

struct CommonFlags {
    std::string config_path;
    std::string out = "-";
    std::string format = "json";
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> n_paths;
    unsigned threads = 1;
    std::optional<std::string> fit_method;
    std::optional<double> clip_epsilon;
    std::optional<double> delta;
};

ConfigFile load_config(const CommonFlags& f) {
    ConfigFile cfg = f.config_path.empty() ? ConfigFile{} : ConfigFile::load(f.config_path);
    if (f.fit_method) cfg.set("fit_method", *f.fit_method);
    if (f.clip_epsilon) cfg.set("clip_epsilon", std::to_string(*f.clip_epsilon));
    if (f.delta) cfg.set("delta", std::to_string(*f.delta));
    if (f.seed) cfg.set("seed", std::to_string(*f.seed));
    if (f.n_paths) cfg.set("n_paths", std::to_string(*f.n_paths));
    return cfg;
}

FitMethod parse_fit_method(const std::string& s) {
    if (s == "loglog" || s == "loglog_ols") return FitMethod::LogLogOls;
    if (s == "nls") return FitMethod::Nls;
    throw Error(ErrorCode::Parse, "fit method must be loglog or nls");
}

bool parse_flag(const std::string& s) {
    if (s == "1" || s == "true") return true;
    if (s == "0" || s == "false") return false;
    throw Error(ErrorCode::Parse, "expected boolean, got '" + s + "'");
}

/// "3:5,4:5" -> {(3,5),(4,5)}
std::vector<std::pair<int, int>> parse_pairs(const std::string& text) {
    std::vector<std::pair<int, int>> out;
    for (const auto& item : csv::split(text)) {
        const auto t = ConfigFile::trim(item);
        if (t.empty()) continue;
        const auto colon = t.find(':');
        if (colon == std::string_view::npos) throw Error(ErrorCode::Parse, "pair must be FROM:TO");
        ConfigFile tmp;
        tmp.set("from", std::string(t.substr(0, colon)));
        tmp.set("to", std::string(t.substr(colon + 1)));
        out.emplace_back(static_cast<int>(*tmp.get_int("from")), static_cast<int>(*tmp.get_int("to")));
    }
    return out;
}

std::vector<double> parse_doubles(const std::string& text) {
    std::vector<double> out;
    for (const auto& item : csv::split(text)) out.push_back(ConfigFile::parse_double(ConfigFile::trim(item), "list"));
    return out;
}

SimConfig sim_config(const ConfigFile& cfg, unsigned threads) {
    SimConfig s;
    if (auto v = cfg.get_uint("seed")) s.seed = *v;
    if (auto v = cfg.get_int("n_paths")) s.n_paths = *v;
    if (auto v = cfg.get_int("max_steps")) s.max_steps = static_cast<int>(*v);
    if (auto v = cfg.get("sim_start_states")) {
        for (double d : parse_doubles(*v)) s.start_states.push_back(static_cast<int>(d));
    }
    s.threads = threads;
    return s;
}

int cmd_estimate(const CommonFlags& f, const std::string& prev, const std::string& curr,
                 const std::string& transitions_path, const std::string& emit_transitions) {
    const ConfigFile cfg = load_config(f);
    const ChainConfig chain = cfg.chain_config();
    chain.validate();

    std::vector<ObservedTransition> transitions;
    if (!transitions_path.empty()) {
        transitions = read_transitions(transitions_path);
    } else {
        if (prev.empty() || curr.empty()) {
            throw Error(ErrorCode::Parse, "estimate needs --prev and --curr, or --transitions");
        }
        transitions = pair_snapshots(read_snapshots(prev), read_snapshots(curr), chain);
    }
    if (!emit_transitions.empty()) {
        Output t(emit_transitions);
        write_transitions(t.stream(), transitions);
    }

    const auto est = estimate_with_counts(transitions, chain);
    Output out(f.out);
    write_matrix_csv(out.stream(), est.matrix.entries());

    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 2; i < est.matrix.n_states(); ++i) {
        const bool imputed = std::find(est.imputed_rows.begin(), est.imputed_rows.end(), static_cast<int>(i)) !=
                             est.imputed_rows.end();
        rows.push_back({{"state", i},
                        {"label", state::label(static_cast<int>(i))},
                        {"observations", est.row_count[i]},
                        {"weight", est.row_weight[i]},
                        {"imputed", imputed}});
    }
    auto warnings = nlohmann::json::array();
    for (int r : est.imputed_rows) {
        warnings.push_back({{"code", "ZERO_ROW_IMPUTED"},
                            {"message", state::label(r) + " had no observations; set to Lost"}});
    }
    const nlohmann::json sidecar = {{"schema_version", kReportSchemaVersion},
                                    {"n_states", est.matrix.n_states()},
                                    {"n_transitions", transitions.size()},
                                    {"weighting", to_string(chain.weighting)},
                                    {"rows", rows},
                                    {"warnings", warnings}};
    const std::string sidecar_path = (f.out.empty() || f.out == "-") ? "" : f.out + ".counts.json";
    if (sidecar_path.empty()) {
        std::cerr << sidecar.dump(2) << '\n';
    } else {
        Output s(sidecar_path);
        s.stream() << sidecar.dump(2) << '\n';
    }
    return kOk;
}

int cmd_analyze(const CommonFlags& f, const std::string& matrix_path, bool simulate, bool both_fits) {
    const ConfigFile cfg = load_config(f);
    const auto loaded = read_matrix_csv(matrix_path);

    AnalysisOptions opts;
    opts.chain = cfg.chain_config();
    if (cfg.has("n_writeoff") && opts.chain.n_writeoff != loaded.matrix.n_writeoff()) {
        throw Error(ErrorCode::InvariantViolation,
                    "config n_writeoff " + std::to_string(opts.chain.n_writeoff) +
                        " does not match matrix dimension " + std::to_string(loaded.matrix.n_states()));
    }
    if (auto v = cfg.get("fit_method")) opts.fit_method = parse_fit_method(*v);
    if (auto v = cfg.get_double("clip_epsilon")) opts.clip_epsilon = *v;
    if (auto v = cfg.get("both_fits")) opts.both_fits = parse_flag(*v);
    if (both_fits) opts.both_fits = true;
    if (auto v = cfg.get("early_warning_pairs")) opts.early_warning_pairs = parse_pairs(*v);
    if (cfg.has("reference_lambda") || cfg.has("reference_k")) {
        if (!cfg.has("reference_lambda") || !cfg.has("reference_k")) {
            throw Error(ErrorCode::Parse, "reference_lambda and reference_k must be given together");
        }
        opts.reference = ReferenceFit{*cfg.get_double("reference_lambda"), *cfg.get_double("reference_k"),
                                      cfg.get_double("reference_r_squared")};
    }
    if (simulate || (cfg.has("simulate") && parse_flag(*cfg.get("simulate")))) {
        opts.simulation = sim_config(cfg, f.threads);
    }

    const auto rep = analyze(loaded, opts);
    Output out(f.out);
    if (f.format == "csv") {
        if (!rep.absorption) {
            throw Error(ErrorCode::MissingPrerequisite, "cyclic chain: no absorption table to export");
        }
        auto& os = out.stream();
        os << "state,months_past_due,cure_probability,loss_probability,expected_time\n";
        for (std::size_t i = 0; i < rep.absorption->n_transitive(); ++i) {
            const int idx = static_cast<int>(i) + 2;
            os << state::label(idx) << ','
               << (idx >= state::kFirstPastDue ? std::to_string(state::months_past_due(idx)) : std::string())
               << ',' << csv::fixed6(rep.absorption->t_inf(i, 0)) << ',' << csv::fixed6(rep.absorption->t_inf(i, 1))
               << ',' << csv::fixed6(rep.absorption->expected_time[i]) << '\n';
        }
    } else {
        out.stream() << to_json(rep).dump(2) << '\n';
    }
    for (const auto& w : rep.warnings) std::cerr << "warning [" << w.code << "] " << w.message << '\n';
    return kOk;
}

int cmd_simulate(const CommonFlags& f, const std::string& matrix_path, const std::vector<int>& starts,
                 std::optional<int> max_steps, const std::string& composition, int horizon,
                 const std::string& trace_path, std::int64_t trace_paths) {
    const ConfigFile cfg = load_config(f);
    const auto loaded = read_matrix_csv(matrix_path);
    SimConfig sim = sim_config(cfg, f.threads);
    if (!starts.empty()) sim.start_states = starts;
    if (max_steps) sim.max_steps = *max_steps;
    if (!composition.empty()) sim.composition = parse_doubles(composition);

    const ChainConfig chain = cfg.chain_config();
    std::optional<AbsorptionResult> absorption;
    if (classify(loaded.matrix, chain.edge_threshold).verdict == Verdict::Applicable) {
        absorption = absorb(to_blocks(loaded.matrix));
    }
    const auto result = simulate_paths(loaded.matrix, sim);
    auto j = to_json(result, sim, absorption);
    if (!sim.composition.empty() && horizon > 0) {
        const auto proj = simulate_portfolio(loaded.matrix, sim.composition, horizon, chain.edge_threshold);
        j["portfolio"] = {{"horizon", horizon}, {"occupancy", proj.occupancy}};
        j["portfolio"]["limit"] = proj.limit ? nlohmann::json(*proj.limit) : nlohmann::json(nullptr);
    }
    if (!trace_path.empty()) {
        Output t(trace_path);
        write_trace_csv(t.stream(), loaded.matrix, sim, trace_paths);
    }
    Output out(f.out);
    out.stream() << j.dump(2) << '\n';
    for (const auto& w : result.warnings) std::cerr << "warning [" << w.code << "] " << w.message << '\n';
    return kOk;
}

int cmd_curve(const CommonFlags& f, const std::string& report_path) {
    std::ifstream in(report_path);
    if (!in) throw Error(ErrorCode::Parse, "cannot open " + report_path);
    nlohmann::json report;
    try {
        in >> report;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("report is not valid JSON: ") + e.what());
    }
    const auto rows = curve_from_report(report);
    Output out(f.out);
    write_curve_csv(out.stream(), rows);
    return kOk;
}

void add_common(CLI::App* app, CommonFlags& f) {
    app->add_option("--config", f.config_path, "key=value configuration file");
    app->add_option("--out", f.out, "output path ('-' for stdout)");
    app->add_option("--format", f.format, "output format")->check(CLI::IsMember({"json", "csv"}));
    app->add_option("--seed", f.seed, "simulation seed");
    app->add_option("--threads", f.threads, "worker threads for simulation")->check(CLI::PositiveNumber);
    app->add_option("--fit-method", f.fit_method, "loglog or nls")->check(CLI::IsMember({"loglog", "nls"}));
    app->add_option("--clip-epsilon", f.clip_epsilon, "include endpoints clipped into [eps, 1-eps]");
    app->add_option("--delta", f.delta, "x-position of the forborne survival point");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cure-rate estimation for non-performing loan portfolios"};
    app.require_subcommand(1);
    CommonFlags flags;

    auto* est = app.add_subcommand("estimate", "estimate a transition matrix from loan tapes");
    std::string prev, curr, transitions, emit_transitions;
    est->add_option("--prev", prev, "snapshot CSV one year before");
    est->add_option("--curr", curr, "snapshot CSV at the measurement date");
    est->add_option("--transitions", transitions, "transitions CSV (alternative to snapshots)");
    est->add_option("--emit-transitions", emit_transitions, "write the paired transitions CSV");
    add_common(est, flags);

    auto* ana = app.add_subcommand("analyze", "full cure-rate pipeline on a matrix CSV");
    std::string matrix_path;
    bool simulate = false, both_fits = false;
    ana->add_option("matrix", matrix_path, "transition matrix CSV")->required();
    ana->add_flag("--simulate", simulate, "add a Monte Carlo cross-check");
    ana->add_flag("--both-fits", both_fits, "report both fit methods");
    ana->add_option("--n-paths", flags.n_paths, "paths per start state for --simulate")->check(CLI::PositiveNumber);
    add_common(ana, flags);

    auto* sim = app.add_subcommand("simulate", "Monte Carlo paths over a matrix CSV");
    std::vector<int> starts;
    std::optional<int> max_steps;
    std::string composition, trace_path;
    int horizon = 0;
    std::int64_t trace_paths = 10;
    sim->add_option("matrix", matrix_path, "transition matrix CSV")->required();
    sim->add_option("--n-paths", flags.n_paths, "paths per start state")->check(CLI::PositiveNumber);
    sim->add_option("--start", starts, "start state index (repeatable)");
    sim->add_option("--max-steps", max_steps, "steps before a path counts as unabsorbed");
    sim->add_option("--composition", composition, "comma-separated start weights per state");
    sim->add_option("--horizon", horizon, "years of expected occupancy for --composition");
    sim->add_option("--trace", trace_path, "per-path trace CSV");
    sim->add_option("--trace-paths", trace_paths, "paths to trace");
    add_common(sim, flags);

    auto* cur = app.add_subcommand("curve", "raw-vs-fitted survival curve CSV from a report");
    std::string report_path;
    cur->add_option("report", report_path, "report JSON from analyze")->required();
    add_common(cur, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kParse;
    }

    try {
        if (*est) return cmd_estimate(flags, prev, curr, transitions, emit_transitions);
        if (*ana) return cmd_analyze(flags, matrix_path, simulate, both_fits);
        if (*sim) return cmd_simulate(flags, matrix_path, starts, max_steps, composition, horizon, trace_path,
                                      trace_paths);
        if (*cur) return cmd_curve(flags, report_path);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: malformed report: " << e.what() << '\n';
        return kParse;
    }
    return kOk;
}
