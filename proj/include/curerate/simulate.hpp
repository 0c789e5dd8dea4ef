#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <thread>
#include <vector>

#include "curerate/absorption.hpp"
#include "curerate/chain.hpp"
#include "curerate/error.hpp"

namespace curerate {

/// SplitMix64 stream. Each path gets its own stream keyed by (seed, start, path).
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t state) noexcept : state_(state) {}

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    static SplitMix64 for_path(std::uint64_t seed, std::uint64_t stream, std::uint64_t path) noexcept {
        return SplitMix64(mix(mix(seed ^ 0x6a09e667f3bcc909ULL) ^ mix(stream + 0x3c6ef372fe94f82bULL)) ^
                          mix(path));
    }

private:
    std::uint64_t state_;
};

struct SimConfig {
    std::uint64_t seed = 42;
    std::int64_t n_paths = 100000;
    int max_steps = 1000;
    std::vector<int> start_states;    // empty: every transitive state
    std::vector<double> composition;  // non-empty: sample each start from these weights
    unsigned threads = 1;

    void validate(std::size_t n_states) const {
        if (n_paths < 1) throw Error(ErrorCode::InvariantViolation, "n_paths must be at least 1");
        if (max_steps < 1) throw Error(ErrorCode::InvariantViolation, "max_steps must be at least 1");
        for (int s : start_states) {
            if (s < 0 || static_cast<std::size_t>(s) >= n_states) {
                throw Error(ErrorCode::InvariantViolation, "start state out of range");
            }
        }
        if (!composition.empty()) {
            if (composition.size() != n_states) {
                throw Error(ErrorCode::InvariantViolation, "composition length must equal state count");
            }
            double total = 0.0;
            for (double w : composition) {
                if (!(w >= 0.0)) throw Error(ErrorCode::InvariantViolation, "composition must be non-negative");
                total += w;
            }
            if (!(total > 0.0)) throw Error(ErrorCode::InvariantViolation, "composition has no mass");
        }
    }
};

/// Estimates for one starting state (or one starting composition, start_state = -1).
struct StartStateResult {
    int start_state = -1;
    std::int64_t n_paths = 0;
    double cured = 0.0;
    double lost = 0.0;
    double unabsorbed = 0.0;
    double se_cured = 0.0;
    double se_lost = 0.0;
    double mean_steps = 0.0;  // over absorbed paths
    double se_mean_steps = 0.0;
    std::vector<double> mean_visits;  // per transitive state, counting the starting period
    std::vector<double> se_visits;
};

struct SimResult {
    std::vector<StartStateResult> per_start;
    std::vector<Warning> warnings;
};

namespace detail {

/// Row-wise cumulative distributions for inverse-CDF sampling.
class RowSampler {
public:
    explicit RowSampler(const TransitionMatrix& a) : n_(a.n_states()), cdf_(n_ * n_) {
        for (std::size_t i = 0; i < n_; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n_; ++j) {
                acc += a(i, j);
                cdf_[i * n_ + j] = acc;
            }
        }
    }

    int next(int from, double u) const {
        const double* row = cdf_.data() + static_cast<std::size_t>(from) * n_;
        const double target = u * row[n_ - 1];
        for (std::size_t j = 0; j < n_; ++j)
            if (target < row[j]) return static_cast<int>(j);
        // u * total can only reach the last bucket boundary through rounding.
        for (std::size_t j = n_; j-- > 0;)
            if (j == 0 || row[j] > row[j - 1]) return static_cast<int>(j);
        return 0;
    }

    static std::vector<double> cumulative(const std::vector<double>& weights) {
        std::vector<double> out(weights.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) out[i] = acc += weights[i];
        return out;
    }

private:
    std::size_t n_;
    std::vector<double> cdf_;
};

struct PathOutcome {
    int final_state = 0;
    int steps = 0;
};

template <class OnVisit>
PathOutcome run_path(const RowSampler& sampler, int start, int max_steps, SplitMix64& rng,
                     OnVisit&& on_visit) {
    int s = start;
    int steps = 0;
    while (!state::is_absorbing(s) && steps < max_steps) {
        on_visit(s, steps);
        s = sampler.next(s, rng.uniform());
        ++steps;
    }
    return {s, steps};
}

inline int sample_start(const std::vector<double>& cumulative, double u) {
    const double target = u * cumulative.back();
    for (std::size_t j = 0; j < cumulative.size(); ++j)
        if (target < cumulative[j]) return static_cast<int>(j);
    return static_cast<int>(cumulative.size() - 1);
}

struct Accumulator {
    std::int64_t n = 0, cured = 0, lost = 0, absorbed = 0;
    double sum_steps = 0.0, sum_steps2 = 0.0;
    std::vector<double> sum_visits, sum_visits2;

    explicit Accumulator(std::size_t n_transitive = 0)
        : sum_visits(n_transitive, 0.0), sum_visits2(n_transitive, 0.0) {}

    void merge(const Accumulator& o) {
        n += o.n;
        cured += o.cured;
        lost += o.lost;
        absorbed += o.absorbed;
        sum_steps += o.sum_steps;
        sum_steps2 += o.sum_steps2;
        for (std::size_t j = 0; j < sum_visits.size(); ++j) {
            sum_visits[j] += o.sum_visits[j];
            sum_visits2[j] += o.sum_visits2[j];
        }
    }
};

inline double mean_se(double sum, double sum2, std::int64_t n) {
    if (n < 2) return 0.0;
    const double dn = static_cast<double>(n);
    const double mean = sum / dn;
    const double var = std::max(0.0, (sum2 - dn * mean * mean) / (dn - 1.0));
    return std::sqrt(var / dn);
}

}  // namespace detail

inline constexpr std::int64_t kPathsPerChunk = 4096;

/// Simulates independent trajectories until absorption or `max_steps`.
///
/// Path p of stream s draws from SplitMix64::for_path(seed, s, p), and chunks
/// of paths are reduced in index order, so results do not depend on `threads`.
inline SimResult simulate_paths(const TransitionMatrix& a, const SimConfig& cfg) {
    cfg.validate(a.n_states());
    const detail::RowSampler sampler(a);
    const std::size_t n_transitive = a.n_transitive();

    std::vector<int> starts;
    if (!cfg.composition.empty()) {
        starts.push_back(-1);
    } else if (!cfg.start_states.empty()) {
        starts = cfg.start_states;
    } else {
        for (std::size_t s = 2; s < a.n_states(); ++s) starts.push_back(static_cast<int>(s));
    }
    const auto start_cdf = cfg.composition.empty() ? std::vector<double>{}
                                                   : detail::RowSampler::cumulative(cfg.composition);

    SimResult result;
    const unsigned workers = std::max(1u, cfg.threads);
    for (std::size_t stream = 0; stream < starts.size(); ++stream) {
        const int start = starts[stream];
        const std::int64_t n_chunks = (cfg.n_paths + kPathsPerChunk - 1) / kPathsPerChunk;
        std::vector<detail::Accumulator> chunks(static_cast<std::size_t>(n_chunks),
                                                detail::Accumulator(n_transitive));
        std::atomic<std::int64_t> next_chunk{0};

        auto work = [&] {
            std::vector<double> visits(n_transitive);
            for (std::int64_t c = next_chunk++; c < n_chunks; c = next_chunk++) {
                auto& acc = chunks[static_cast<std::size_t>(c)];
                const std::int64_t lo = c * kPathsPerChunk;
                const std::int64_t hi = std::min(cfg.n_paths, lo + kPathsPerChunk);
                for (std::int64_t p = lo; p < hi; ++p) {
                    auto rng = SplitMix64::for_path(cfg.seed, stream, static_cast<std::uint64_t>(p));
                    const int s0 = start >= 0 ? start : detail::sample_start(start_cdf, rng.uniform());
                    std::fill(visits.begin(), visits.end(), 0.0);
                    const auto out = detail::run_path(sampler, s0, cfg.max_steps, rng,
                                                      [&](int s, int) { visits[s - 2] += 1.0; });
                    ++acc.n;
                    if (state::is_absorbing(out.final_state)) {
                        ++acc.absorbed;
                        (out.final_state == state::kCured ? acc.cured : acc.lost) += 1;
                        acc.sum_steps += out.steps;
                        acc.sum_steps2 += static_cast<double>(out.steps) * out.steps;
                    }
                    for (std::size_t j = 0; j < n_transitive; ++j) {
                        acc.sum_visits[j] += visits[j];
                        acc.sum_visits2[j] += visits[j] * visits[j];
                    }
                }
            }
        };
        if (workers == 1) {
            work();
        } else {
            std::vector<std::jthread> pool;
            for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work);
        }

        detail::Accumulator total(n_transitive);
        for (const auto& c : chunks) total.merge(c);

        StartStateResult r;
        r.start_state = start;
        r.n_paths = total.n;
        const double n = static_cast<double>(total.n);
        r.cured = static_cast<double>(total.cured) / n;
        r.lost = static_cast<double>(total.lost) / n;
        r.unabsorbed = static_cast<double>(total.n - total.cured - total.lost) / n;
        r.se_cured = std::sqrt(r.cured * (1.0 - r.cured) / n);
        r.se_lost = std::sqrt(r.lost * (1.0 - r.lost) / n);
        if (total.absorbed > 0) {
            r.mean_steps = total.sum_steps / static_cast<double>(total.absorbed);
            r.se_mean_steps = detail::mean_se(total.sum_steps, total.sum_steps2, total.absorbed);
        }
        for (std::size_t j = 0; j < n_transitive; ++j) {
            r.mean_visits.push_back(total.sum_visits[j] / n);
            r.se_visits.push_back(detail::mean_se(total.sum_visits[j], total.sum_visits2[j], total.n));
        }
        if (total.absorbed < total.n) {
            result.warnings.push_back(
                {"UNABSORBED_MASS", "start " + (start >= 0 ? state::label(start) : std::string("composition")) +
                                        ": " + std::to_string(total.n - total.absorbed) +
                                        " paths unabsorbed after " + std::to_string(cfg.max_steps) +
                                        " steps"});
        }
        result.per_start.push_back(std::move(r));
    }
    return result;
}

/// Writes `path_id,step,state` rows for the first `n_paths` trajectories of the
/// first configured start, using the same streams as simulate_paths.
inline void write_trace_csv(std::ostream& out, const TransitionMatrix& a, const SimConfig& cfg,
                            std::int64_t n_paths) {
    cfg.validate(a.n_states());
    const detail::RowSampler sampler(a);
    const int start = !cfg.composition.empty() ? -1
                      : !cfg.start_states.empty() ? cfg.start_states.front()
                                                  : state::kForborne;
    const auto start_cdf = cfg.composition.empty() ? std::vector<double>{}
                                                   : detail::RowSampler::cumulative(cfg.composition);
    out << "path_id,step,state\n";
    for (std::int64_t p = 0; p < n_paths; ++p) {
        auto rng = SplitMix64::for_path(cfg.seed, 0, static_cast<std::uint64_t>(p));
        const int s0 = start >= 0 ? start : detail::sample_start(start_cdf, rng.uniform());
        const auto end = detail::run_path(sampler, s0, cfg.max_steps, rng, [&](int s, int step) {
            out << p << ',' << step << ',' << s << '\n';
        });
        out << p << ',' << end.steps << ',' << end.final_state << '\n';
    }
}

/// Expected occupancy composition * A^n for n = 1..horizon, plus the limit
/// composition * A_inf when the chain is applicable.
struct PortfolioProjection {
    std::vector<std::vector<double>> occupancy;  // index n-1 holds year n
    std::optional<std::vector<double>> limit;
};

inline PortfolioProjection simulate_portfolio(const TransitionMatrix& a, const std::vector<double>& composition,
                                              int horizon, double edge_threshold = 0.0) {
    if (composition.size() != a.n_states()) {
        throw Error(ErrorCode::InvariantViolation, "composition length must equal state count");
    }
    for (double w : composition)
        if (!(w >= 0.0)) throw Error(ErrorCode::InvariantViolation, "composition must be non-negative");
    if (horizon < 0) throw Error(ErrorCode::InvariantViolation, "horizon must be non-negative");

    PortfolioProjection out;
    std::vector<double> current = composition;
    for (int n = 1; n <= horizon; ++n) {
        current = left_multiply(current, a.entries());
        out.occupancy.push_back(current);
    }
    if (classify(a, edge_threshold).verdict == Verdict::Applicable) {
        out.limit = left_multiply(composition, limit_matrix(absorb(to_blocks(a))));
    }
    return out;
}

}  // namespace curerate
