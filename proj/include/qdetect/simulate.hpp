#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "qdetect/model.hpp"
#include "qdetect/parallel.hpp"
#include "qdetect/rng.hpp"

namespace qdetect {

struct ScenarioConfig {
    double dt_sim = 0.0;  // 0: max_stable_dt
    std::uint64_t max_alarm_steps = 1'000'000;
    std::uint64_t master_seed = 777;
    std::size_t n_paths = 10000;
    unsigned workers = default_workers();
    bool keep_outcomes = false;
};

/// 0.1 / max(lambda0, lambda1, lambda, |a|, mu^2).
double max_stable_dt(const ReducedModel& m);
void validate(const ScenarioConfig& cfg, const ReducedModel& m);

// One piece of the observation record. Pieces end at grid times, event
// times and the disorder time.
struct ObservationSegment {
    double t_end = 0.0;
    double dt = 0.0;
    double dX = 0.0;
    bool grid_end = false;
    bool event = false;
    std::size_t atom = 0;
    double jump = 1.0;  // (lambda1/lambda0) f(atom), what the filter applies
};

struct ObservationPath {
    double theta = 0.0;
    std::vector<ObservationSegment> segments;
};

// Generates observations under the physical measure piece by piece.
class ScenarioStream {
public:
    ScenarioStream(const ReducedModel& m, double dt, Rng rng);
    double theta() const { return theta_; }
    ObservationSegment next();

private:
    double draw_exp(double rate);
    std::size_t draw_atom(const std::vector<double>& w);

    const ReducedModel* m_;
    double dt_;
    Rng rng_;
    double theta_ = 0.0;
    double t_ = 0.0;
    std::uint64_t grid_k_ = 0;
    double next_event_ = 0.0;
    bool post_clock_ = false;
};

/// Observation path covering n_steps grid steps of length dt.
ObservationPath sample_scenario(const ReducedModel& m, Rng& rng, double dt, std::uint64_t n_steps);

struct FilterResult {
    std::vector<double> times;
    std::vector<double> phi;
    bool alarmed = false;
    double alarm_time = 0.0;
};

/// Phi filter along the path from phi0 (default pi/(1-pi)); alarm at the first
/// grid or event time with Phi >= threshold. Without an alarm the run is censored.
FilterResult run_filter(const ObservationPath& path, const ReducedModel& m, double threshold,
                        double phi0 = -1.0);

/// One integrating-factor step of the between-jump filter.
inline double filter_step(double phi, double dt, double dX, const ReducedModel& m);

struct ScenarioOutcome {
    double theta = 0.0;
    double tau = 0.0;
    bool false_alarm = false;
    double delay = 0.0;
    double penalty = 0.0;
    bool censored = false;
};

struct RiskEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t n_paths = 0;
    std::size_t censored_count = 0;
    bool warning = false;  // censored > 1%
    std::vector<ScenarioOutcome> outcomes;
};

ScenarioOutcome simulate_outcome(const ReducedModel& m, double threshold, double dt,
                                 std::uint64_t max_steps, Rng rng);

/// Monte Carlo Bayes risk P{tau < theta} + c E(tau - theta)^+ of the first
/// entrance of Phi into [threshold, inf).
RiskEstimate evaluate_policy(const ReducedModel& m, double threshold, const ScenarioConfig& cfg);

inline double filter_step(double phi, double dt, double dX, const ReducedModel& m) {
    return phi * std::exp((m.a - 0.5 * m.mu * m.mu) * dt + m.mu * dX) + m.lambda * dt;
}

}  // namespace qdetect
