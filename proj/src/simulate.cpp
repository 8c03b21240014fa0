#include "qdetect/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace qdetect {

double max_stable_dt(const ReducedModel& m) {
    const double r = std::max({m.lambda0, m.lambda1, m.lambda, std::fabs(m.a), m.mu * m.mu});
    return 0.1 / r;
}

void validate(const ScenarioConfig& cfg, const ReducedModel& m) {
    if (cfg.dt_sim < 0.0 || cfg.dt_sim > max_stable_dt(m) * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << "dt_sim must lie in (0, " << max_stable_dt(m) << "]";
        throw std::invalid_argument(os.str());
    }
    if (cfg.n_paths < 2) throw std::invalid_argument("n_paths must be >= 2");
    if (cfg.max_alarm_steps < 1) throw std::invalid_argument("max_alarm_steps must be >= 1");
}

ScenarioStream::ScenarioStream(const ReducedModel& m, double dt, Rng rng) : m_(&m), dt_(dt), rng_(rng) {
    theta_ = rng_.uniform() < m.pi ? 0.0 : draw_exp(m.lambda);
    if (theta_ == 0.0) {
        post_clock_ = true;
        next_event_ = draw_exp(m.lambda1);
    } else {
        next_event_ = draw_exp(m.lambda0);
    }
}

double ScenarioStream::draw_exp(double rate) { return -std::log(rng_.uniform()) / rate; }

std::size_t ScenarioStream::draw_atom(const std::vector<double>& w) {
    double u = rng_.uniform();
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
        if (u < w[i]) return i;
        u -= w[i];
    }
    return w.size() - 1;
}

ObservationSegment ScenarioStream::next() {
    const ReducedModel& m = *m_;
    // Interarrivals restart at theta with the post-change rate (memoryless).
    if (!post_clock_ && next_event_ > theta_) {
        post_clock_ = true;
        next_event_ = theta_ + draw_exp(m.lambda1);
    }
    const double grid_t = static_cast<double>(grid_k_ + 1) * dt_;
    double end = std::min(grid_t, next_event_);
    if (t_ < theta_ && theta_ < end) end = theta_;
    ObservationSegment s;
    s.t_end = end;
    s.dt = end - t_;
    const double drift = t_ >= theta_ ? m.mu * s.dt : 0.0;
    s.dX = drift + std::sqrt(s.dt) * std::normal_distribution<double>(0.0, 1.0)(rng_);
    if (end == next_event_) {
        s.event = true;
        const bool post = next_event_ >= theta_;
        if (m.marks.kind == MarkModel::Kind::Discrete) s.atom = draw_atom(post ? m.marks.nu1 : m.marks.nu0);
        s.jump = (m.lambda1 / m.lambda0) * likelihood_ratio(m.marks, s.atom);
        next_event_ = end + draw_exp(post ? m.lambda1 : m.lambda0);
    }
    if (end == grid_t) {
        s.grid_end = true;
        ++grid_k_;
    }
    t_ = end;
    return s;
}

ObservationPath sample_scenario(const ReducedModel& m, Rng& rng, double dt, std::uint64_t n_steps) {
    ScenarioStream st(m, dt, rng);
    ObservationPath p;
    p.theta = st.theta();
    std::uint64_t k = 0;
    while (k < n_steps) {
        p.segments.push_back(st.next());
        if (p.segments.back().grid_end) ++k;
    }
    rng = Rng(rng());  // advance the caller's stream
    return p;
}

FilterResult run_filter(const ObservationPath& path, const ReducedModel& m, double threshold, double phi0) {
    if (!(threshold >= 0.0)) throw std::invalid_argument("run_filter: threshold must be >= 0");
    FilterResult r;
    double phi = phi0 >= 0.0 ? phi0 : odds_from_prior(m.pi);
    r.times.push_back(0.0);
    r.phi.push_back(phi);
    if (phi >= threshold) {
        r.alarmed = true;
        return r;
    }
    for (const auto& s : path.segments) {
        phi = filter_step(phi, s.dt, s.dX, m);
        if (s.event) phi *= s.jump;
        r.times.push_back(s.t_end);
        r.phi.push_back(phi);
        if ((s.grid_end || s.event) && phi >= threshold) {
            r.alarmed = true;
            r.alarm_time = s.t_end;
            return r;
        }
    }
    return r;
}

ScenarioOutcome simulate_outcome(const ReducedModel& m, double threshold, double dt, std::uint64_t max_steps,
                                 Rng rng) {
    ScenarioStream st(m, dt, rng);
    ScenarioOutcome o;
    o.theta = st.theta();
    double phi = odds_from_prior(m.pi);
    double tau = 0.0;
    bool alarmed = phi >= threshold;
    std::uint64_t k = 0;
    while (!alarmed) {
        const ObservationSegment s = st.next();
        phi = filter_step(phi, s.dt, s.dX, m);
        if (s.event) phi *= s.jump;
        if (s.grid_end) ++k;
        if ((s.grid_end || s.event) && phi >= threshold) {
            alarmed = true;
            tau = s.t_end;
            break;
        }
        if (k >= max_steps) {
            o.censored = true;
            tau = s.t_end;
            break;
        }
    }
    o.tau = tau;
    if (o.censored) {
        o.false_alarm = false;
        o.delay = std::max(tau - o.theta, 0.0);
    } else {
        o.false_alarm = tau < o.theta;
        o.delay = o.false_alarm ? 0.0 : tau - o.theta;
    }
    o.penalty = (o.false_alarm ? 1.0 : 0.0) + m.c * o.delay;
    return o;
}

RiskEstimate evaluate_policy(const ReducedModel& m, double threshold, const ScenarioConfig& cfg) {
    if (!(threshold >= 0.0)) throw std::invalid_argument("evaluate_policy: threshold must be >= 0");
    validate(cfg, m);
    const double dt = cfg.dt_sim > 0.0 ? cfg.dt_sim : max_stable_dt(m);
    std::vector<ScenarioOutcome> out(cfg.n_paths);
    parallel_for(cfg.n_paths, cfg.workers, [&](std::size_t i) {
        out[i] = simulate_outcome(m, threshold, dt, cfg.max_alarm_steps, Rng::for_path(cfg.master_seed, i));
    });
    RiskEstimate r;
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double d = out[i].penalty - mean;
        mean += d / static_cast<double>(i + 1);
        m2 += d * (out[i].penalty - mean);
        if (out[i].censored) ++r.censored_count;
    }
    r.mean = mean;
    r.n_paths = out.size();
    r.stderr_ = std::sqrt(m2 / static_cast<double>(out.size() - 1) / static_cast<double>(out.size()));
    r.warning = static_cast<double>(r.censored_count) > 0.01 * static_cast<double>(r.n_paths);
    if (cfg.keep_outcomes) r.outcomes = std::move(out);
    return r;
}

}  // namespace qdetect
