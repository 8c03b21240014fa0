#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "qdetect/model.hpp"
#include "qdetect/parallel.hpp"
#include "qdetect/rng.hpp"

namespace qdetect {

struct GridSpec {
    double h = 0.0;
    std::size_t n_points = 0;  // nodes are 0, h, ..., n_points*h

    double z_max() const { return h * static_cast<double>(n_points); }
    double node(std::size_t n) const { return h * static_cast<double>(n); }
    std::size_t size() const { return n_points + 1; }
    /// Smallest node index with node >= x.
    std::size_t ceil_index(double x) const;
};

/// Largest step with mu^2 h / (2 lambda) <= 1e-3 and h (lambda + |a|) <= 0.014 mu^2.
double default_grid_step(const ReducedModel& m);
bool step_admissible(double h, const ReducedModel& m);
/// Uniform grid covering [0, z_max]; h <= 0 selects default_grid_step.
GridSpec make_grid(double z_max, double h, const ReducedModel& m);

struct StepParams {
    double p_up = 0.0;
    double p_down = 0.0;
    double dt = 0.0;
};

/// Transition probabilities and interpolation interval of the chain at y > 0.
StepParams step_params(double y, double h, const ReducedModel& m);

struct ConsistencyReport {
    double mean_lhs = 0.0;  // (p_up - p_down) h
    double mean_rhs = 0.0;  // (lambda + a y) dt
    double mean_defect = 0.0;
    double second_lhs = 0.0;  // h^2
    double second_rhs = 0.0;  // mu^2 y^2 dt
    double second_defect = 0.0;
    double defect_over_dt = 0.0;
};

ConsistencyReport local_consistency_check(double y, double h, const ReducedModel& m);

struct MCConfig {
    std::size_t n_paths = 1000;
    std::uint64_t master_seed = 12345;
    std::uint64_t max_steps_per_path = 0;  // 0: 10 (z_max/h)^2
    std::optional<double> target_rel_stderr;
    std::size_t max_batches = 64;
    unsigned workers = default_workers();
};

struct MCEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t n_paths = 0;
    std::size_t truncated = 0;
    bool warning = false;  // truncated > 0.1% of paths
};

struct PathResult {
    double value = 0.0;
    bool truncated = false;
};

/// Runs n_paths (or batches of n_paths when a stderr target is set) with
/// per-path streams Rng::for_path(master_seed, index).
template <class PathFn>
MCEstimate monte_carlo(const MCConfig& mc, PathFn&& fn);

// Birth-death chain on {0, h, 2h, ...} with per-node tables up to `top`.
class Chain {
public:
    Chain(const ReducedModel& m, double h, std::size_t top);

    double h() const { return h_; }
    std::size_t top() const { return top_; }
    const ReducedModel& model() const { return m_; }
    double p_up(std::size_t n) const { return pu_[n]; }
    double dt(std::size_t n) const { return dt_[n]; }

    /// E[exp(-beta t_N)] for the first hit of node `target`. Downward targets
    /// treat reaching `ceiling` (default: table top) as an escape with value 0.
    MCEstimate hitting_laplace(std::size_t start, std::size_t target, double beta,
                               const MCConfig& mc, std::size_t ceiling = 0) const;

    /// E[sum_{n<N} k(xi_n) e^{-beta t_n} (1 - e^{-beta dt_n}) / beta] with
    /// absorption at node `absorb`; k indexed by node.
    MCEstimate discounted_running_cost(std::size_t start, std::size_t absorb,
                                       const std::vector<double>& k, double beta,
                                       const MCConfig& mc) const;

    /// Same expectation for every start node in [0, absorb], by solving the
    /// first-step equations exactly.
    std::vector<double> exact_running_cost(std::size_t absorb, const std::vector<double>& k,
                                           double beta) const;

    /// log E^{n}[e^{-beta tau_{n+1}}] for n in [0, top).
    std::vector<double> exact_log_up(double beta) const;
    /// log E^{n}[e^{-beta tau_{n-1}}] for n in [1, top]; index 0 unused.
    std::vector<double> exact_log_down(double beta) const;

    /// Expected chain position after interpolated time t, started at `start`.
    MCEstimate mean_position(std::size_t start, double t, const MCConfig& mc) const;

private:
    std::uint64_t step_budget(const MCConfig& mc) const;

    ReducedModel m_;
    double h_;
    std::size_t top_;
    std::vector<double> pu_, dt_;
    std::vector<std::uint64_t> up_thr_;
};

/// Convenience wrappers taking odds values on the grid of step h.
MCEstimate hitting_laplace(double y_start, double z_target, double beta, const MCConfig& mc,
                           const ReducedModel& m, double h);
MCEstimate discounted_running_cost(double y_start, double absorb_at, const std::vector<double>& k,
                                   double beta, const MCConfig& mc, const ReducedModel& m,
                                   double h);

}  // namespace qdetect

#include "qdetect/chain_impl.hpp"
