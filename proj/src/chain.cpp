#include "qdetect/chain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace qdetect {

namespace {

// Discount below which a path no longer contributes (e^{-27.63} = 1e-12).
constexpr double kLogDiscountCut = 27.631021115928547;

StepParams raw_step(double y, double h, const ReducedModel& m) {
    const double drift = m.lambda + m.a * y;
    const double diff = m.mu * m.mu * y * y;
    const double den = diff + h * std::fabs(drift);
    StepParams s;
    s.p_up = (0.5 * diff + h * std::max(drift, 0.0)) / den;
    s.p_down = 1.0 - s.p_up;
    s.dt = h * h / den;
    return s;
}

std::uint64_t to_threshold(double p) {
    if (p >= 1.0) return std::numeric_limits<std::uint64_t>::max();
    if (p <= 0.0) return 0;
    return static_cast<std::uint64_t>(std::ldexp(p, 64));
}

}  // namespace

std::size_t GridSpec::ceil_index(double x) const {
    if (x <= 0.0) return 0;
    const double s = x / h;
    auto n = static_cast<std::size_t>(std::ceil(s - 1e-9));
    return n;
}

double default_grid_step(const ReducedModel& m) {
    const double mu2 = m.mu * m.mu;
    // Upwinding adds diffusion h |lambda + a y|; keep it below 1.4% of mu^2 y^2 at y = 1.
    return std::min(2e-3 * m.lambda / mu2, 0.014 * mu2 / (m.lambda + std::fabs(m.a)));
}

bool step_admissible(double h, const ReducedModel& m) {
    return h > 0.0 && m.mu * m.mu * h / (2.0 * m.lambda) <= 1e-3 * (1.0 + 1e-12);
}

GridSpec make_grid(double z_max, double h, const ReducedModel& m) {
    if (h <= 0.0) h = default_grid_step(m);
    if (!(z_max > 0.0)) throw std::invalid_argument("make_grid: z_max must be > 0");
    GridSpec g;
    g.h = h;
    g.n_points = static_cast<std::size_t>(std::ceil(z_max / h - 1e-9));
    return g;
}

StepParams step_params(double y, double h, const ReducedModel& m) {
    if (!(y > 0.0)) throw std::invalid_argument("step_params: y must be > 0 (0 is an entrance boundary)");
    if (!(h > 0.0)) throw std::invalid_argument("step_params: h must be > 0");
    return raw_step(y, h, m);
}

ConsistencyReport local_consistency_check(double y, double h, const ReducedModel& m) {
    const StepParams s = step_params(y, h, m);
    ConsistencyReport r;
    r.mean_lhs = (s.p_up - s.p_down) * h;
    r.mean_rhs = (m.lambda + m.a * y) * s.dt;
    r.mean_defect = r.mean_lhs - r.mean_rhs;
    r.second_lhs = h * h;
    r.second_rhs = m.mu * m.mu * y * y * s.dt;
    r.second_defect = r.second_lhs - r.second_rhs;
    r.defect_over_dt = r.second_defect / s.dt;
    return r;
}

Chain::Chain(const ReducedModel& m, double h, std::size_t top)
    : m_(m), h_(h), top_(top), pu_(top + 1), dt_(top + 1), up_thr_(top + 1) {
    if (!(h > 0.0)) throw std::invalid_argument("Chain: h must be > 0");
    if (top < 1) throw std::invalid_argument("Chain: need at least two nodes");
    for (std::size_t n = 0; n <= top; ++n) {
        const StepParams s = raw_step(h * static_cast<double>(n), h, m);
        pu_[n] = s.p_up;
        dt_[n] = s.dt;
        up_thr_[n] = to_threshold(s.p_up);
    }
}

std::uint64_t Chain::step_budget(const MCConfig& mc) const {
    if (mc.max_steps_per_path > 0) return mc.max_steps_per_path;
    const double n = static_cast<double>(top_);
    return static_cast<std::uint64_t>(std::min(10.0 * n * n, 1e15));
}

MCEstimate Chain::hitting_laplace(std::size_t start, std::size_t target, double beta,
                                  const MCConfig& mc, std::size_t ceiling) const {
    if (start > top_ || target > top_) throw std::out_of_range("hitting_laplace: node beyond chain tables");
    if (beta < 0.0) throw std::invalid_argument("hitting_laplace: beta must be >= 0");
    if (start == target) {
        MCEstimate e;
        e.mean = 1.0;
        e.n_paths = mc.n_paths;
        return e;
    }
    const std::size_t ceil_node = (ceiling == 0 || ceiling > top_) ? top_ : ceiling;
    const std::uint64_t budget = step_budget(mc);
    const double tcut = beta > 0.0 ? kLogDiscountCut / beta : std::numeric_limits<double>::infinity();
    const bool up = target > start;
    return monte_carlo(mc, [&](Rng& rng) {
        PathResult r;
        std::size_t n = start;
        double t = 0.0;
        for (std::uint64_t step = 0;; ++step) {
            if (n == target) {
                r.value = std::exp(-beta * t);
                return r;
            }
            if (step >= budget) {
                r.truncated = true;
                return r;
            }
            if (!up && n >= ceil_node) return r;
            t += dt_[n];
            if (t > tcut) return r;
            if (rng() <= up_thr_[n])
                ++n;
            else
                --n;
        }
    });
}

MCEstimate Chain::discounted_running_cost(std::size_t start, std::size_t absorb,
                                          const std::vector<double>& k, double beta,
                                          const MCConfig& mc) const {
    if (absorb > top_) throw std::out_of_range("discounted_running_cost: absorb beyond chain tables");
    if (start > absorb) throw std::invalid_argument("discounted_running_cost: start above absorbing node");
    if (!(beta > 0.0)) throw std::invalid_argument("discounted_running_cost: beta must be > 0");
    if (k.size() < absorb) throw std::invalid_argument("discounted_running_cost: k does not cover [0, r)");
    if (start == absorb) {
        MCEstimate e;
        e.n_paths = mc.n_paths;
        return e;
    }
    std::vector<double> e(absorb), w(absorb);
    for (std::size_t n = 0; n < absorb; ++n) {
        const double om = -std::expm1(-beta * dt_[n]);
        e[n] = 1.0 - om;
        w[n] = k[n] * om / beta;
    }
    const std::uint64_t budget = step_budget(mc);
    return monte_carlo(mc, [&](Rng& rng) {
        PathResult r;
        std::size_t n = start;
        double disc = 1.0, cost = 0.0;
        for (std::uint64_t step = 0; n < absorb; ++step) {
            if (step >= budget) {
                r.truncated = true;
                break;
            }
            cost += w[n] * disc;
            disc *= e[n];
            if (disc < 1e-12) break;
            if (rng() <= up_thr_[n])
                ++n;
            else
                --n;
        }
        r.value = cost;
        return r;
    });
}

std::vector<double> Chain::exact_running_cost(std::size_t absorb, const std::vector<double>& k,
                                              double beta) const {
    if (absorb > top_) throw std::out_of_range("exact_running_cost: absorb beyond chain tables");
    if (!(beta > 0.0)) throw std::invalid_argument("exact_running_cost: beta must be > 0");
    std::vector<double> u(absorb + 1, 0.0);
    if (absorb == 0) return u;
    // u_n - e_n p_d u_{n-1} - e_n p_u u_{n+1} = w_n, u_absorb = 0; Thomas sweep.
    std::vector<double> cp(absorb), dp(absorb);
    for (std::size_t n = 0; n < absorb; ++n) {
        const double om = -std::expm1(-beta * dt_[n]);
        const double e = 1.0 - om;
        const double lo = n == 0 ? 0.0 : -e * (1.0 - pu_[n]);
        const double up = -e * pu_[n];
        const double rhs = k[n] * om / beta;
        const double den = 1.0 - (n == 0 ? 0.0 : lo * cp[n - 1]);
        cp[n] = up / den;
        dp[n] = (rhs - (n == 0 ? 0.0 : lo * dp[n - 1])) / den;
    }
    u[absorb - 1] = dp[absorb - 1];  // u_absorb = 0
    for (std::size_t n = absorb - 1; n-- > 0;) u[n] = dp[n] - cp[n] * u[n + 1];
    return u;
}

std::vector<double> Chain::exact_log_up(double beta) const {
    // q_n = 1 - E^n[e^{-beta tau_{n+1}}], kept in this form to avoid cancellation.
    std::vector<double> out(top_, 0.0);
    double q = 0.0;
    for (std::size_t n = 0; n < top_; ++n) {
        const double om = -std::expm1(-beta * dt_[n]);
        const double e = 1.0 - om;
        const double pu = pu_[n], pd = 1.0 - pu;
        q = n == 0 ? om + e * pd : (om + e * pd * q) / (pu + pd * om + pd * e * q);
        out[n] = std::log1p(-q);
    }
    return out;
}

std::vector<double> Chain::exact_log_down(double beta) const {
    std::vector<double> out(top_ + 1, 0.0);
    // Homogeneous fixed point at the top node stands in for the far field.
    {
        const double om = -std::expm1(-beta * dt_[top_]);
        const double e = 1.0 - om;
        const double pu = pu_[top_], pd = 1.0 - pu;
        const double disc = 1.0 - 4.0 * pu * pd * e * e;
        const double L = pu > 0.0 ? (1.0 - std::sqrt(std::max(disc, 0.0))) / (2.0 * pu * e) : e * pd;
        out[top_] = std::log(L);
    }
    double q = -std::expm1(out[top_]);
    for (std::size_t n = top_; n-- > 1;) {
        const double om = -std::expm1(-beta * dt_[n]);
        const double e = 1.0 - om;
        const double pu = pu_[n], pd = 1.0 - pu;
        q = (om + e * pu * q) / (pd + pu * om + pu * e * q);
        out[n] = std::log1p(-q);
    }
    return out;
}

MCEstimate Chain::mean_position(std::size_t start, double t, const MCConfig& mc) const {
    const std::uint64_t budget = step_budget(mc);
    return monte_carlo(mc, [&](Rng& rng) {
        PathResult r;
        std::size_t n = start;
        double s = 0.0;
        for (std::uint64_t step = 0;; ++step) {
            if (n >= top_ || step >= budget) {
                r.truncated = true;
                break;
            }
            if (s + dt_[n] > t) break;
            s += dt_[n];
            if (rng() <= up_thr_[n])
                ++n;
            else
                --n;
        }
        r.value = h_ * static_cast<double>(n);
        return r;
    });
}

MCEstimate hitting_laplace(double y_start, double z_target, double beta, const MCConfig& mc,
                           const ReducedModel& m, double h) {
    const auto s = static_cast<std::size_t>(std::llround(y_start / h));
    const auto z = static_cast<std::size_t>(std::llround(z_target / h));
    const std::size_t top = std::max(s, z) * 2 + 2;
    return Chain(m, h, top).hitting_laplace(s, z, beta, mc);
}

MCEstimate discounted_running_cost(double y_start, double absorb_at, const std::vector<double>& k,
                                   double beta, const MCConfig& mc, const ReducedModel& m,
                                   double h) {
    const auto s = static_cast<std::size_t>(std::llround(y_start / h));
    const auto r = static_cast<std::size_t>(std::llround(absorb_at / h));
    return Chain(m, h, std::max<std::size_t>(r, 1)).discounted_running_cost(s, r, k, beta, mc);
}

}  // namespace qdetect
