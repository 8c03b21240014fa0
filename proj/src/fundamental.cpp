#include "qdetect/fundamental.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace qdetect {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

MCConfig edge_config(const MCConfig& mc, std::uint64_t tag, std::size_t edge) {
    MCConfig e = mc;
    std::uint64_t x = mc.master_seed ^ (tag * 0x9e3779b97f4a7c15ULL);
    x ^= splitmix64(x) + static_cast<std::uint64_t>(edge);
    e.master_seed = splitmix64(x);
    e.workers = 1;
    return e;
}

struct EdgeFactor {
    double log_mean = 0.0;
    double rel_se = 0.0;
};

// Upcrossing factors E^{z_n}[e^{-beta tau_{z_{n+1}}}] for n in [lo, hi).
std::vector<EdgeFactor> mc_up_factors(const Chain& chain, std::size_t lo, std::size_t hi,
                                      double beta, const MCConfig& mc) {
    std::vector<EdgeFactor> out(hi - lo);
    parallel_for(hi - lo, mc.workers, [&](std::size_t i) {
        const std::size_t n = lo + i;
        const MCEstimate e = chain.hitting_laplace(n, n + 1, beta, edge_config(mc, 1, n));
        if (e.mean >= 1.0 + 3.0 * e.stderr_ || !(e.mean > 0.0))
            throw std::runtime_error("compute_psi: inconsistent Laplace estimate at node " +
                                     std::to_string(n) + " (mean " + std::to_string(e.mean) + ")");
        out[i].log_mean = std::log(std::min(e.mean, 1.0));
        out[i].rel_se = e.stderr_ / e.mean;
    });
    return out;
}

// Downcrossing factors E^{z_n}[e^{-beta tau_{z_{n-1}}}] for n in [lo, hi].
std::vector<EdgeFactor> mc_down_factors(const Chain& chain, std::size_t lo, std::size_t hi,
                                        std::size_t ceiling, double beta, const MCConfig& mc) {
    std::vector<EdgeFactor> out(hi - lo + 1);
    parallel_for(hi - lo + 1, mc.workers, [&](std::size_t i) {
        const std::size_t n = lo + i;
        const MCEstimate e = chain.hitting_laplace(n, n - 1, beta, edge_config(mc, 2, n), ceiling);
        if (e.mean <= 3.0 * e.stderr_ || !(e.mean > 0.0))
            throw std::runtime_error("compute_eta: downcrossing estimate too small at node " +
                                     std::to_string(n) + "; increase n_paths");
        out[i].log_mean = std::log(e.mean);
        out[i].rel_se = e.stderr_ / e.mean;
    });
    return out;
}

void fill_s_prime(FundamentalSolutions& fs, const ReducedModel& m) {
    fs.log_s_prime.resize(fs.size());
    fs.log_s_prime[0] = kInf;
    for (std::size_t n = 1; n < fs.size(); ++n) fs.log_s_prime[n] = log_scale_density(fs.grid.node(n), m);
}

}  // namespace

double FundamentalSolutions::psi(std::size_t n) const { return std::exp(log_psi[n]); }
double FundamentalSolutions::eta(std::size_t n) const { return std::exp(log_eta[n]); }
double FundamentalSolutions::s_prime(std::size_t n) const { return std::exp(log_s_prime[n]); }

double log_scale_density(double y, const ReducedModel& m) {
    if (!(y > 0.0)) throw std::invalid_argument("scale_density: y must be > 0");
    const double mu2 = m.mu * m.mu;
    return 2.0 * m.lambda / (mu2 * y) - 2.0 * m.a / mu2 * std::log(y);
}

double scale_density(double y, const ReducedModel& m) { return std::exp(log_scale_density(y, m)); }

FundamentalColumn compute_psi(const GridSpec& grid, const ReducedModel& m, const MCConfig& mc) {
    const std::size_t N = grid.n_points;
    const Chain chain(m, grid.h, N);
    const auto f = mc_up_factors(chain, 0, N, m.beta(), mc);
    FundamentalColumn c;
    c.log_value.assign(N + 1, 0.0);
    c.rel_err.assign(N + 1, 0.0);
    double var = 0.0;
    for (std::size_t n = N; n-- > 0;) {
        c.log_value[n] = c.log_value[n + 1] + f[n].log_mean;
        var += f[n].rel_se * f[n].rel_se;
        c.rel_err[n] = std::sqrt(var);
    }
    return c;
}

FundamentalColumn compute_eta(const GridSpec& grid, const ReducedModel& m, const MCConfig& mc) {
    const std::size_t N = grid.n_points;
    const std::size_t ceiling = 2 * N;
    const Chain chain(m, grid.h, ceiling);
    const auto f = mc_down_factors(chain, 1, N, ceiling, m.beta(), mc);
    FundamentalColumn c;
    c.log_value.assign(N + 1, 0.0);
    c.rel_err.assign(N + 1, 0.0);
    double var = 0.0;
    for (std::size_t n = N; n-- > 0;) {
        c.log_value[n] = c.log_value[n + 1] - f[n].log_mean;  // f[n] is the edge n+1 -> n
        var += f[n].rel_se * f[n].rel_se;
        c.rel_err[n] = std::sqrt(var);
    }
    return c;
}

FundamentalColumn compute_psi_exact(const GridSpec& grid, const ReducedModel& m) {
    const std::size_t N = grid.n_points;
    const Chain chain(m, grid.h, N);
    const auto lu = chain.exact_log_up(m.beta());
    FundamentalColumn c;
    c.log_value.assign(N + 1, 0.0);
    c.rel_err.assign(N + 1, 0.0);
    for (std::size_t n = N; n-- > 0;) c.log_value[n] = c.log_value[n + 1] + lu[n];
    return c;
}

FundamentalColumn compute_eta_exact(const GridSpec& grid, const ReducedModel& m) {
    const std::size_t N = grid.n_points;
    const Chain chain(m, grid.h, 4 * N);
    const auto ld = chain.exact_log_down(m.beta());
    FundamentalColumn c;
    c.log_value.assign(N + 1, 0.0);
    c.rel_err.assign(N + 1, 0.0);
    for (std::size_t n = N; n-- > 0;) c.log_value[n] = c.log_value[n + 1] - ld[n + 1];
    return c;
}

FundamentalSolutions compute_fundamentals(const GridSpec& grid, const ReducedModel& m,
                                          FundamentalMethod method, const MCConfig& mc) {
    if (grid.n_points < 6) throw std::invalid_argument("compute_fundamentals: grid needs at least 6 intervals");
    FundamentalSolutions fs;
    fs.grid = grid;
    fs.method = method;
    FundamentalColumn p, e;
    if (method == FundamentalMethod::ChainExact) {
        p = compute_psi_exact(grid, m);
        e = compute_eta_exact(grid, m);
    } else {
        p = compute_psi(grid, m, mc);
        e = compute_eta(grid, m, mc);
    }
    fs.log_psi = std::move(p.log_value);
    fs.psi_rel_err = std::move(p.rel_err);
    fs.log_eta = std::move(e.log_value);
    fs.eta_rel_err = std::move(e.rel_err);
    fill_s_prime(fs, m);
    update_wronskian(fs);
    return fs;
}

FundamentalSolutions extend_grid(const FundamentalSolutions& fs, double new_z_max,
                                 const ReducedModel& m, const MCConfig& mc) {
    if (!(new_z_max > fs.grid.z_max())) throw std::invalid_argument("extend_grid: new_z_max must exceed z_max");
    GridSpec g = fs.grid;
    const std::size_t N0 = g.n_points;
    g.n_points = static_cast<std::size_t>(std::ceil(new_z_max / g.h - 1e-9));
    const std::size_t N = g.n_points;
    FundamentalSolutions out = fs;
    out.grid = g;
    out.log_psi.resize(N + 1);
    out.log_eta.resize(N + 1);
    out.psi_rel_err.resize(N + 1);
    out.eta_rel_err.resize(N + 1);
    if (fs.method == FundamentalMethod::ChainExact) {
        const Chain up(m, g.h, N);
        const auto lu = up.exact_log_up(m.beta());
        const Chain down(m, g.h, 4 * N);
        const auto ld = down.exact_log_down(m.beta());
        for (std::size_t n = N0; n < N; ++n) {
            out.log_psi[n + 1] = out.log_psi[n] - lu[n];
            out.log_eta[n + 1] = out.log_eta[n] + ld[n + 1];
            out.psi_rel_err[n + 1] = out.psi_rel_err[n];
            out.eta_rel_err[n + 1] = out.eta_rel_err[n];
        }
    } else {
        const Chain chain(m, g.h, 2 * N);
        const auto fu = mc_up_factors(chain, N0, N, m.beta(), mc);
        const auto fd = mc_down_factors(chain, N0 + 1, N, 2 * N, m.beta(), mc);
        for (std::size_t n = N0; n < N; ++n) {
            const auto& u = fu[n - N0];
            const auto& d = fd[n - N0];
            out.log_psi[n + 1] = out.log_psi[n] - u.log_mean;
            out.log_eta[n + 1] = out.log_eta[n] + d.log_mean;
            out.psi_rel_err[n + 1] = std::hypot(out.psi_rel_err[n], u.rel_se);
            out.eta_rel_err[n + 1] = std::hypot(out.eta_rel_err[n], d.rel_se);
        }
    }
    fill_s_prime(out, m);
    update_wronskian(out);
    return out;
}

std::vector<double> wronskian_ratio(const FundamentalSolutions& fs) {
    const std::size_t N = fs.size() - 1;
    const double h = fs.grid.h;
    std::vector<double> r(N + 1, std::numeric_limits<double>::quiet_NaN());
    auto d5 = [h](const std::vector<double>& f, std::size_t n) {
        return (f[n - 2] - 8.0 * f[n - 1] + 8.0 * f[n + 1] - f[n + 2]) / (12.0 * h);
    };
    for (std::size_t n = 2; n + 2 <= N; ++n) {
        const double dlp = d5(fs.log_psi, n), dle = d5(fs.log_eta, n);
        r[n] = std::exp(fs.log_psi[n] + fs.log_eta[n] - fs.log_s_prime[n]) * (dlp - dle);
    }
    return r;
}

std::pair<double, double> wronskian_ref(const FundamentalSolutions& fs) {
    std::vector<double> v;
    for (double x : wronskian_ratio(fs))
        if (std::isfinite(x)) v.push_back(x);
    if (v.size() < 5) throw std::invalid_argument("wronskian_ref: need at least 5 interior nodes");
    std::sort(v.begin(), v.end());
    auto q = [&](double p) {
        const double pos = p * static_cast<double>(v.size() - 1);
        const auto i = static_cast<std::size_t>(pos);
        const double fr = pos - static_cast<double>(i);
        return i + 1 < v.size() ? v[i] * (1.0 - fr) + v[i + 1] * fr : v[i];
    };
    const double med = q(0.5);
    return {med, (q(0.75) - q(0.25)) / med};
}

void update_wronskian(FundamentalSolutions& fs) {
    const auto [b, disp] = wronskian_ref(fs);
    fs.b_ref = b;
    fs.dispersion = disp;
    fs.dispersion_warning = !(disp <= 0.2) || !(b > 0.0);
}

void write_fundamentals_csv(const FundamentalSolutions& fs, std::ostream& os) {
    os << "node,psi,eta,s_prime,rel_err\n";
    os << std::setprecision(12);
    for (std::size_t n = 0; n < fs.size(); ++n) {
        os << fs.grid.node(n) << ',' << fs.psi(n) << ',' << fs.eta(n) << ',';
        if (n == 0)
            os << "inf";
        else
            os << fs.s_prime(n);
        os << ',' << std::hypot(fs.psi_rel_err[n], fs.eta_rel_err[n]) << '\n';
    }
}

}  // namespace qdetect
