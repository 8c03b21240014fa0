#include "qdetect/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace qdetect {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// g1(D) = (1 - e^{-D})/D, g2(D) = (1 - e^{-D}(1 + D))/D^2 for D >= 0.
void expfit_coeffs(double D, double& g1, double& g2) {
    if (D == kInf) {
        g1 = g2 = 0.0;
    } else if (D < 1e-4) {
        g1 = 1.0 - D / 2.0 + D * D / 6.0;
        g2 = 0.5 - D / 3.0 + D * D / 8.0;
    } else {
        const double em = std::exp(-D);
        g1 = -std::expm1(-D) / D;
        g2 = (-std::expm1(-D) - D * em) / (D * D);
    }
}

// int_0^len exp(A(s)) k(s) ds with A and k linear between the endpoint values.
double expfit(double A0, double A1, double k0, double k1, double len) {
    if (A0 == -kInf && A1 == -kInf) return 0.0;
    double g1, g2;
    if (A1 >= A0) {
        expfit_coeffs(A1 - A0, g1, g2);
        return len * std::exp(A1) * (k1 * g1 - (k1 - k0) * g2);
    }
    expfit_coeffs(A0 - A1, g1, g2);
    return len * std::exp(A0) * (k0 * g1 + (k1 - k0) * g2);
}

std::vector<double> cost_on_grid(const GridFunction& w, const ReducedModel& m, std::size_t n_nodes,
                                 double h) {
    const auto jt = m.jumps();
    std::vector<double> k(n_nodes);
    for (std::size_t n = 0; n < n_nodes; ++n) {
        const double z = h * static_cast<double>(n);
        k[n] = running_cost_g(z, m) + m.lambda0 * apply_K(w, z, jt);
    }
    return k;
}

struct GreenPieces {
    std::vector<double> k;       // g + lambda0 K w
    std::vector<double> A0, A1;  // log-weights of cell n -> n+1 in x = 1/u, rescaled to node n+1
    std::vector<double> len;     // cell length in x
    std::vector<double> growth;  // Q carry factor across cell n -> n+1
    std::vector<double> Q;
    std::vector<double> z;
};

// The inner weight 2 psi / (mu^2 u^2 S') is integrated in x = 1/u, where its
// log is close to linear: -2 lambda x / mu^2 - (2a/mu^2) log x + log psi.
// Cells where the log-weight changes by more than this are split in x with
// the exact scale density; the chord of log S' in x is too coarse there.
constexpr double kStiffCell = 1.0;

// Integral over the cell n -> n+1 (x from 1/z_{n+1} up to 1/z_n, open above
// for n = 0) of psi k 2/(mu^2 S') dx, times e^{offset}. log psi and k are
// linear in u inside the cell.
double stiff_cell(const GreenPieces& g, const FundamentalSolutions& fs, const ReducedModel& m,
                  std::size_t n, double offset) {
    const double h = fs.grid.h;
    const double x_lo = 1.0 / g.z[n + 1];
    const double x_hi = n == 0 ? kInf : 1.0 / g.z[n];
    const double mu2 = m.mu * m.mu;
    // Smallest decay rate of log S' over the cell bounds the span that matters.
    const double p = 2.0 * m.a / mu2;
    const double rate = 2.0 * m.lambda / mu2 + std::min(0.0, p) / x_lo;
    const double span = rate > 0.0 ? std::min(x_hi - x_lo, 45.0 / rate) : x_hi - x_lo;
    const std::size_t pieces = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(span * std::max(rate, 1e-300) / 0.25)), 1, 4000);
    auto logw = [&](double x, double& k) {
        const double u = 1.0 / x;
        const double t = (u - g.z[n]) / h;
        k = g.k[n] + t * (g.k[n + 1] - g.k[n]);
        const double lpsi = fs.log_psi[n] + t * (fs.log_psi[n + 1] - fs.log_psi[n]);
        return lpsi - log_scale_density(u, m) + offset;
    };
    double total = 0.0;
    double xa = x_lo, ka = 0.0;
    double la = logw(xa, ka);
    for (std::size_t i = 1; i <= pieces; ++i) {
        const double xb = x_lo + span * static_cast<double>(i) / static_cast<double>(pieces);
        double kb = 0.0;
        const double lb = logw(xb, kb);
        total += expfit(la, lb, ka, kb, xb - xa);
        xa = xb;
        ka = kb;
        la = lb;
    }
    return total;
}

GreenPieces green_pieces(const GridFunction& w, const FundamentalSolutions& fs, const ReducedModel& m) {
    const std::size_t N = fs.size() - 1;
    const double h = fs.grid.h;
    const double mu2 = m.mu * m.mu;
    const double lw = std::log(2.0 / mu2);
    GreenPieces g;
    g.k = cost_on_grid(w, m, N + 1, h);
    g.A0.resize(N);
    g.A1.resize(N);
    g.len.resize(N);
    g.growth.resize(N);
    g.Q.resize(N + 1);
    g.z.resize(N + 1);
    for (std::size_t n = 0; n <= N; ++n) g.z[n] = fs.grid.node(n);
    // Near 0, M(z) ~ psi k e^{-log S'}/lambda, so Q(0+) = k(0)/lambda.
    g.Q[0] = g.k[0] / m.lambda;
    for (std::size_t n = 0; n < N; ++n) {
        const double shift = fs.log_psi[n + 1] - fs.log_s_prime[n + 1];
        g.A1[n] = lw;
        if (n == 0) {
            g.A0[n] = -kInf;
            g.len[n] = kInf;
            g.growth[n] = 0.0;
        } else {
            g.A0[n] = fs.log_psi[n] - fs.log_s_prime[n] + lw - shift;
            g.len[n] = h / (g.z[n] * g.z[n + 1]);
            g.growth[n] = std::exp(fs.log_s_prime[n + 1] - fs.log_s_prime[n] + fs.log_psi[n] - fs.log_psi[n + 1]);
        }
        const double cell = (n > 0 && std::fabs(g.A0[n] - g.A1[n]) <= kStiffCell)
                                ? expfit(g.A0[n], g.A1[n], g.k[n], g.k[n + 1], g.len[n])
                                : stiff_cell(g, fs, m, n, lw - shift);
        g.Q[n + 1] = g.Q[n] * g.growth[n] + cell;
    }
    return g;
}

// Sign-carrying value at z_n + s h, scaled like Q_{n+1}.
double partial_cell(const GreenPieces& g, std::size_t n, double s, double h) {
    if (n == 0) return (1.0 - s) * g.Q[0] + s * g.Q[1];
    const double z = g.z[n] + s * h;
    const double t = (1.0 / g.z[n] - 1.0 / z) / g.len[n];
    const double A0 = g.A0[n], A1 = A0 + t * (g.A1[n] - A0);
    const double k0 = g.k[n], k1 = k0 + s * (g.k[n + 1] - k0);
    return g.Q[n] * g.growth[n] + expfit(A0, A1, k0, k1, t * g.len[n]);
}

double sup_abs_diff(const GridFunction& a, const GridFunction& b, std::size_t n_nodes) {
    double d = 0.0;
    for (std::size_t n = 0; n < n_nodes; ++n) {
        const double z = a.h * static_cast<double>(n);
        d = std::max(d, std::fabs(a(z) - b(z)));
    }
    return d;
}

}  // namespace

double phi_ell(const GridFunction& w, const ReducedModel& m, double tol) {
    const auto jt = m.jumps();
    auto f = [&](double phi) { return running_cost_g(phi, m) + m.lambda0 * apply_K(w, phi, jt); };
    double lo = 0.0, hi = m.lambda / m.c + m.lambda0 * w.sup_abs() + 1.0;
    while (f(hi) < 0.0) hi *= 2.0;
    if (!(tol > 0.0)) tol = 1e-12 * hi;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

Threshold find_threshold(const GridFunction& w, FundamentalSolutions& fs, const ReducedModel& m,
                         const MCConfig& mc, double root_tol) {
    const double h = fs.grid.h;
    if (!(root_tol > 0.0)) root_tol = h / 4.0;
    for (int attempt = 0;; ++attempt) {
        GreenPieces g = green_pieces(w, fs, m);
        const std::size_t N = fs.size() - 1;
        std::size_t cross = 0;
        for (std::size_t n = 1; n <= N; ++n) {
            if (g.Q[n] >= 0.0) {
                cross = n;
                break;
            }
        }
        if (cross == 0) {
            if (attempt >= 12 || N > 20'000'000)
                throw NumericalDiagnostic("find_threshold: cumulative integral has no sign change on [0, " +
                                              std::to_string(fs.grid.z_max()) + "]",
                                          g.Q);
            fs = extend_grid(fs, 2.0 * fs.grid.z_max(), m, mc);
            continue;
        }
        const std::size_t n = cross - 1;
        double s_lo = 0.0, s_hi = 1.0;
        while ((s_hi - s_lo) * h > root_tol) {
            const double s = 0.5 * (s_lo + s_hi);
            (partial_cell(g, n, s, h) < 0.0 ? s_lo : s_hi) = s;
        }
        Threshold t;
        t.lo = fs.grid.node(n) + s_lo * h;
        t.hi = fs.grid.node(n) + s_hi * h;
        t.mid = 0.5 * (t.lo + t.hi);
        t.trace = std::move(g.Q);
        return t;
    }
}

Threshold phi_r(const GridFunction& w, FundamentalSolutions& fs, const ReducedModel& m,
                const MCConfig& mc, double root_tol) {
    const GridFunction low = GridFunction::constant(-w.sup_abs(), fs.grid.h, fs.size());
    return find_threshold(low, fs, m, mc, root_tol);
}

ValueFunction apply_H_quadrature(const GridFunction& w, const Threshold& thr,
                                 const FundamentalSolutions& fs, const ReducedModel& m) {
    const std::size_t N = fs.size() - 1;
    const double h = fs.grid.h;
    const GreenPieces g = green_pieces(w, fs, m);
    ValueFunction v = GridFunction::zero(h, N + 1);
    v.threshold = thr.mid;
    if (thr.mid <= 0.0) return v;
    // Last node strictly below the threshold.
    std::size_t j = std::min<std::size_t>(N, static_cast<std::size_t>(std::ceil(thr.mid / h)) - 1);
    while (j > 0 && fs.grid.node(j) >= thr.mid) --j;
    auto q = [&](std::size_t n) { return g.Q[n] * std::exp(-fs.log_psi[n]); };
    // Hw(phi) = psi(phi) int_phi^r Q/psi dz, with Q(r) = 0.
    double I = 0.5 * (thr.mid - fs.grid.node(j)) * q(j);
    v.values[j] = std::exp(fs.log_psi[j]) * I;
    for (std::size_t n = j; n-- > 0;) {
        I += 0.5 * h * (q(n) + q(n + 1));
        v.values[n] = std::exp(fs.log_psi[n]) * I;
    }
    return v;
}

ValueFunction apply_H_mc(const GridFunction& w, const Threshold& thr, const GridSpec& grid,
                         const ReducedModel& m, const MCConfig& mc, std::size_t stride) {
    const double h = grid.h;
    const std::size_t R = grid.ceil_index(thr.mid);  // absorbing node
    const std::size_t size = std::max(grid.size(), R + 1);
    ValueFunction v = GridFunction::zero(h, size);
    v.threshold = thr.mid;
    v.stderr_.assign(size, 0.0);
    if (R == 0) return v;
    const std::vector<double> k = cost_on_grid(w, m, R, h);
    const Chain chain(m, h, R);
    if (stride == 0) stride = 1;
    std::vector<std::size_t> nodes;
    for (std::size_t n = 0; n < R; n += stride) nodes.push_back(n);
    if (nodes.back() != R - 1) nodes.push_back(R - 1);
    std::vector<MCEstimate> est(nodes.size());
    parallel_for(nodes.size(), mc.workers, [&](std::size_t i) {
        MCConfig c = mc;
        c.workers = 1;
        std::uint64_t x = mc.master_seed + 0x51ed2701ULL * (nodes[i] + 1);
        c.master_seed = splitmix64(x);
        est[i] = chain.discounted_running_cost(nodes[i], R, k, m.beta(), c);
    });
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        v.values[nodes[i]] = est[i].mean;
        v.stderr_[nodes[i]] = est[i].stderr_;
    }
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
        const std::size_t a = nodes[i], b = nodes[i + 1];
        for (std::size_t n = a + 1; n < b; ++n) {
            const double t = static_cast<double>(n - a) / static_cast<double>(b - a);
            v.values[n] = (1.0 - t) * v.values[a] + t * v.values[b];
            v.stderr_[n] = std::max(v.stderr_[a], v.stderr_[b]);
        }
    }
    return v;
}

ValueFunction apply_H_chain_exact(const GridFunction& w, const Threshold& thr, const GridSpec& grid,
                                  const ReducedModel& m) {
    const double h = grid.h;
    const std::size_t R = grid.ceil_index(thr.mid);
    const std::size_t size = std::max(grid.size(), R + 1);
    ValueFunction v = GridFunction::zero(h, size);
    v.threshold = thr.mid;
    if (R == 0) return v;
    const std::vector<double> k = cost_on_grid(w, m, R, h);
    const Chain chain(m, h, R);
    const auto u = chain.exact_running_cost(R, k, m.beta());
    for (std::size_t n = 0; n < R; ++n) v.values[n] = u[n];
    return v;
}

double project_monotone_concave(ValueFunction& v, double c) {
    const double h = v.h;
    std::size_t R = 0;  // first node at or above the threshold
    while (R < v.size() && h * static_cast<double>(R) < v.threshold) ++R;
    if (R == 0) return 0.0;
    const std::vector<double> before = v.values;
    // Segment i joins node i to node i+1 (the threshold for the last one).
    std::vector<double> len(R), slope(R), wt(R);
    for (std::size_t i = 0; i < R; ++i) {
        const double x0 = h * static_cast<double>(i);
        const double x1 = i + 1 < R ? x0 + h : v.threshold;
        const double v1 = i + 1 < R ? v.values[i + 1] : 0.0;
        len[i] = std::max(x1 - x0, 1e-300);
        slope[i] = (v1 - v.values[i]) / len[i];
        wt[i] = len[i];
    }
    // Pool adjacent violators for a nonincreasing slope sequence.
    std::vector<double> bv, bw;
    std::vector<std::size_t> bn;
    for (std::size_t i = 0; i < R; ++i) {
        bv.push_back(slope[i]);
        bw.push_back(wt[i]);
        bn.push_back(1);
        while (bv.size() > 1 && bv[bv.size() - 2] < bv.back()) {
            const double w2 = bw.back() + bw[bw.size() - 2];
            const double m2 = (bv.back() * bw.back() + bv[bv.size() - 2] * bw[bw.size() - 2]) / w2;
            const std::size_t n2 = bn.back() + bn[bn.size() - 2];
            bv.pop_back();
            bw.pop_back();
            bn.pop_back();
            bv.back() = m2;
            bw.back() = w2;
            bn.back() = n2;
        }
    }
    std::size_t i = 0;
    for (std::size_t b = 0; b < bv.size(); ++b)
        for (std::size_t r = 0; r < bn[b]; ++r) slope[i++] = std::max(bv[b], 0.0);
    double val = 0.0;
    for (std::size_t j = R; j-- > 0;) {
        val -= slope[j] * len[j];
        v.values[j] = std::clamp(val, -1.0 / c, 0.0);
    }
    double d = 0.0;
    for (std::size_t j = 0; j < R; ++j) d = std::max(d, std::fabs(v.values[j] - before[j]));
    return d;
}

std::size_t n_star(const ReducedModel& m, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("n_star: eps must be > 0");
    const double x = std::log(m.c * eps) / std::log(m.rho());
    return static_cast<std::size_t>(std::max(1.0, std::ceil(x)));
}

ValueIteration value_iterate(const ReducedModel& m, double eps, const SolverOptions& opt) {
    const double h = opt.h > 0.0 ? opt.h : default_grid_step(m);
    if (!step_admissible(h, m)) {
        std::ostringstream os;
        os << "grid step h = " << h << " violates mu^2 h / (2 lambda) <= 1e-3";
        throw std::invalid_argument(os.str());
    }
    const double rho = m.rho();
    const double root_tol = opt.root_tol > 0.0 ? opt.root_tol : h / 4.0;
    ValueIteration out;
    out.n_star = n_star(m, eps);
    const std::size_t n_max = opt.max_iterations > 0 ? opt.max_iterations : out.n_star;

    const double z0 = opt.initial_z_max > 0.0 ? opt.initial_z_max : 2.0 * (m.lambda + m.lambda0) / m.c;
    out.fs = compute_fundamentals(make_grid(z0, h, m), m, opt.fundamentals, opt.mc);
    {
        const GridFunction low = GridFunction::constant(-1.0 / m.c, h, out.fs.size());
        const Threshold tr = find_threshold(low, out.fs, m, opt.mc, root_tol);
        if (out.fs.grid.z_max() < 2.0 * tr.hi) out.fs = extend_grid(out.fs, 2.0 * tr.hi, m, opt.mc);
    }
    if (out.fs.dispersion_warning) {
        std::ostringstream os;
        os << "Wronskian dispersion " << out.fs.dispersion << " exceeds 0.2";
        out.diagnostics.push_back(os.str());
    }

    ValueFunction v = GridFunction::zero(h, out.fs.size());
    double last_diff = 0.0;
    for (std::size_t n = 1; n <= n_max; ++n) {
        IterationRecord rec;
        rec.n = n;
        rec.bracket_lo = phi_ell(v, m, root_tol);
        rec.bracket_hi = phi_r(v, out.fs, m, opt.mc, root_tol).mid;
        const Threshold thr = find_threshold(v, out.fs, m, opt.mc, root_tol);
        ValueFunction next;
        if (opt.backend == HBackend::Quadrature) {
            next = apply_H_quadrature(v, thr, out.fs, m);
        } else {
            MCConfig c = opt.h_mc;
            std::uint64_t x = c.master_seed + n;
            c.master_seed = splitmix64(x);
            next = apply_H_mc(v, thr, out.fs.grid, m, c, opt.mc_node_stride);
            rec.projection = project_monotone_concave(next, m.c);
            for (std::size_t j = 0; j < next.stderr_.size(); ++j)
                rec.max_stderr = std::max(rec.max_stderr, next.stderr_[j]);
            if (rec.projection > 3.0 * rec.max_stderr + 1e-12) {
                std::ostringstream os;
                os << "iteration " << n << ": projection distance " << rec.projection
                   << " exceeds 3 stderr (" << rec.max_stderr << ")";
                out.diagnostics.push_back(os.str());
            }
        }
        for (double& x : next.values) x = std::clamp(x, -1.0 / m.c, 0.0);
        const std::size_t nodes = std::max(next.size(), v.size());
        double worst = 0.0;
        for (std::size_t j = 0; j < nodes; ++j) {
            const double z = h * static_cast<double>(j);
            const double tol = 3.0 * std::hypot(j < next.size() ? next.node_stderr(j) : 0.0,
                                                j < v.size() ? v.node_stderr(j) : 0.0);
            worst = std::max(worst, next(z) - v(z) - tol);
        }
        if (worst > 1e-9) {
            std::ostringstream os;
            os << "iteration " << n << ": monotonicity violated by " << worst << " (raise the MC budget)";
            out.diagnostics.push_back(os.str());
        }
        rec.phi = thr.mid;
        rec.phi_lo = thr.lo;
        rec.phi_hi = thr.hi;
        rec.sup_diff = sup_abs_diff(next, v, nodes);
        rec.bound = std::pow(rho, static_cast<double>(n)) / m.c;
        last_diff = rec.sup_diff;
        out.trace.push_back(rec);
        out.threshold = thr;
        v = std::move(next);
        if (opt.keep_iterates) out.iterates.push_back(v);
        out.iterations = n;
        if (opt.early_exit && n >= 2 && last_diff * rho / (1.0 - rho) <= eps) {
            out.early_exit = n < n_max;
            break;
        }
    }
    out.v = std::move(v);
    out.cert_apriori = std::pow(rho, static_cast<double>(out.iterations)) / m.c;
    out.cert_posteriori = last_diff * rho / (1.0 - rho);
    out.certificate = std::max(out.cert_apriori, out.cert_posteriori);
    return out;
}

double value_at(const ValueFunction& v, double phi) { return v(phi); }

double risk_at(const ValueFunction& v, double pi, const ReducedModel& m) {
    const double V = std::clamp(value_at(v, odds_from_prior(pi)), -1.0 / m.c, 0.0);
    return bayes_risk_from_value(pi, V, m.c);
}

Solution solve(const ReducedModel& m, double eps, const SolverOptions& opt, std::vector<double> pi_grid) {
    Solution s;
    s.vi = value_iterate(m, eps, opt);
    s.phi_inf = s.vi.threshold.mid;
    if (pi_grid.empty())
        for (int i = 0; i < 100; ++i) pi_grid.push_back(i / 100.0);
    s.pi_grid = std::move(pi_grid);
    for (double p : s.pi_grid) s.risk.push_back(risk_at(s.vi.v, p, m));
    return s;
}

}  // namespace qdetect
