// Acceptance suite. Usage: acceptance [criterion ...]; no arguments runs all nine.
// Prints one PASS/FAIL line per criterion; the exit code is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "qdetect/chain.hpp"
#include "qdetect/fundamental.hpp"
#include "qdetect/reference.hpp"
#include "qdetect/simulate.hpp"
#include "qdetect/solver.hpp"

using namespace qdetect;

namespace {

// Pinned tolerances and budgets.
constexpr double kC1Sigmas = 3.0;
constexpr std::size_t kC1Paths = 100000;
constexpr double kC1FarBoundary = 1000.0;
constexpr std::uint64_t kC1StepBudget = 50000;
constexpr double kC1SecondsPerPoint = 60.0;

constexpr double kC2MaxRelErr = 0.02;
constexpr double kC2ZMax = 2.0;
constexpr std::size_t kC2Paths = 4000;
constexpr double kC2Seconds = 600.0;

constexpr double kC3GridSteps = 2.0;
constexpr double kC3RiskRelErr = 0.05;
constexpr double kC3Seconds = 1800.0;

constexpr double kC4Stderrs = 6.0;
constexpr double kC4MonotoneSlack = 1e-12;

constexpr double kC5RelTol = 0.05;
constexpr double kC5Stderrs = 3.0;
constexpr std::size_t kC5Paths = 1000;
constexpr std::size_t kC5Stride = 50;

constexpr std::size_t kC6Paths = 100000;
constexpr double kC6Dt = 1e-3;
constexpr double kC6Stderrs = 3.0;
constexpr double kC6LocalStderrs = 2.0;

constexpr std::size_t kC7Paths = 100000;
constexpr double kC7Stderrs = 3.0;

constexpr double kC8RatioLo = 0.3;
constexpr double kC8RatioHi = 3.0;

constexpr double kC9Dispersion = 0.2;
constexpr double kC9SmoothFit = 0.05;  // |slope at the threshold| / max |slope|

constexpr double kEps = 1e-3;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

ReducedModel fig2h() { return make_model(1, 6, 1, 1, 1); }

const Solution& fig2h_solution() {
    static const Solution s = [] {
        SolverOptions o;
        o.early_exit = false;
        o.keep_iterates = true;
        return solve(fig2h(), kEps, o);
    }();
    return s;
}

struct Result {
    bool pass = true;
    std::string summary;
};

Result c1_chain_running_cost() {
    const ReducedModel m = fig2h();
    const double h = default_grid_step(m);
    const std::size_t top = static_cast<std::size_t>(std::llround(kC1FarBoundary / h));
    const Chain chain(m, h, top);
    std::vector<double> k(top);
    for (std::size_t n = 0; n < top; ++n) k[n] = chain.h() * static_cast<double>(n);
    const std::vector<double> exact = chain.exact_running_cost(top, k, m.beta());
    MCConfig mc;
    mc.n_paths = kC1Paths;
    mc.max_steps_per_path = kC1StepBudget;
    Result r;
    for (double phi : {0.5, 1.0, 2.0}) {
        const auto t0 = Clock::now();
        const std::size_t start = static_cast<std::size_t>(std::llround(phi / h));
        const MCEstimate e = chain.discounted_running_cost(start, top, k, m.beta(), mc);
        const double secs = seconds_since(t0);
        const double oracle = remark32_oracles(m, phi).second;
        const bool ok = std::fabs(e.mean - oracle) <= kC1Sigmas * e.stderr_ && secs < kC1SecondsPerPoint;
        std::printf("    phi=%.1f: chain MC %.6f +- %.2e (truncated %zu/%zu), exact chain %.6f, oracle %.6f, %.1f s\n",
                    phi, e.mean, e.stderr_, e.truncated, e.n_paths, exact[start], oracle, secs);
        r.pass = r.pass && ok;
    }
    r.summary = "chain running cost k(y)=y vs phi/lambda1 + lambda/(lambda1 beta), within 3 stderr, < 60 s/point";
    return r;
}

Result c2_polynomial_psi() {
    const auto t0 = Clock::now();
    const ReducedModel m = make_model(2, 1, 1, 1, 1);
    const GridSpec g = make_grid(kC2ZMax, 0.0, m);
    MCConfig mc;
    mc.n_paths = kC2Paths;
    const FundamentalColumn psi = compute_psi(g, m, mc);
    auto poly = [](double x) { return 1.0 + 1.5 * x + 0.375 * x * x; };
    double worst = 0.0, at = 0.0;
    for (std::size_t n = 0; n <= g.n_points; ++n) {
        const double z = g.node(n);
        if (z < 0.1) continue;
        const double rel = std::fabs(std::exp(psi.log_value[n]) / (poly(z) / poly(g.z_max())) - 1.0);
        if (rel > worst) {
            worst = rel;
            at = z;
        }
    }
    const double secs = seconds_since(t0);
    std::printf("    sup rel err %.4f at phi=%.3f (limit %.2f), %.1f s\n", worst, at, kC2MaxRelErr, secs);
    return {worst < kC2MaxRelErr && secs < kC2Seconds,
            "MC psi for (2,1,1,1) vs 1 + 1.5 phi + 0.375 phi^2 on [0.1, z_max], sup rel err < 2%"};
}

Result c3_wiener() {
    const auto t0 = Clock::now();
    const ReducedModel m = make_model(1, 1, 1, 1, 1);
    const Solution s = solve(m, kEps, {});
    const double ref = wiener_threshold(1.0);
    const double steps = std::fabs(s.phi_inf - ref) / s.vi.fs.grid.h;
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        const double pi = i / 10.0;
        worst = std::max(worst, std::fabs(risk_at(s.vi.v, pi, m) / wiener_risk(pi, 1.0) - 1.0));
    }
    const double secs = seconds_since(t0);
    std::printf("    phi_inf %.5f vs %.6f (%.2f grid steps), sup rel risk err %.2e, %.1f s\n", s.phi_inf, ref,
                steps, worst, secs);
    return {steps <= kC3GridSteps && worst < kC3RiskRelErr && secs < kC3Seconds,
            "Wiener-only equivalence: threshold within 2 grid steps, risk within 5%"};
}

Result c4_contraction() {
    const ReducedModel m = fig2h();
    const Solution& s = fig2h_solution();
    const ValueIteration& vi = s.vi;
    const double tol = vi.fs.grid.h / 4.0;
    bool ok = vi.iterations == vi.n_star;
    double worst_margin = -HUGE_VAL;
    // trace[n] holds ||v_{n+1} - v_n||.
    for (std::size_t n = 0; n < vi.trace.size(); ++n) {
        const double bound = std::pow(m.rho(), static_cast<double>(n)) / m.c + kC4Stderrs * vi.trace[n].max_stderr;
        worst_margin = std::max(worst_margin, vi.trace[n].sup_diff - bound);
        ok = ok && vi.trace[n].sup_diff <= bound;
    }
    double worst_rise = -HUGE_VAL;
    for (std::size_t k = 1; k < vi.iterates.size(); ++k)
        for (std::size_t j = 0; j < vi.iterates[k].size(); ++j)
            worst_rise = std::max(worst_rise, vi.iterates[k].values[j] - vi.iterates[k - 1].values[j]);
    ok = ok && worst_rise <= kC4MonotoneSlack;
    double worst_drop = 0.0;
    for (std::size_t n = 1; n < vi.trace.size(); ++n)
        worst_drop = std::max(worst_drop, vi.trace[n - 1].phi - vi.trace[n].phi);
    ok = ok && worst_drop <= tol;
    std::printf("    n* = %zu, max(diff - bound) = %.3e, max pointwise rise %.2e, max threshold drop %.2e (tol %.1e)\n",
                vi.n_star, worst_margin, worst_rise, worst_drop, tol);
    return {ok, "contraction bound, nonincreasing iterates, nondecreasing thresholds (lambda0 = 6 setting)"};
}

Result c5_cross_method() {
    const ReducedModel m = fig2h();
    const Solution& s = fig2h_solution();
    FundamentalSolutions fs = s.vi.fs;
    std::vector<GridFunction> inputs{GridFunction::zero(fs.grid.h, fs.size())};
    inputs.push_back(s.vi.iterates[0]);
    inputs.push_back(s.vi.iterates[1]);
    MCConfig mc;
    mc.n_paths = kC5Paths;
    bool ok = true;
    for (std::size_t it = 0; it < inputs.size(); ++it) {
        const auto t0 = Clock::now();
        const Threshold thr = find_threshold(inputs[it], fs, m);
        const ValueFunction q = apply_H_quadrature(inputs[it], thr, fs, m);
        mc.master_seed = 1000 + it;
        const ValueFunction e = apply_H_mc(inputs[it], thr, fs.grid, m, mc, kC5Stride);
        const std::size_t R = fs.grid.ceil_index(thr.mid);
        std::size_t checked = 0, failed = 0;
        double worst = 0.0;
        for (std::size_t n = 0; n < R; ++n) {
            if (n % kC5Stride != 0 && n != R - 1) continue;
            const double tol = std::max(kC5RelTol * std::fabs(q.values[n]), kC5Stderrs * e.node_stderr(n));
            const double diff = std::fabs(e.values[n] - q.values[n]);
            worst = std::max(worst, diff / tol);
            ++checked;
            if (diff > tol) ++failed;
        }
        ok = ok && failed == 0;
        std::printf("    iteration %zu: phi=%.5f, %zu nodes, %zu outside tolerance, max diff/tol %.3f, %.1f s\n",
                    it + 1, thr.mid, checked, failed, worst, seconds_since(t0));
    }
    return {ok, "apply_H_mc vs apply_H_quadrature per node within max(5%, 3 stderr), iterations 1-3"};
}

RiskEstimate simulate_risk(double threshold, std::size_t paths, std::uint64_t seed) {
    ScenarioConfig cfg;
    cfg.dt_sim = kC6Dt;
    cfg.n_paths = paths;
    cfg.master_seed = seed;
    return evaluate_policy(fig2h(), threshold, cfg);
}

Result c6_end_to_end() {
    const Solution& s = fig2h_solution();
    const double u0 = s.risk[0];
    const double cert = fig2h().c * s.vi.certificate;
    const RiskEstimate at = simulate_risk(s.phi_inf, kC6Paths, 61);
    const RiskEstimate half = simulate_risk(0.5 * s.phi_inf, kC6Paths, 62);
    const RiskEstimate twice = simulate_risk(2.0 * s.phi_inf, kC6Paths, 63);
    const bool close = std::fabs(at.mean - u0) <= kC6Stderrs * (at.stderr_ + cert);
    const bool local_half = half.mean >= at.mean - kC6LocalStderrs * std::hypot(half.stderr_, at.stderr_);
    const bool local_twice = twice.mean >= at.mean - kC6LocalStderrs * std::hypot(twice.stderr_, at.stderr_);
    std::printf("    U(0) = %.5f (certificate %.2e); simulated risk at phi_inf=%.5f: %.5f +- %.5f\n", u0, cert,
                s.phi_inf, at.mean, at.stderr_);
    std::printf("    risk at 0.5 phi_inf: %.5f +- %.5f, at 2 phi_inf: %.5f +- %.5f\n", half.mean, half.stderr_,
                twice.mean, twice.stderr_);
    return {close && local_half && local_twice,
            "simulated risk at phi_inf matches U(0) within 3 (stderr + certificate); local optimality"};
}

Result c7_sandwich() {
    const ReducedModel m = fig2h();
    const Solution& s = fig2h_solution();
    const double u0 = s.risk[0];
    const double cert = m.c * s.vi.certificate;
    bool ok = true;
    for (std::size_t n : {3, 10}) {
        const double phi_n = s.vi.trace[n - 1].phi;
        const RiskEstimate r = simulate_risk(phi_n, kC7Paths, 70 + n);
        const double slack = kC7Stderrs * r.stderr_ + cert;
        const double lo = u0 - slack;
        const double hi = u0 + std::pow(m.rho(), static_cast<double>(n)) / m.c + slack;
        const bool in = r.mean >= lo && r.mean <= hi;
        ok = ok && in;
        std::printf("    n=%zu: phi_n=%.5f, risk %.5f +- %.5f in [%.5f, %.5f]: %s\n", n, phi_n, r.mean, r.stderr_, lo,
                    hi, in ? "yes" : "no");
    }
    return {ok, "simulated risk of phi_3 and phi_10 inside the iterate sandwich"};
}

Result c8_asymptotics() {
    std::vector<double> phis, ratios;
    for (int i = 1; i <= 10; ++i) {
        const double c = 0.02 * i;
        const ReducedModel m = make_model(1, 6, 1, 1, c);
        SolverOptions o;
        o.early_exit = false;
        const Solution s = solve(m, kEps, o);
        const double bt = bt_expansion(c, m).phi_c;
        phis.push_back(s.phi_inf);
        ratios.push_back(s.phi_inf / bt);
        std::printf("    c=%.2f: phi_inf %.4f, bt %.4f, ratio %.4f\n", c, s.phi_inf, bt, ratios.back());
    }
    bool ok = true;
    for (std::size_t i = 1; i < phis.size(); ++i) ok = ok && phis[i] < phis[i - 1];
    for (double r : ratios) ok = ok && r > kC8RatioLo && r < kC8RatioHi;
    ok = ok && std::fabs(ratios.front() - 1.0) <= std::fabs(ratios.back() - 1.0);
    return {ok, "phi_inf(c) decreasing, ratio to the expansion in (0.3, 3), closer to 1 at c=0.02 than at 0.2"};
}

struct Tally {
    std::size_t failed = 0;
    void check(bool ok, const char* what, double l0, double mu) {
        if (ok) return;
        ++failed;
        std::printf("    violated: %s (lambda0=%g, mu=%g)\n", what, l0, mu);
    }
};

Result c9_invariants() {
    Tally t;
    for (double l0 : {1.0, 6.0})
        for (double mu : {0.5, 1.0, 1.5}) {
            const ReducedModel m = make_model(1, l0, 1, mu, 1);
            SolverOptions o;
            o.early_exit = false;
            o.keep_iterates = true;
            const Solution s = solve(m, kEps, o);
            const ValueIteration& vi = s.vi;
            const FundamentalSolutions& fs = vi.fs;
            const double h = fs.grid.h;
            const std::size_t N = fs.grid.n_points;

            // marks
            const auto jt = m.jumps();
            const ValueFunction& w1 = vi.v;
            ValueFunction w2 = w1;
            for (double& x : w2.values) x *= 0.5;
            const auto k1 = apply_K_grid(w1, jt, w1.size());
            const auto k2 = apply_K_grid(w2, jt, w2.size());
            const double inf_w = *std::min_element(w1.values.begin(), w1.values.end());
            bool mono = true, bounds = true, concave = true;
            for (std::size_t n = 0; n < k1.size(); ++n) {
                mono = mono && k1[n] <= k2[n];
                bounds = bounds && k1[n] >= inf_w - 1e-15 && k1[n] <= 0.0;
                if (n >= 1 && n + 1 < k1.size()) concave = concave && k1[n + 1] - 2 * k1[n] + k1[n - 1] <= 1e-10;
            }
            t.check(mono, "K monotone", l0, mu);
            t.check(bounds, "K bounds", l0, mu);
            t.check(concave, "K concavity", l0, mu);

            // chain
            bool norm = true, consistent = true;
            for (std::size_t n = 1; n <= N; n += 7) {
                const double y = fs.grid.node(n);
                const StepParams p = step_params(y, h, m);
                norm = norm && std::fabs(p.p_up + p.p_down - 1.0) <= 1e-15 && p.p_up >= 0 && p.p_down >= 0;
                const ConsistencyReport c = local_consistency_check(y, h, m);
                consistent = consistent && std::fabs(c.mean_defect) <= 1e-14 * std::fabs(c.mean_rhs) + 1e-18;
            }
            t.check(norm, "transition probabilities normalized", l0, mu);
            t.check(consistent, "local consistency identity", l0, mu);
            const Chain chain(m, h, N);
            MCConfig a;
            a.n_paths = 300;
            a.workers = 1;
            MCConfig b = a;
            b.workers = 2;
            bool laplace = true, repro = true;
            for (std::size_t n : {N / 10, N / 3, N / 2}) {
                const MCEstimate up = chain.hitting_laplace(n, n + 5, m.beta(), a);
                const MCEstimate up2 = chain.hitting_laplace(n, n + 5, m.beta(), b);
                const MCEstimate down = chain.hitting_laplace(n, n - 5, m.beta(), a);
                laplace = laplace && up.mean >= 0 && up.mean <= 1 && down.mean >= 0 && down.mean <= 1;
                repro = repro && up.mean == up2.mean && up.stderr_ == up2.stderr_;
            }
            t.check(laplace, "Laplace transforms in [0, 1]", l0, mu);
            t.check(repro, "chain reproducibility across worker counts", l0, mu);

            // fundamental
            bool psi_up = true, eta_down = true, positive = true;
            for (std::size_t n = 0; n + 1 < fs.size(); ++n) {
                psi_up = psi_up && fs.log_psi[n] < fs.log_psi[n + 1];
                eta_down = eta_down && fs.log_eta[n] > fs.log_eta[n + 1];
                positive = positive && std::isfinite(fs.log_psi[n]) && !std::isnan(fs.log_eta[n]);
            }
            t.check(psi_up, "psi increasing", l0, mu);
            t.check(eta_down, "eta decreasing", l0, mu);
            t.check(positive, "psi, eta positive", l0, mu);
            t.check(fs.dispersion < kC9Dispersion, "Wronskian dispersion < 0.2", l0, mu);

            // solver
            bool vb = true;
            for (const auto& v : vi.iterates)
                for (double x : v.values) vb = vb && x <= 0.0 && x >= -1.0 / m.c;
            t.check(vb, "-1/c <= v_n <= 0", l0, mu);
            const double tol = h / 4.0 + 1e-12;
            bool bracket = true;
            for (const auto& r : vi.trace) bracket = bracket && r.phi >= r.bracket_lo - tol && r.phi <= r.bracket_hi + tol;
            t.check(bracket, "bracket containment", l0, mu);
            double fit = 0.0;
            for (std::size_t k = 0; k < vi.iterates.size(); ++k) {
                const ValueFunction& v = vi.iterates[k];
                const std::size_t j = fs.grid.ceil_index(vi.trace[k].phi);
                if (j < 2) continue;
                double steepest = 0.0;
                for (std::size_t n = 0; n + 1 < j; ++n)
                    steepest = std::max(steepest, std::fabs(v.values[n + 1] - v.values[n]) / h);
                const double last = std::fabs(v.values[j - 1] - v.values[j - 2]) / h;
                fit = std::max(fit, last / steepest);
            }
            t.check(fit <= kC9SmoothFit, "smooth fit at the threshold", l0, mu);
            std::printf("    lambda0=%g mu=%g: h=%.3g, nodes %zu, dispersion %.4f, smooth-fit ratio %.4f, phi_inf %.5f\n",
                        l0, mu, h, fs.size(), fs.dispersion, fit, s.phi_inf);
        }
    return {t.failed == 0, "marks, chain, fundamental and solver invariants on the lambda0 x mu grid"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Result()>> criteria{
        c1_chain_running_cost, c2_polynomial_psi, c3_wiener,     c4_contraction, c5_cross_method,
        c6_end_to_end,         c7_sandwich,       c8_asymptotics, c9_invariants};
    std::vector<int> which;
    for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
    if (which.empty())
        for (int i = 1; i <= 9; ++i) which.push_back(i);
    int failures = 0;
    for (int c : which) {
        if (c < 1 || c > 9) {
            std::fprintf(stderr, "unknown criterion %d\n", c);
            return 64;
        }
        const auto t0 = Clock::now();
        std::printf("criterion %d\n", c);
        std::fflush(stdout);
        const Result r = criteria[c - 1]();
        std::printf("%s C%d %s [%.1f s]\n", r.pass ? "PASS" : "FAIL", c, r.summary.c_str(), seconds_since(t0));
        std::fflush(stdout);
        if (!r.pass) ++failures;
    }
    return failures;
}
