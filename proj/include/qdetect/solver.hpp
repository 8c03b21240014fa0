#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "qdetect/chain.hpp"
#include "qdetect/fundamental.hpp"
#include "qdetect/marks.hpp"
#include "qdetect/model.hpp"

namespace qdetect {

using ValueFunction = GridFunction;

/// Numerical failure the caller can act on (exit code 3 in the CLI).
class NumericalDiagnostic : public std::runtime_error {
public:
    NumericalDiagnostic(const std::string& what, std::vector<double> trace = {})
        : std::runtime_error(what), trace(std::move(trace)) {}
    std::vector<double> trace;
};

enum class HBackend { Quadrature, MonteCarlo };

struct Threshold {
    double lo = 0.0;
    double hi = 0.0;
    double mid = 0.0;
    // Q_n = e^{log S' - log psi} * int_0^{z_n} 2 psi k / (mu^2 u^2 S') du, same sign as G.
    std::vector<double> trace;
};

/// Root of phi -> g(phi) + lambda0 (K w)(phi) by bisection.
double phi_ell(const GridFunction& w, const ReducedModel& m, double tol);

/// Zero of G(r) = int_0^r z^{2(a/mu^2-1)} e^{-2 lambda/(mu^2 z)} psi(z) (g + lambda0 K w)(z) dz.
/// Extends fs (doubling z_max) while no sign change is found.
Threshold find_threshold(const GridFunction& w, FundamentalSolutions& fs, const ReducedModel& m,
                         const MCConfig& mc = {}, double root_tol = 0.0);

/// Upper bracket phi_r[w]: threshold of the constant -sup|w|.
Threshold phi_r(const GridFunction& w, FundamentalSolutions& fs, const ReducedModel& m,
                const MCConfig& mc = {}, double root_tol = 0.0);

/// Green-function evaluation of H w on the grid of fs; zero at and above thr.mid.
ValueFunction apply_H_quadrature(const GridFunction& w, const Threshold& thr,
                                 const FundamentalSolutions& fs, const ReducedModel& m);

/// Chain estimate of H w: discounted running cost of k = g + lambda0 K w until the
/// first node >= thr.mid. Evaluates every `stride`-th node below the threshold
/// (plus the last one) and interpolates linearly in between.
ValueFunction apply_H_mc(const GridFunction& w, const Threshold& thr, const GridSpec& grid,
                         const ReducedModel& m, const MCConfig& mc, std::size_t stride = 1);

/// Same expectation as apply_H_mc, solved exactly on the chain.
ValueFunction apply_H_chain_exact(const GridFunction& w, const Threshold& thr, const GridSpec& grid,
                                  const ReducedModel& m);

/// Projection onto nondecreasing, concave functions in [-1/c, 0] vanishing at the
/// threshold. Returns the largest change of any node value.
double project_monotone_concave(ValueFunction& v, double c);

/// ceil(log(c eps) / log(lambda0/(lambda+lambda0))), at least 1.
std::size_t n_star(const ReducedModel& m, double eps);

struct SolverOptions {
    double h = 0.0;  // 0: default_grid_step
    FundamentalMethod fundamentals = FundamentalMethod::ChainExact;
    HBackend backend = HBackend::Quadrature;
    MCConfig mc;                   // fundamentals (MonteCarlo method)
    MCConfig h_mc;                 // H backend MonteCarlo
    std::size_t mc_node_stride = 1;
    bool early_exit = true;
    std::size_t max_iterations = 0;  // 0: n*
    double initial_z_max = 0.0;      // 0: 2 (lambda + lambda0)/c
    double root_tol = 0.0;           // 0: h/4
    bool keep_iterates = false;
};

struct IterationRecord {
    std::size_t n = 0;
    double phi = 0.0;
    double phi_lo = 0.0;
    double phi_hi = 0.0;
    double sup_diff = 0.0;  // ||v_n - v_{n-1}||
    double bound = 0.0;     // (1/c) rho^n
    double max_stderr = 0.0;
    double projection = 0.0;
    double bracket_lo = 0.0;  // phi_ell[v_{n-1}]
    double bracket_hi = 0.0;  // phi_r[v_{n-1}]
};

struct ValueIteration {
    ValueFunction v;
    Threshold threshold;
    std::vector<IterationRecord> trace;
    std::vector<ValueFunction> iterates;  // v_1..v_n when keep_iterates
    FundamentalSolutions fs;
    std::size_t n_star = 0;
    std::size_t iterations = 0;
    bool early_exit = false;
    double cert_apriori = 0.0;
    double cert_posteriori = 0.0;
    double certificate = 0.0;  // max of the two, value-function units
    std::vector<std::string> diagnostics;
};

ValueIteration value_iterate(const ReducedModel& m, double eps, const SolverOptions& opt = {});

struct Solution {
    ValueIteration vi;
    double phi_inf = 0.0;
    std::vector<double> pi_grid;
    std::vector<double> risk;
};

/// V at odds phi: linear interpolation, last node value beyond the grid.
double value_at(const ValueFunction& v, double phi);
/// U(pi) = 1 - pi + c (1 - pi) V(pi/(1-pi)).
double risk_at(const ValueFunction& v, double pi, const ReducedModel& m);

Solution solve(const ReducedModel& m, double eps, const SolverOptions& opt = {},
               std::vector<double> pi_grid = {});

}  // namespace qdetect
