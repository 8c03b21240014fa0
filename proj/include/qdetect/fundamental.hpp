#pragma once

#include <cstddef>
#include <iosfwd>
#include <utility>
#include <vector>

#include "qdetect/chain.hpp"
#include "qdetect/model.hpp"

namespace qdetect {

enum class FundamentalMethod {
    ChainExact,  // first-step analysis of the chain's edge transforms
    MonteCarlo   // hitting_laplace estimate per edge
};

// Per-node values are stored as logs: eta grows like exp(2 lambda/(mu^2 y))
// near 0 and overflows doubles for small h.
struct FundamentalColumn {
    std::vector<double> log_value;
    std::vector<double> rel_err;
};

struct FundamentalSolutions {
    GridSpec grid;
    FundamentalMethod method = FundamentalMethod::ChainExact;
    std::vector<double> log_psi;  // log psi, psi(z_max) = 1 on the original grid
    std::vector<double> log_eta;  // log eta, eta(z_max) = 1 on the original grid
    std::vector<double> psi_rel_err;
    std::vector<double> eta_rel_err;
    std::vector<double> log_s_prime;  // +inf at node 0
    double b_ref = 0.0;
    double dispersion = 0.0;
    bool dispersion_warning = false;

    std::size_t size() const { return log_psi.size(); }
    double psi(std::size_t n) const;
    double eta(std::size_t n) const;
    double s_prime(std::size_t n) const;
};

/// S'(y) = exp(2 lambda/(mu^2 y)) y^(-2a/mu^2); throws for y <= 0.
double scale_density(double y, const ReducedModel& m);
double log_scale_density(double y, const ReducedModel& m);

FundamentalColumn compute_psi(const GridSpec& grid, const ReducedModel& m, const MCConfig& mc);
FundamentalColumn compute_eta(const GridSpec& grid, const ReducedModel& m, const MCConfig& mc);
FundamentalColumn compute_psi_exact(const GridSpec& grid, const ReducedModel& m);
FundamentalColumn compute_eta_exact(const GridSpec& grid, const ReducedModel& m);

FundamentalSolutions compute_fundamentals(const GridSpec& grid, const ReducedModel& m,
                                          FundamentalMethod method, const MCConfig& mc = {});

/// Adds nodes up to new_z_max; existing nodes keep their values.
FundamentalSolutions extend_grid(const FundamentalSolutions& fs, double new_z_max,
                                 const ReducedModel& m, const MCConfig& mc = {});

/// (median, IQR/median) of (psi' eta - psi eta')/S' over nodes 2..N-2.
std::pair<double, double> wronskian_ref(const FundamentalSolutions& fs);
/// Per-node (psi' eta - psi eta')/S' on nodes 2..N-2 (other entries NaN).
std::vector<double> wronskian_ratio(const FundamentalSolutions& fs);

/// Sets b_ref, dispersion and the warning flag (dispersion > 0.2).
void update_wronskian(FundamentalSolutions& fs);

/// Columns: node, psi, eta, s_prime, rel_err (psi and eta errors combined).
void write_fundamentals_csv(const FundamentalSolutions& fs, std::ostream& os);

}  // namespace qdetect
