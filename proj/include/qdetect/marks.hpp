#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace qdetect {

// Finite-support mark distributions. Simple means a markless point process.
struct MarkModel {
    enum class Kind { Simple, Discrete };

    Kind kind = Kind::Simple;
    std::vector<std::string> atoms;
    std::vector<double> nu0;
    std::vector<double> nu1;

    static MarkModel simple();
    static MarkModel discrete(std::vector<std::string> atoms, std::vector<double> nu0,
                              std::vector<double> nu1);

    std::size_t size() const { return kind == Kind::Simple ? 1 : atoms.size(); }

    // Throws std::invalid_argument on weights that do not sum to 1 or on
    // an atom with nu1 > 0 and nu0 = 0.
    void validate() const;
};

/// f = dnu1/dnu0 at atom i. Simple marks return 1.
double likelihood_ratio(const MarkModel& m, std::size_t i);

/// Jump factors r_i = (lambda1/lambda0) f(z_i) with pre-change weights nu0_i.
struct JumpFactorTable {
    std::vector<double> factors;
    std::vector<double> weights;
};

JumpFactorTable jump_factors(const MarkModel& m, double lambda0, double lambda1);

// Function on the uniform grid {n*h}. Zero at and above `threshold`,
// linear interpolation between nodes, last node value past the grid end.
struct GridFunction {
    double h = 0.0;
    std::vector<double> values;
    double threshold = 0.0;
    std::vector<double> stderr_;  // per node, empty when exact

    static GridFunction constant(double value, double h, std::size_t n_nodes);
    static GridFunction zero(double h, std::size_t n_nodes);

    std::size_t size() const { return values.size(); }
    double node(std::size_t n) const { return static_cast<double>(n) * h; }
    double operator()(double x) const;
    double sup_abs() const;
    double node_stderr(std::size_t n) const { return stderr_.empty() ? 0.0 : stderr_[n]; }
};

/// (K w)(phi) = sum_i nu0_i w(r_i phi).
double apply_K(const GridFunction& w, double phi, const JumpFactorTable& jt);

/// K w evaluated at every node of w's grid (first n_nodes nodes).
std::vector<double> apply_K_grid(const GridFunction& w, const JumpFactorTable& jt,
                                 std::size_t n_nodes);

}  // namespace qdetect
