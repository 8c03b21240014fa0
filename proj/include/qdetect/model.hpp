#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "qdetect/marks.hpp"

namespace qdetect {

class ModelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct PoissonSource {
    double rate_pre = 1.0;   // lambda0_i
    double rate_post = 1.0;  // lambda1_i
    MarkModel marks;
};

struct SourceSpec {
    std::vector<double> wiener_drifts;
    std::vector<PoissonSource> poisson_sources;
    double disorder_rate = 1.0;  // lambda
    double prior_mass = 0.0;     // pi in [0, 1)
    double delay_cost = 1.0;     // c
};

// Canonical one-Wiener, one-Poisson problem.
struct ReducedModel {
    double mu = 1.0;
    double lambda0 = 1.0;
    double lambda1 = 1.0;
    double lambda = 1.0;
    double a = 1.0;  // lambda - lambda1 + lambda0
    double c = 1.0;
    double pi = 0.0;
    MarkModel marks;

    /// lambda0 / (lambda + lambda0), the contraction factor of the jump operator.
    double rho() const { return lambda0 / (lambda + lambda0); }
    /// Discount rate of the between-jump problem.
    double beta() const { return lambda + lambda0; }
    JumpFactorTable jumps() const { return jump_factors(marks, lambda0, lambda1); }
};

ReducedModel make_model(double lambda, double lambda0, double lambda1, double mu, double c,
                        double pi = 0.0, MarkModel marks = MarkModel::simple());

ReducedModel reduce_sources(const SourceSpec& spec);

/// g(phi) = phi - lambda/c
double running_cost_g(double phi, const ReducedModel& m);

/// 1 - pi + c (1 - pi) V, with V in [-1/c, 0].
double bayes_risk_from_value(double pi, double value_at_odds, double c);

inline double odds_from_prior(double pi) { return pi / (1.0 - pi); }

}  // namespace qdetect
