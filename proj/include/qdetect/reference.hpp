#pragma once

#include <utility>

#include "qdetect/model.hpp"

namespace qdetect {

struct AsymptoticPair {
    double phi_c = 0.0;  // threshold expansion (odds)
    double f_c = 0.0;    // risk expansion, -log(c)/phi_c
};

/// Baron-Tartakovsky first-order expansions.
AsymptoticPair bt_expansion(double c, const ReducedModel& m);

// Wiener-only closed forms at lambda = mu = 1: psi_X = 1 + phi,
// eta_X = (1 + phi) int_phi^inf e^{2/w} / (w^2 (1+w)^2) dw.
double wiener_threshold(double c);
double wiener_psi(double phi);
/// eta_X(phi) e^{-2/phi}; finite as phi -> 0.
double wiener_eta_scaled(double phi);
double wiener_value(double phi, double c);
double wiener_risk(double pi, double c);

/// (E0[int e^{-(lambda+lambda0)t} Phi_t dt], E0[int e^{-(lambda+lambda0)t} Y_t dt]).
std::pair<double, double> remark32_oracles(const ReducedModel& m, double phi);

/// E0[Y_t] = phi e^{at} + lambda (e^{at} - 1)/a for the between-jump diffusion.
double mean_Y(const ReducedModel& m, double phi, double t);

}  // namespace qdetect
