#include "qdetect/reference.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <stdexcept>

namespace qdetect {

namespace {

using boost::math::quadrature::gauss_kronrod;

template <class F>
double integrate(F f, double a, double b) {
    if (!(b > a)) return 0.0;
    return gauss_kronrod<double, 61>::integrate(f, a, b, 20, 1e-13);
}

double wiener_G(double r, double c) {
    return integrate([c](double w) { return w <= 0.0 ? 0.0 : (w - 1.0 / c) * (1.0 + w) * std::exp(-2.0 / w); },
                     0.0, r);
}

}  // namespace

AsymptoticPair bt_expansion(double c, const ReducedModel& m) {
    if (!(c > 0.0)) throw std::invalid_argument("bt_expansion: c must be > 0");
    AsymptoticPair p;
    p.phi_c = (0.5 * m.mu * m.mu + m.lambda0 + m.lambda1 * (std::log(m.lambda1 / m.lambda0) - 1.0) + m.lambda) / c;
    p.f_c = -std::log(c) / p.phi_c;
    return p;
}

double wiener_threshold(double c) {
    if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("wiener_threshold: c must lie in (0, inf)");
    double lo = 1.0 / c, hi = 2.0 / c + 1.0;
    while (wiener_G(hi, c) < 0.0) {
        lo = hi;
        hi *= 2.0;
    }
    const auto tol = [](double a, double b) { return std::fabs(b - a) <= 1e-13 * std::max(1.0, std::fabs(a)); };
    const auto r = boost::math::tools::bisect([c](double x) { return wiener_G(x, c); }, lo, hi, tol);
    return 0.5 * (r.first + r.second);
}

double wiener_psi(double phi) { return 1.0 + phi; }

double wiener_eta_scaled(double phi) {
    if (!(phi > 0.0)) return 0.5;  // limit as phi -> 0
    // With s = 1/u and t = 1/phi - s:
    // eta_X e^{-2/phi} = (1+phi) int_0^{1/phi} e^{-2t} (1/phi - t)^2 / (1 + 1/phi - t)^2 dt.
    const double S = 1.0 / phi;
    const double upper = std::min(S, 40.0);
    const double J = integrate(
        [S](double t) {
            const double s = S - t;
            return std::exp(-2.0 * t) * s * s / ((1.0 + s) * (1.0 + s));
        },
        0.0, upper);
    return (1.0 + phi) * J;
}

double wiener_value(double phi, double c) {
    const double r = wiener_threshold(c);
    if (phi >= r) return 0.0;
    // psi_X(phi) int_phi^r 2(w - 1/c) eta_X(w) e^{-2/w} dw
    const double first = wiener_psi(phi) *
                         integrate([c](double w) { return 2.0 * (w - 1.0 / c) * wiener_eta_scaled(w); }, phi, r);
    // eta_X(phi) int_0^phi 2(w - 1/c) psi_X(w) e^{-2/w} dw, exponents combined
    double second = 0.0;
    if (phi > 0.0) {
        const double inner = integrate(
            [c, phi](double w) {
                return w <= 0.0 ? 0.0 : 2.0 * (w - 1.0 / c) * (1.0 + w) * std::exp(2.0 / phi - 2.0 / w);
            },
            0.0, phi);
        second = wiener_eta_scaled(phi) * inner;
    }
    return first + second;
}

double wiener_risk(double pi, double c) {
    if (!(pi >= 0.0 && pi < 1.0)) throw std::invalid_argument("wiener_risk: pi must lie in [0, 1)");
    return 1.0 - pi + c * (1.0 - pi) * wiener_value(pi / (1.0 - pi), c);
}

std::pair<double, double> remark32_oracles(const ReducedModel& m, double phi) {
    const double beta = m.lambda + m.lambda0;
    const double first = (phi + 1.0) / m.lambda0 - 1.0 / beta;
    const double second = phi / m.lambda1 + m.lambda / (m.lambda1 * beta);
    return {first, second};
}

double mean_Y(const ReducedModel& m, double phi, double t) {
    const double a = m.a;
    const double growth = a == 0.0 ? t : std::expm1(a * t) / a;
    return phi * std::exp(a * t) + m.lambda * growth;
}

}  // namespace qdetect
