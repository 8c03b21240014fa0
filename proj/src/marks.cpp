#include "qdetect/marks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace qdetect {

MarkModel MarkModel::simple() { return MarkModel{}; }

MarkModel MarkModel::discrete(std::vector<std::string> atoms, std::vector<double> nu0,
                              std::vector<double> nu1) {
    MarkModel m;
    m.kind = Kind::Discrete;
    m.atoms = std::move(atoms);
    m.nu0 = std::move(nu0);
    m.nu1 = std::move(nu1);
    m.validate();
    return m;
}

void MarkModel::validate() const {
    if (kind == Kind::Simple) return;
    if (atoms.empty() || nu0.size() != atoms.size() || nu1.size() != atoms.size())
        throw std::invalid_argument("marks: atoms, nu0 and nu1 must have the same nonzero length");
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        if (!(nu0[i] >= 0.0) || !(nu1[i] >= 0.0))
            throw std::invalid_argument("marks: negative weight at atom '" + atoms[i] + "'");
        if (nu1[i] > 0.0 && nu0[i] == 0.0)
            throw std::invalid_argument("marks: absolute continuity violated at atom '" +
                                        atoms[i] + "' (nu1 > 0 where nu0 = 0)");
    }
    const double s0 = std::accumulate(nu0.begin(), nu0.end(), 0.0);
    const double s1 = std::accumulate(nu1.begin(), nu1.end(), 0.0);
    if (std::fabs(s0 - 1.0) > 1e-12 || std::fabs(s1 - 1.0) > 1e-12)
        throw std::invalid_argument("marks: nu0 and nu1 must each sum to 1");
}

double likelihood_ratio(const MarkModel& m, std::size_t i) {
    if (m.kind == MarkModel::Kind::Simple) return 1.0;
    if (i >= m.atoms.size()) throw std::out_of_range("likelihood_ratio: atom index");
    if (m.nu0[i] == 0.0) {
        if (m.nu1[i] > 0.0)
            throw std::invalid_argument("likelihood_ratio: absolute continuity violated at atom '" +
                                        m.atoms[i] + "'");
        return 0.0;
    }
    return m.nu1[i] / m.nu0[i];
}

JumpFactorTable jump_factors(const MarkModel& m, double lambda0, double lambda1) {
    JumpFactorTable t;
    const double base = lambda1 / lambda0;
    if (m.kind == MarkModel::Kind::Simple) {
        t.factors = {base};
        t.weights = {1.0};
        return t;
    }
    for (std::size_t i = 0; i < m.atoms.size(); ++i) {
        if (m.nu0[i] == 0.0) continue;  // never observed before the change
        t.factors.push_back(base * likelihood_ratio(m, i));
        t.weights.push_back(m.nu0[i]);
    }
    return t;
}

GridFunction GridFunction::constant(double value, double h, std::size_t n_nodes) {
    GridFunction w;
    w.h = h;
    w.values.assign(n_nodes, value);
    w.threshold = std::numeric_limits<double>::infinity();
    return w;
}

GridFunction GridFunction::zero(double h, std::size_t n_nodes) {
    GridFunction w;
    w.h = h;
    w.values.assign(n_nodes, 0.0);
    w.threshold = 0.0;
    return w;
}

double GridFunction::operator()(double x) const {
    if (x >= threshold || values.empty()) return 0.0;
    if (x <= 0.0) return values.front();
    const double s = x / h;
    const auto last = values.size() - 1;
    if (s >= static_cast<double>(last)) return values.back();
    const auto j = static_cast<std::size_t>(s);
    const double x0 = static_cast<double>(j) * h;
    const double v0 = values[j];
    double x1 = static_cast<double>(j + 1) * h;
    double v1 = values[j + 1];
    if (x1 >= threshold) {
        x1 = threshold;
        v1 = 0.0;
    }
    if (x1 <= x0) return v0;
    return v0 + (v1 - v0) * (x - x0) / (x1 - x0);
}

double GridFunction::sup_abs() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::fabs(v));
    return m;
}

double apply_K(const GridFunction& w, double phi, const JumpFactorTable& jt) {
    double s = 0.0;
    for (std::size_t i = 0; i < jt.factors.size(); ++i) s += jt.weights[i] * w(jt.factors[i] * phi);
    return s;
}

std::vector<double> apply_K_grid(const GridFunction& w, const JumpFactorTable& jt,
                                 std::size_t n_nodes) {
    std::vector<double> out(n_nodes);
    for (std::size_t n = 0; n < n_nodes; ++n)
        out[n] = apply_K(w, static_cast<double>(n) * w.h, jt);
    return out;
}

}  // namespace qdetect
