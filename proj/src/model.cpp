#include "qdetect/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace qdetect {

namespace {

void check_positive(double x, const char* name) {
    if (!(x > 0.0) || !std::isfinite(x)) {
        std::ostringstream os;
        os << name << " must be a finite rate > 0 (got " << x << ")";
        throw ModelError(os.str());
    }
}

void check_prior(double pi) {
    if (!(pi >= 0.0 && pi < 1.0)) {
        std::ostringstream os;
        os << "prior_mass must lie in [0, 1) (got " << pi << ")";
        throw ModelError(os.str());
    }
}

}  // namespace

ReducedModel make_model(double lambda, double lambda0, double lambda1, double mu, double c,
                        double pi, MarkModel marks) {
    check_positive(lambda, "disorder_rate");
    check_positive(lambda0, "lambda0");
    check_positive(lambda1, "lambda1");
    check_positive(c, "delay_cost");
    check_prior(pi);
    if (mu == 0.0 || !std::isfinite(mu)) throw ModelError("canonical model requires mu != 0");
    marks.validate();
    ReducedModel m;
    m.mu = std::fabs(mu);
    m.lambda = lambda;
    m.lambda0 = lambda0;
    m.lambda1 = lambda1;
    m.a = lambda - lambda1 + lambda0;
    m.c = c;
    m.pi = pi;
    m.marks = std::move(marks);
    return m;
}

ReducedModel reduce_sources(const SourceSpec& spec) {
    double norm2 = 0.0;
    for (double d : spec.wiener_drifts) {
        if (!std::isfinite(d)) throw ModelError("wiener drift must be finite");
        norm2 += d * d;
    }
    if (norm2 == 0.0) throw ModelError("canonical model requires mu != 0 (all Wiener drifts are zero)");
    if (spec.poisson_sources.empty()) throw ModelError("at least one Poisson source is required");

    double l0 = 0.0, l1 = 0.0;
    for (const auto& s : spec.poisson_sources) {
        check_positive(s.rate_pre, "poisson rate_pre");
        check_positive(s.rate_post, "poisson rate_post");
        s.marks.validate();
        l0 += s.rate_pre;
        l1 += s.rate_post;
    }

    MarkModel mix;
    if (spec.poisson_sources.size() == 1) {
        mix = spec.poisson_sources.front().marks;
    } else {
        // Atoms keyed by label; a Simple source contributes one anonymous atom
        // of its own so that sources stay distinguishable.
        std::vector<std::string> order;
        std::map<std::string, std::pair<double, double>> acc;
        for (std::size_t k = 0; k < spec.poisson_sources.size(); ++k) {
            const auto& s = spec.poisson_sources[k];
            const double w0 = s.rate_pre / l0, w1 = s.rate_post / l1;
            auto add = [&](const std::string& label, double p0, double p1) {
                auto it = acc.find(label);
                if (it == acc.end()) {
                    order.push_back(label);
                    acc.emplace(label, std::make_pair(w0 * p0, w1 * p1));
                } else {
                    it->second.first += w0 * p0;
                    it->second.second += w1 * p1;
                }
            };
            if (s.marks.kind == MarkModel::Kind::Simple) {
                add("source" + std::to_string(k), 1.0, 1.0);
            } else {
                for (std::size_t i = 0; i < s.marks.atoms.size(); ++i)
                    add(s.marks.atoms[i], s.marks.nu0[i], s.marks.nu1[i]);
            }
        }
        mix.kind = MarkModel::Kind::Discrete;
        for (const auto& label : order) {
            mix.atoms.push_back(label);
            mix.nu0.push_back(acc[label].first);
            mix.nu1.push_back(acc[label].second);
        }
        // Renormalize rounding drift; validate() checks the 1e-12 tolerance.
        double s0 = 0.0, s1 = 0.0;
        for (std::size_t i = 0; i < mix.atoms.size(); ++i) {
            s0 += mix.nu0[i];
            s1 += mix.nu1[i];
        }
        for (std::size_t i = 0; i < mix.atoms.size(); ++i) {
            mix.nu0[i] /= s0;
            mix.nu1[i] /= s1;
        }
    }
    return make_model(spec.disorder_rate, l0, l1, std::sqrt(norm2), spec.delay_cost,
                      spec.prior_mass, std::move(mix));
}

double running_cost_g(double phi, const ReducedModel& m) { return phi - m.lambda / m.c; }

double bayes_risk_from_value(double pi, double value_at_odds, double c) {
    if (!(pi >= 0.0 && pi < 1.0)) throw ModelError("bayes_risk_from_value: pi must lie in [0, 1)");
    if (!(value_at_odds <= 0.0 && value_at_odds >= -1.0 / c))
        throw ModelError("bayes_risk_from_value: value must lie in [-1/c, 0]");
    return (1.0 - pi) * std::max(0.0, 1.0 + c * value_at_odds);
}

}  // namespace qdetect
