#include "qdetect/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "qdetect/reference.hpp"

namespace qdetect {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError(where + "." + it.key() + ": unknown key");
}

double get_number(const json& obj, const std::string& key, const std::string& where, double def) {
    if (!obj.contains(key) || obj.at(key).is_null()) return def;
    const json& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
    return v.get<double>();
}

std::uint64_t get_uint(const json& obj, const std::string& key, const std::string& where, std::uint64_t def) {
    if (!obj.contains(key) || obj.at(key).is_null()) return def;
    const json& v = obj.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
        throw ConfigError(where + "." + key + ": expected a nonnegative integer");
    return v.get<std::uint64_t>();
}

bool get_bool(const json& obj, const std::string& key, const std::string& where, bool def) {
    if (!obj.contains(key)) return def;
    if (!obj.at(key).is_boolean()) throw ConfigError(where + "." + key + ": expected true or false");
    return obj.at(key).get<bool>();
}

std::string get_string(const json& obj, const std::string& key, const std::string& where, const std::string& def) {
    if (!obj.contains(key)) return def;
    if (!obj.at(key).is_string()) throw ConfigError(where + "." + key + ": expected a string");
    return obj.at(key).get<std::string>();
}

std::vector<double> get_numbers(const json& obj, const std::string& key, const std::string& where) {
    std::vector<double> out;
    if (!obj.contains(key)) return out;
    const json& v = obj.at(key);
    if (!v.is_array()) throw ConfigError(where + "." + key + ": expected an array of numbers");
    for (const auto& x : v) {
        if (!x.is_number()) throw ConfigError(where + "." + key + ": expected an array of numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

MarkModel parse_marks(const json& j, const std::string& where) {
    check_keys(j, {"kind", "atoms", "nu0", "nu1"}, where);
    const std::string kind = get_string(j, "kind", where, "simple");
    if (kind == "simple") {
        if (j.contains("atoms") || j.contains("nu0") || j.contains("nu1"))
            throw ConfigError(where + ": simple marks take no atoms or weights");
        return MarkModel::simple();
    }
    if (kind != "discrete") throw ConfigError(where + ".kind: expected \"simple\" or \"discrete\"");
    MarkModel m;
    m.kind = MarkModel::Kind::Discrete;
    if (!j.contains("atoms") || !j.at("atoms").is_array()) throw ConfigError(where + ".atoms: expected an array");
    for (const auto& a : j.at("atoms")) {
        if (a.is_string())
            m.atoms.push_back(a.get<std::string>());
        else if (a.is_number())
            m.atoms.push_back(a.dump());
        else
            throw ConfigError(where + ".atoms: labels must be strings or numbers");
    }
    m.nu0 = get_numbers(j, "nu0", where);
    m.nu1 = get_numbers(j, "nu1", where);
    try {
        m.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return m;
}

FundamentalMethod parse_method(const std::string& s, const std::string& where) {
    if (s == "chain_exact") return FundamentalMethod::ChainExact;
    if (s == "monte_carlo") return FundamentalMethod::MonteCarlo;
    throw ConfigError(where + ": expected \"chain_exact\" or \"monte_carlo\"");
}

HBackend parse_backend(const std::string& s, const std::string& where) {
    if (s == "quadrature") return HBackend::Quadrature;
    if (s == "monte_carlo") return HBackend::MonteCarlo;
    throw ConfigError(where + ": expected \"quadrature\" or \"monte_carlo\"");
}

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

std::string header(const RunConfig& cfg, std::uint64_t seed) {
    return "# qdetect config_hash=" + cfg.hash + " master_seed=" + std::to_string(seed) + "\n";
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << content;
}

struct CsvTable {
    std::string columns;
    std::vector<std::vector<double>> rows;

    std::string csv(const std::string& head) const {
        std::string s = head + columns + "\n";
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + fmt(r[i]);
            s += "\n";
        }
        return s;
    }
    std::string dat(const std::string& head) const {
        std::string c = columns;
        std::replace(c.begin(), c.end(), ',', ' ');
        std::string s = head + "# " + c + "\n";
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.size(); ++i) s += (i ? " " : "") + fmt(r[i]);
            s += "\n";
        }
        return s;
    }
};

void emit(const RunConfig& cfg, const fs::path& out, const std::string& stem, const CsvTable& t, std::uint64_t seed) {
    const std::string head = header(cfg, seed);
    if (cfg.write_csv) write_file(out / (stem + ".csv"), t.csv(head));
    if (cfg.gnuplot) write_file(out / (stem + ".dat"), t.dat(head));
}

void emit_json(const RunConfig& cfg, const fs::path& out, const std::string& name, const json& j) {
    if (cfg.write_json) write_file(out / name, j.dump(2) + "\n");
}

}  // namespace

ReducedModel RunConfig::model() const { return reduce_sources(problem); }

json default_config_json() {
    return json{
        {"schema_version", 1},
        {"problem",
         {{"wiener_drifts", {1.0}},
          {"poisson_sources", json::array({{{"rate_pre", 6.0}, {"rate_post", 1.0}, {"marks", {{"kind", "simple"}}}}})},
          {"disorder_rate", 1.0},
          {"prior_mass", 0.0},
          {"delay_cost", 1.0}}},
    };
}

std::string config_hash(const json& j) {
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunConfig parse_config(const json& j) {
    check_keys(j, {"schema_version", "problem", "numerics", "simulation", "output", "workers"}, "config");
    if (!j.contains("schema_version") || !j.at("schema_version").is_number_integer() ||
        j.at("schema_version").get<long long>() != 1)
        throw ConfigError("config.schema_version: expected 1");
    if (!j.contains("problem")) throw ConfigError("config.problem: missing");
    RunConfig cfg;
    cfg.raw = j;
    cfg.hash = config_hash(j);

    const json& p = j.at("problem");
    check_keys(p, {"wiener_drifts", "poisson_sources", "disorder_rate", "prior_mass", "delay_cost"}, "problem");
    cfg.problem.wiener_drifts = get_numbers(p, "wiener_drifts", "problem");
    if (!p.contains("poisson_sources") || !p.at("poisson_sources").is_array())
        throw ConfigError("problem.poisson_sources: expected an array");
    for (std::size_t i = 0; i < p.at("poisson_sources").size(); ++i) {
        const std::string where = "problem.poisson_sources[" + std::to_string(i) + "]";
        const json& s = p.at("poisson_sources").at(i);
        check_keys(s, {"rate_pre", "rate_post", "marks"}, where);
        PoissonSource src;
        src.rate_pre = get_number(s, "rate_pre", where, NAN);
        src.rate_post = get_number(s, "rate_post", where, NAN);
        src.marks = s.contains("marks") ? parse_marks(s.at("marks"), where + ".marks") : MarkModel::simple();
        cfg.problem.poisson_sources.push_back(src);
    }
    cfg.problem.disorder_rate = get_number(p, "disorder_rate", "problem", NAN);
    cfg.problem.delay_cost = get_number(p, "delay_cost", "problem", NAN);
    const double pi = get_number(p, "prior_mass", "problem", 0.0);
    if (!(pi >= 0.0 && pi <= 1.0)) throw ConfigError("problem.prior_mass: must lie in [0, 1] (got " + fmt(pi) + ")");
    cfg.prior_is_one = pi == 1.0;
    cfg.problem.prior_mass = cfg.prior_is_one ? 0.0 : pi;
    try {
        (void)reduce_sources(cfg.problem);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("problem: ") + e.what());
    }

    cfg.workers = static_cast<unsigned>(get_uint(j, "workers", "config", default_workers()));
    if (cfg.workers == 0) throw ConfigError("config.workers: must be >= 1");

    const json num = j.value("numerics", json::object());
    check_keys(num, {"grid_step", "epsilon", "fundamentals", "h_backend", "early_exit", "mc"}, "numerics");
    cfg.solver.h = get_number(num, "grid_step", "numerics", 0.0);
    cfg.epsilon = get_number(num, "epsilon", "numerics", 1e-3);
    if (!(cfg.epsilon > 0.0)) throw ConfigError("numerics.epsilon: must be > 0");
    cfg.solver.fundamentals = parse_method(get_string(num, "fundamentals", "numerics", "chain_exact"), "numerics.fundamentals");
    cfg.solver.backend = parse_backend(get_string(num, "h_backend", "numerics", "quadrature"), "numerics.h_backend");
    cfg.solver.early_exit = get_bool(num, "early_exit", "numerics", true);
    const json mc = num.value("mc", json::object());
    check_keys(mc, {"n_paths", "master_seed", "max_steps_per_path", "target_rel_stderr", "node_stride"}, "numerics.mc");
    MCConfig m;
    m.n_paths = get_uint(mc, "n_paths", "numerics.mc", 2000);
    m.master_seed = get_uint(mc, "master_seed", "numerics.mc", 12345);
    m.max_steps_per_path = get_uint(mc, "max_steps_per_path", "numerics.mc", 0);
    if (mc.contains("target_rel_stderr") && !mc.at("target_rel_stderr").is_null()) {
        const double t = get_number(mc, "target_rel_stderr", "numerics.mc", 0.0);
        if (!(t > 0.0)) throw ConfigError("numerics.mc.target_rel_stderr: must be > 0");
        m.target_rel_stderr = t;
    }
    if (m.n_paths < 2) throw ConfigError("numerics.mc.n_paths: must be >= 2");
    m.workers = cfg.workers;
    cfg.solver.mc = m;
    cfg.solver.h_mc = m;
    cfg.solver.mc_node_stride = get_uint(mc, "node_stride", "numerics.mc", 1);
    if (cfg.solver.mc_node_stride == 0) throw ConfigError("numerics.mc.node_stride: must be >= 1");
    cfg.master_seed = m.master_seed;
    if (cfg.solver.h > 0.0 && !cfg.prior_is_one && !step_admissible(cfg.solver.h, reduce_sources(cfg.problem)))
        throw ConfigError("numerics.grid_step: violates mu^2 h / (2 lambda) <= 1e-3");

    const json sim = j.value("simulation", json::object());
    check_keys(sim, {"dt_sim", "n_paths", "master_seed", "max_alarm_steps", "thresholds", "dump_outcomes"}, "simulation");
    cfg.sim.dt_sim = get_number(sim, "dt_sim", "simulation", 0.0);
    cfg.sim.n_paths = get_uint(sim, "n_paths", "simulation", 10000);
    cfg.sim.master_seed = get_uint(sim, "master_seed", "simulation", 777);
    cfg.sim.max_alarm_steps = get_uint(sim, "max_alarm_steps", "simulation", 1'000'000);
    cfg.sim.workers = cfg.workers;
    cfg.thresholds = get_numbers(sim, "thresholds", "simulation");
    cfg.dump_outcomes = get_bool(sim, "dump_outcomes", "simulation", false);
    for (double t : cfg.thresholds)
        if (!(t >= 0.0)) throw ConfigError("simulation.thresholds: entries must be >= 0");
    if (!cfg.prior_is_one) {
        try {
            validate(cfg.sim, reduce_sources(cfg.problem));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("simulation: ") + e.what());
        }
    }

    const json out = j.value("output", json::object());
    check_keys(out, {"formats", "gnuplot"}, "output");
    if (out.contains("formats")) {
        if (!out.at("formats").is_array()) throw ConfigError("output.formats: expected an array");
        cfg.write_csv = cfg.write_json = false;
        for (const auto& f : out.at("formats")) {
            if (f == "csv")
                cfg.write_csv = true;
            else if (f == "json")
                cfg.write_json = true;
            else
                throw ConfigError("output.formats: entries must be \"csv\" or \"json\"");
        }
    }
    cfg.gnuplot = get_bool(out, "gnuplot", "output", false);
    return cfg;
}

RunConfig load_config(const fs::path& file) {
    std::ifstream f(file);
    if (!f) throw ConfigError("cannot open config file " + file.string());
    json j;
    try {
        f >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

int cmd_solve(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    fs::create_directories(out);
    const auto t0 = std::chrono::steady_clock::now();
    json summary;
    summary["config_hash"] = cfg.hash;
    summary["master_seed"] = cfg.master_seed;
    if (cfg.prior_is_one) {
        log << "warning: prior_mass = 1; the change has already happened, alarm immediately (risk 0)\n";
        summary["immediate_alarm"] = true;
        summary["risk"] = 0.0;
        emit_json(cfg, out, "summary.json", summary);
        return kExitOk;
    }
    const ReducedModel m = cfg.model();
    Solution s;
    // Estimator failures in the fundamentals surface as runtime_error.
    try {
        s = solve(m, cfg.epsilon, cfg.solver);
    } catch (const std::runtime_error& e) {
        summary["diagnostics"] = json::array({e.what()});
        emit_json(cfg, out, "summary.json", summary);
        log << "numerical diagnostic: " << e.what() << "\n";
        return kExitNumerical;
    }
    const auto& vi = s.vi;
    CsvTable value{"node,v,error", {}};
    for (std::size_t n = 0; n < vi.v.size(); ++n)
        value.rows.push_back({vi.v.node(n), vi.v.values[n], vi.certificate + vi.v.node_stderr(n)});
    CsvTable thr{"n,phi_n,sup_diff,bound", {}};
    for (const auto& r : vi.trace) thr.rows.push_back({double(r.n), r.phi, r.sup_diff, r.bound});
    CsvTable risk{"pi,U", {}};
    for (std::size_t i = 0; i < s.pi_grid.size(); ++i) risk.rows.push_back({s.pi_grid[i], s.risk[i]});
    emit(cfg, out, "value", value, cfg.master_seed);
    emit(cfg, out, "thresholds", thr, cfg.master_seed);
    emit(cfg, out, "risk", risk, cfg.master_seed);

    summary["phi_inf"] = s.phi_inf;
    summary["phi_inf_bracket"] = {vi.threshold.lo, vi.threshold.hi};
    summary["n_star"] = vi.n_star;
    summary["iterations"] = vi.iterations;
    summary["early_exit"] = vi.early_exit;
    summary["certificate"] = vi.certificate;
    summary["certificate_apriori"] = vi.cert_apriori;
    summary["certificate_posteriori"] = vi.cert_posteriori;
    summary["risk_certificate_pi0"] = m.c * vi.certificate;
    summary["grid"] = {{"h", vi.fs.grid.h}, {"z_max", vi.fs.grid.z_max()}};
    summary["wronskian"] = {{"b_ref", vi.fs.b_ref}, {"dispersion", vi.fs.dispersion}};
    summary["seeds"] = {{"numerics", cfg.solver.mc.master_seed}};
    summary["diagnostics"] = vi.diagnostics;
    summary["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    emit_json(cfg, out, "summary.json", summary);
    log << "phi_inf = " << fmt(s.phi_inf) << ", U(pi=" << fmt(m.pi) << ") = " << fmt(risk_at(vi.v, m.pi, m))
        << ", iterations = " << vi.iterations << "\n";
    for (const auto& d : vi.diagnostics) log << "diagnostic: " << d << "\n";
    return vi.diagnostics.empty() ? kExitOk : kExitNumerical;
}

int cmd_simulate(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    if (cfg.thresholds.empty()) {
        log << "config error: simulation.thresholds must be nonempty\n";
        return kExitConfig;
    }
    fs::create_directories(out);
    CsvTable risk{"threshold,mean,stderr,censored_count", {}};
    CsvTable outcomes{"threshold,theta,tau,penalty", {}};
    bool warn = false;
    for (double t : cfg.thresholds) {
        if (cfg.prior_is_one) {
            risk.rows.push_back({t, 0.0, 0.0, 0.0});
            continue;
        }
        ScenarioConfig sc = cfg.sim;
        sc.keep_outcomes = cfg.dump_outcomes;
        const RiskEstimate r = evaluate_policy(cfg.model(), t, sc);
        warn = warn || r.warning;
        risk.rows.push_back({t, r.mean, r.stderr_, double(r.censored_count)});
        for (const auto& o : r.outcomes) outcomes.rows.push_back({t, o.theta, o.tau, o.penalty});
    }
    if (cfg.prior_is_one) log << "warning: prior_mass = 1; every threshold alarms at once with risk 0\n";
    emit(cfg, out, "risk", risk, cfg.sim.master_seed);
    if (cfg.dump_outcomes) emit(cfg, out, "outcomes", outcomes, cfg.sim.master_seed);
    if (warn) log << "warning: more than 1% of paths were censored\n";
    return kExitOk;
}

int cmd_asymptotics(const RunConfig& cfg, const std::vector<double>& costs, const fs::path& out, std::ostream& log) {
    if (costs.empty()) {
        log << "config error: --costs must list at least one value\n";
        return kExitConfig;
    }
    for (double c : costs)
        if (!(c > 0.0) || !std::isfinite(c)) {
            log << "config error: costs must be > 0 (got " << fmt(c) << ")\n";
            return kExitConfig;
        }
    if (cfg.prior_is_one) {
        log << "config error: asymptotics needs prior_mass < 1\n";
        return kExitConfig;
    }
    fs::create_directories(out);
    CsvTable t{"c,bt_phi_c,bt_f_c,solver_phi_inf,U_pi0,U_pi05,U_pi08", {}};
    for (double c : costs) {
        SourceSpec spec = cfg.problem;
        spec.delay_cost = c;
        const ReducedModel m = reduce_sources(spec);
        const AsymptoticPair bt = bt_expansion(c, m);
        Solution s;
        try {
            s = solve(m, cfg.epsilon, cfg.solver, {0.0, 0.5, 0.8});
        } catch (const std::runtime_error& e) {
            log << "numerical diagnostic at c = " << fmt(c) << ": " << e.what() << "\n";
            return kExitNumerical;
        }
        t.rows.push_back({c, bt.phi_c, bt.f_c, s.phi_inf, s.risk[0], s.risk[1], s.risk[2]});
        log << "c = " << fmt(c) << ": phi_inf = " << fmt(s.phi_inf) << ", bt phi_c = " << fmt(bt.phi_c) << "\n";
    }
    emit(cfg, out, "asymptotics", t, cfg.master_seed);
    return kExitOk;
}

std::vector<SelftestCheck> run_selftest(std::uint64_t seed, bool inject_fault) {
    std::vector<SelftestCheck> checks;
    auto add = [&](std::string name, double measured, double expected, double tol) {
        checks.push_back({std::move(name), measured, expected, tol, std::fabs(measured - expected) <= tol});
    };
    MCConfig mc;
    mc.master_seed = seed;
    mc.workers = default_workers();

    // Chain mean against E0[Y_t] = phi e^{at} + lambda (e^{at} - 1)/a.
    {
        const ReducedModel m = make_model(1, 6, 1, 1, 1);
        const double h = default_grid_step(m);
        const Chain chain(m, h, 2000);
        MCConfig c = mc;
        c.n_paths = 4000;
        const double t = 0.05;
        const MCEstimate e = chain.mean_position(250, t, c);
        add("chain mean vs E0[Y_t] (phi=0.5, t=0.05)", e.mean, mean_Y(m, 0.5, t), 3.0 * e.stderr_ + 2.0 * h);
    }
    // Constant running cost with an unreachable boundary: 1/beta.
    {
        const ReducedModel m = make_model(1, 1, 3, 1, 1);
        const double h = default_grid_step(m);
        const Chain chain(m, h, 2500);
        MCConfig c = mc;
        c.n_paths = 1000;
        const double beta = 50.0;
        const MCEstimate e = chain.discounted_running_cost(250, 2500, std::vector<double>(2500, 1.0), beta, c);
        add("discounted cost k=1 vs 1/beta", e.mean, 1.0 / beta, 3.0 * e.stderr_ + 1e-9);
    }
    // Polynomial psi: (2,1,2,1) has psi = 1 + 1.5 phi + 0.75 phi^2.
    {
        const ReducedModel m = make_model(2, 1, 2, 1, 1);
        const GridSpec g = make_grid(2.0, 0.0, m);
        MCConfig c = mc;
        c.n_paths = 4000;
        const FundamentalColumn p = compute_psi(g, m, c);
        auto poly = [](double x) { return 1.0 + 1.5 * x + 0.75 * x * x; };
        double worst = 0.0;
        for (std::size_t n = 0; n <= g.n_points; ++n) {
            const double z = g.node(n);
            if (z < 0.1) continue;
            worst = std::max(worst, std::fabs(std::exp(p.log_value[n]) / (poly(z) / poly(g.z_max())) - 1.0));
        }
        add("MC psi vs 1 + 1.5 phi + 0.75 phi^2 (sup rel err)", worst, 0.0, 0.02);
    }
    // Wiener equivalence through degenerate jumps.
    {
        const ReducedModel m = make_model(1, 1, 1, 1, 1);
        SolverOptions o;
        const Solution s = solve(m, 1e-3, o);
        const double ref = wiener_threshold(1.0);
        add("Wiener threshold (grid steps)", (s.phi_inf - ref) / s.vi.fs.grid.h, 0.0, 2.0);
        double worst = 0.0;
        for (int i = 0; i < 10; ++i) {
            const double p = i / 10.0;
            worst = std::max(worst, std::fabs(risk_at(s.vi.v, p, m) / wiener_risk(p, 1.0) - 1.0));
        }
        add("Wiener risk (sup rel err)", worst, 0.0, 0.05);
    }
    // K identities.
    {
        const ReducedModel m = make_model(1, 6, 1, 1, 1);
        const auto jt = m.jumps();
        const GridFunction c = GridFunction::constant(-1.0, 0.01, 1001);
        add("K of a constant", apply_K(c, 3.7, jt), -1.0, 1e-12);
        GridFunction id = GridFunction::constant(0.0, 0.01, 1001);
        for (std::size_t n = 0; n < id.size(); ++n) id.values[n] = id.node(n);
        add("K w at phi=6 equals w(1)", apply_K(id, 6.0, jt), 1.0, 1e-12);
        const ReducedModel md = make_model(1, 2, 3, 1, 1, 0.0, MarkModel::discrete({"x", "y"}, {0.5, 0.5}, {0.25, 0.75}));
        add("K identity = (lambda1/lambda0) phi", apply_K(id, 2.0, md.jumps()), 3.0, 1e-12);
    }
    // Wronskian constancy; the fault hook perturbs psi.
    {
        const ReducedModel m = make_model(1, 6, 1, 1, 1);
        FundamentalSolutions f = compute_fundamentals(make_grid(8.0, 0.0, m), m, FundamentalMethod::ChainExact);
        if (inject_fault) {
            Rng r(seed);
            for (auto& lp : f.log_psi) lp += 0.05 * (r.uniform() - 0.5);
            update_wronskian(f);
        }
        add("Wronskian dispersion", f.dispersion, 0.0, 0.2);
    }
    return checks;
}

int cmd_selftest(const RunConfig& cfg, bool inject_fault, std::ostream& report) {
    const auto checks = run_selftest(cfg.master_seed, inject_fault);
    bool ok = true;
    for (const auto& c : checks) {
        report << (c.pass ? "PASS " : "FAIL ") << c.name << ": measured " << fmt(c.measured) << ", expected "
               << fmt(c.expected) << ", tolerance " << fmt(c.tolerance) << "\n";
        ok = ok && c.pass;
    }
    return ok ? kExitOk : kExitSelftestFail;
}

namespace {

std::vector<double> parse_costs(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(item, &used);
        } catch (...) {
            throw ConfigError("--costs: not a number: " + item);
        }
        if (used != item.size()) throw ConfigError("--costs: not a number: " + item);
        v.push_back(x);
    }
    return v;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Bayesian quickest detection solver and simulator"};
    app.require_subcommand(1);
    std::string config, outdir, costs;
    bool inject = false;
    std::uint64_t seed = 0;
    bool seed_given = false;

    auto* solve_cmd = app.add_subcommand("solve", "value iteration for the optimal threshold and Bayes risk");
    solve_cmd->add_option("--config", config, "JSON configuration")->required();
    solve_cmd->add_option("--out", outdir, "output directory")->required();
    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo Bayes risk of threshold rules");
    sim_cmd->add_option("--config", config, "JSON configuration")->required();
    sim_cmd->add_option("--out", outdir, "output directory")->required();
    auto* asy_cmd = app.add_subcommand("asymptotics", "solver vs first-order expansions over delay costs");
    asy_cmd->add_option("--config", config, "JSON configuration")->required();
    asy_cmd->add_option("--costs", costs, "comma-separated delay costs")->required();
    asy_cmd->add_option("--out", outdir, "output directory")->required();
    auto* self_cmd = app.add_subcommand("selftest", "oracle checks at reduced budgets");
    self_cmd->add_option("--config", config, "JSON configuration");
    auto* seed_opt = self_cmd->add_option("--seed", seed, "master seed override");
    self_cmd->add_flag("--inject-fault", inject, "corrupt psi before the Wronskian check")->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }
    seed_given = seed_opt->count() > 0;

    try {
        if (*self_cmd) {
            RunConfig cfg = config.empty() ? parse_config(default_config_json()) : load_config(config);
            if (seed_given) cfg.master_seed = seed;
            return cmd_selftest(cfg, inject, out);
        }
        const RunConfig cfg = load_config(config);
        if (*solve_cmd) return cmd_solve(cfg, outdir, out);
        if (*sim_cmd) return cmd_simulate(cfg, outdir, out);
        if (*asy_cmd) return cmd_asymptotics(cfg, parse_costs(costs), outdir, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalDiagnostic& e) {
        err << "numerical diagnostic: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitOk;
}

}  // namespace qdetect
