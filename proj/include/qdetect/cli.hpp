#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "qdetect/chain.hpp"
#include "qdetect/model.hpp"
#include "qdetect/simulate.hpp"
#include "qdetect/solver.hpp"

namespace qdetect {

constexpr int kExitOk = 0;
constexpr int kExitSelftestFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    SourceSpec problem;
    bool prior_is_one = false;  // pi = 1: immediate alarm, risk 0
    double epsilon = 1e-3;
    SolverOptions solver;
    ScenarioConfig sim;
    std::vector<double> thresholds;
    bool dump_outcomes = false;
    bool gnuplot = false;
    bool write_csv = true;
    bool write_json = true;
    unsigned workers = 1;
    std::uint64_t master_seed = 0;  // reported in headers
    std::string hash;               // FNV-1a of the canonical JSON
    nlohmann::json raw;

    ReducedModel model() const;
};

/// Validates against schema version 1; unknown keys are rejected.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& file);

/// Default configuration: lambda0 = 6, every other rate and the cost 1.
nlohmann::json default_config_json();

std::string config_hash(const nlohmann::json& j);

int cmd_solve(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_simulate(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_asymptotics(const RunConfig& cfg, const std::vector<double>& costs,
                    const std::filesystem::path& out, std::ostream& log);

struct SelftestCheck {
    std::string name;
    double measured = 0.0;
    double expected = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// Oracle suite at reduced budgets. `inject_fault` corrupts psi before the
/// Wronskian check.
std::vector<SelftestCheck> run_selftest(std::uint64_t seed, bool inject_fault = false);
int cmd_selftest(const RunConfig& cfg, bool inject_fault, std::ostream& report);

/// Full command-line entry point; returns the process exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace qdetect
