#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "basisrisk/pricing.hpp"
#include "basisrisk/scenario.hpp"

namespace basisrisk {

inline constexpr const char* kVersion = "0.1.0";

class UnsupportedOracleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Command { Price, Hedge, Mup, Verify, Compare };
const char* to_string(Command command);

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct RunReport {
    Command command = Command::Price;
    std::string scenario;
    std::string config_hash;
    std::uint64_t seed = 0;
    int n_paths = 0;
    int n_steps = 0;
    int degree = 0;
    bool antithetic = false;
    std::string payoff;

    double price = 0.0;  // p(t0, r0) = u - u_hat
    Vector grad_p, pi, pi_hat, delta, delta_formula;
    std::vector<std::pair<std::string, MupEstimate>> mup;
    std::vector<std::pair<std::string, std::string>> sections;  // titled free-form blocks
    std::vector<std::string> notes;
    std::vector<CheckResult> checks;
    std::vector<std::string> files;  // written outputs, relative to the output directory

    bool passed() const;
    int exit_code() const { return passed() ? 0 : 2; }
    void write_text(std::ostream& out) const;
};

/// Simulates, solves both equations, prices and hedges, runs the
/// command-specific estimators and checks, and writes outputs under
/// config.output.dir.
RunReport run(const ScenarioConfig& config, Command command);

/// Regression against the finite-difference oracle (m <= 2).
RunReport compare_oracles(const ScenarioConfig& config);

}  // namespace basisrisk
