#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "basisrisk/linalg.hpp"
#include "basisrisk/market_model.hpp"
#include "basisrisk/payoff.hpp"

namespace basisrisk {

class ConfigParseError : public std::runtime_error {
public:
    ConfigParseError(const std::string& what, int line, int column)
        : std::runtime_error(what), line(line), column(column) {}
    int line;
    int column;
};

/// Thrown with every violated invariant listed, one per line.
class ConfigValidationError : public std::runtime_error {
public:
    explicit ConfigValidationError(std::vector<std::string> problems);
    std::vector<std::string> problems;
};

enum class CoefficientKind { Constant, Linear, Geometric };

/// A coefficient field of one of three declared shapes (vectors are one-column matrices):
///   constant:  F(r) = value
///   linear:    F(r) = intercept + sum_j r_j slopes[j]
///   geometric: row i of F(r) is r_i times row i of value
struct CoefficientSpec {
    CoefficientKind kind = CoefficientKind::Constant;
    Matrix value;
    Matrix intercept;
    std::vector<Matrix> slopes;

    Matrix evaluate(const Vector& r) const;
    std::vector<Matrix> jacobian(const Vector& r) const;  // one slice per index coordinate
};

struct PayoffConfig {
    std::string type = "call";  // call | put | spread-call | digital | constant | polynomial
    int coordinate = 0;
    int long_coordinate = 1;
    int short_coordinate = 0;
    double strike = 0.0;
    std::optional<double> cap;  // default: 10 x the 99.9% quantile of the terminal index scale
    double value = 0.0;         // constant payoff
    std::vector<Monomial> terms;
    PayoffCoordinates coordinates = PayoffCoordinates::Level;
};

struct SolverConfig {
    int n_paths = 50000;
    int n_steps = 50;
    int degree = 3;
    std::uint64_t seed = 1;
    bool antithetic = true;
};

struct OracleConfig {
    bool pde = true;
    int pde_nodes = 0;  // 0: oracle default
    bool gradient = true;
    bool mup = true;
    double q_step = 0.05;
    int batches = 10;
};

struct OutputConfig {
    std::string dir = "out";
    int max_paths = 200;  // paths written to the solution CSVs
};

struct ScenarioConfig {
    std::string scenario = "custom";
    std::map<std::string, double> parameters;  // built-in scenario parameters

    // Custom market (ignored for built-in scenarios).
    int m = 1, k = 1, d = 1;
    double t0 = 0.0;
    double horizon = 1.0;
    double eta = 1.0;
    Vector r0;
    CoefficientSpec index_drift, index_vol, asset_drift, asset_vol;

    std::optional<PayoffConfig> payoff;  // built-ins supply a default
    SolverConfig solver;
    OracleConfig oracles;
    OutputConfig output;

    std::string source;  // canonical JSON text the config was read from
    std::string hash() const;  // 64-bit FNV-1a of the canonical text, hex
};

/// Command-line settings merged into the document before validation, so the
/// hash covers them.
struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> n_paths;
    std::optional<int> n_steps;
    std::optional<std::string> out_dir;
    std::optional<bool> oracles;
};

/// Parses and validates a JSON document. Unknown keys are rejected.
ScenarioConfig parse_config(const std::string& text, const ConfigOverrides& overrides = {});
ScenarioConfig load_config(const std::string& path, const ConfigOverrides& overrides = {});

/// Built-in identifiers: complete-market-bs, weather-chdd, crack-spread.
std::vector<std::string> builtin_scenarios();

/// A fully resolved problem: market with bounded payoff, start point and notes
/// (e.g. the cap that was applied).
struct Scenario {
    std::string id;
    MarketSpec spec;
    double t0 = 0.0;
    Vector r0;
    std::vector<std::string> notes;
    std::map<std::string, double> parameters;  // resolved parameter values
};

Scenario build_scenario(const ScenarioConfig& config);

/// The payoff a config describes, capped using a pilot simulation when no cap is given.
Payoff build_payoff(const PayoffConfig& payoff, const MarketSpec& spec, double t0, const Vector& r0,
                    std::uint64_t seed, std::vector<std::string>& notes);

}  // namespace basisrisk
