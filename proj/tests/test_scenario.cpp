#include <algorithm>
#include <cmath>

#include "basisrisk/generator.hpp"
#include "basisrisk/scenario.hpp"
#include "doctest.h"

using namespace basisrisk;

namespace {
bool mentions(const std::vector<std::string>& list, const std::string& needle) {
    return std::any_of(list.begin(), list.end(), [&](const auto& s) { return s.find(needle) != std::string::npos; });
}
}  // namespace

TEST_CASE("built-in identifiers") {
    const auto ids = builtin_scenarios();
    CHECK(ids.size() == 3);
    CHECK(std::find(ids.begin(), ids.end(), "weather-chdd") != ids.end());
}

TEST_CASE("weather scenario is a GBM index with one correlated asset") {
    const ScenarioConfig cfg =
        parse_config(R"({"scenario": "weather-chdd", "parameters": {"alpha1": 0.03, "alpha2": 0.4}})");
    const Scenario sc = build_scenario(cfg);
    CHECK(sc.spec.m == 1);
    CHECK(sc.spec.k == 1);
    CHECK(sc.spec.d == 2);
    const Vector r = Vector::Constant(1, 80.0);
    CHECK(sc.spec.index_drift(0.0, r)(0) == doctest::Approx(0.03 * 80.0));
    CHECK(sc.spec.index_vol(0.0, r)(0, 0) == doctest::Approx(0.4 * 80.0));
    CHECK(sc.spec.index_vol(0.0, r)(0, 1) == 0.0);
    CHECK(sc.spec.asset_vol(0.0, r)(0, 0) == doctest::Approx(0.2));
    CHECK(sc.spec.asset_vol(0.0, r)(0, 1) == doctest::Approx(0.1));
    CHECK(mentions(sc.notes, "capped at"));
}

TEST_CASE("weather scenario requires its seasonal parameters") {
    try {
        parse_config(R"({"scenario": "weather-chdd"})");
        FAIL("expected a validation error");
    } catch (const ConfigValidationError& e) {
        CHECK(mentions(e.problems, "alpha1"));
        CHECK(mentions(e.problems, "alpha2"));
    }
}

TEST_CASE("crack-spread matrices") {
    const ScenarioConfig cfg = parse_config(R"({"scenario": "crack-spread",
        "parameters": {"gamma1": 0.3, "gamma2": 0.25, "gamma3": 0.15, "gamma4": 0.1, "beta1": 0.2, "beta2": 0.25}})");
    const Scenario sc = build_scenario(cfg);
    CHECK(sc.spec.m == 2);
    CHECK(sc.spec.k == 2);
    CHECK(sc.spec.d == 3);
    Matrix rho(2, 3), beta(2, 3);
    rho << 0.3, 0, 0, 0.25, 0.15, 0.1;
    beta << 0.3, 0, 0, 0.2, 0.25, 0;
    CHECK((sc.spec.index_vol(0.0, sc.r0) - rho).norm() == 0.0);
    CHECK((sc.spec.asset_vol(0.0, sc.r0) - beta).norm() == 0.0);
    CHECK(std::exp(sc.r0(0)) == doctest::Approx(70.0));
    CHECK(std::exp(sc.r0(1)) == doctest::Approx(80.0));
    Vector x(2);
    x << std::log(75.0), std::log(90.0);
    CHECK(sc.spec.payoff(x) == doctest::Approx(5.0));
}

TEST_CASE("complete-market scenario has index equal to the asset") {
    const Scenario sc = build_scenario(parse_config(R"({"scenario": "complete-market-bs",
        "payoff": {"type": "call", "strike": 100, "cap": 50}})"));
    const Vector r = Vector::Constant(1, 120.0);
    CHECK(sc.spec.index_vol(0.0, r)(0, 0) == doctest::Approx(0.2 * 120.0));
    CHECK(sc.spec.asset_vol(0.0, r)(0, 0) == doctest::Approx(0.2));
    CHECK(sc.spec.payoff.sup_norm == 50.0);
    CHECK(sc.notes.empty());
}

TEST_CASE("malformed JSON reports line and column") {
    try {
        parse_config("{\n  \"scenario\": \"weather-chdd\",\n  \"solver\": {\"n_paths\": }\n}");
        FAIL("expected a parse error");
    } catch (const ConfigParseError& e) {
        CHECK(e.line == 3);
        CHECK(e.column > 1);
    }
}

TEST_CASE("unknown keys are rejected and every problem is listed") {
    try {
        parse_config(R"({"scenario": "complete-market-bs", "colour": 1,
            "solver": {"n_paths": 1, "degree": 12, "speed": 3}, "payoff": {"type": "swap"}})");
        FAIL("expected a validation error");
    } catch (const ConfigValidationError& e) {
        CHECK(mentions(e.problems, "colour"));
        CHECK(mentions(e.problems, "speed"));
        CHECK(mentions(e.problems, "n_paths"));
        CHECK(mentions(e.problems, "degree"));
        CHECK(mentions(e.problems, "swap"));
        CHECK(e.problems.size() >= 5);
    }
}

TEST_CASE("custom markets with the three coefficient kinds") {
    const ScenarioConfig cfg = parse_config(R"({
        "scenario": "custom",
        "market": {"m": 2, "k": 1, "d": 2, "eta": 2.0, "horizon": 0.5, "r0": [1.0, 2.0],
                   "index_drift": {"kind": "linear", "intercept": [0.1, 0.0], "slopes": [[0.5, 0.0], [0.0, -0.2]]},
                   "index_vol": {"kind": "geometric", "value": [[0.2, 0.0], [0.1, 0.3]]},
                   "asset_drift": {"kind": "constant", "value": [0.05]},
                   "asset_vol": {"kind": "constant", "value": [[0.2, 0.1]]}},
        "payoff": {"type": "polynomial", "terms": [{"coefficient": 1.0, "exponents": [1, 1]}], "cap": 10}
    })");
    const Scenario sc = build_scenario(cfg);
    Vector r(2);
    r << 1.5, -2.0;
    CHECK(sc.spec.index_drift(0.0, r)(0) == doctest::Approx(0.1 + 0.75));
    CHECK(sc.spec.index_drift(0.0, r)(1) == doctest::Approx(0.4));
    const Matrix vol = sc.spec.index_vol(0.0, r);
    CHECK(vol(0, 0) == doctest::Approx(0.3));
    CHECK(vol(1, 1) == doctest::Approx(-0.6));
    const auto jac = sc.spec.index_vol_jacobian(0.0, r);
    CHECK(jac[0](0, 0) == doctest::Approx(0.2));
    CHECK(jac[0](1, 1) == 0.0);
    CHECK(jac[1](1, 0) == doctest::Approx(0.1));
    CHECK(sc.spec.index_drift_jacobian(0.0, r)(1, 1) == doctest::Approx(-0.2));
    CHECK(sc.spec.eta == 2.0);
    CHECK(sc.spec.payoff(r) == doctest::Approx(-3.0));
    CHECK(make_context(sc.spec, 0.0, r).theta.norm() > 0.0);
}

TEST_CASE("shape errors in a custom market") {
    try {
        parse_config(R"({"scenario": "custom",
            "market": {"m": 1, "k": 1, "d": 2, "r0": [1.0],
                       "index_drift": {"kind": "constant", "value": [0.1, 0.2]},
                       "index_vol": {"kind": "geometric", "value": [[0.2, 0.0]]},
                       "asset_drift": {"kind": "constant", "value": [0.05]},
                       "asset_vol": {"kind": "quadratic"}},
            "payoff": {"type": "call", "coordinate": 3, "strike": 1}})");
        FAIL("expected a validation error");
    } catch (const ConfigValidationError& e) {
        CHECK(mentions(e.problems, "index_drift"));
        CHECK(mentions(e.problems, "asset_vol"));
        CHECK(mentions(e.problems, "coordinate"));
    }
}

TEST_CASE("overrides are merged before hashing; the output directory is not hashed") {
    const std::string text = R"({"scenario": "complete-market-bs", "output": {"dir": "a"}})";
    const ScenarioConfig base = parse_config(text);
    ConfigOverrides moved;
    moved.out_dir = "elsewhere";
    const ScenarioConfig relocated = parse_config(text, moved);
    CHECK(relocated.output.dir == "elsewhere");
    CHECK(relocated.hash() == base.hash());
    ConfigOverrides reseeded;
    reseeded.seed = 42;
    reseeded.n_paths = 1000;
    reseeded.oracles = false;
    const ScenarioConfig other = parse_config(text, reseeded);
    CHECK(other.solver.seed == 42);
    CHECK(other.solver.n_paths == 1000);
    CHECK_FALSE(other.oracles.pde);
    CHECK(other.hash() != base.hash());
    CHECK(base.hash().size() == 16);
}

TEST_CASE("antithetic sampling needs an even path count") {
    CHECK_THROWS_AS(parse_config(R"({"scenario": "complete-market-bs", "solver": {"n_paths": 1001}})"),
                    ConfigValidationError);
    CHECK_NOTHROW(parse_config(R"({"scenario": "complete-market-bs", "solver": {"n_paths": 1001, "antithetic": false}})"));
}

TEST_CASE("default cap is recorded and reproducible") {
    const ScenarioConfig cfg = parse_config(R"({"scenario": "complete-market-bs"})");
    const Scenario a = build_scenario(cfg), b = build_scenario(cfg);
    CHECK(a.spec.payoff.sup_norm == b.spec.payoff.sup_norm);
    CHECK(a.spec.payoff.sup_norm > 10.0 * 100.0);
    CHECK(mentions(a.notes, "capped at"));
}
