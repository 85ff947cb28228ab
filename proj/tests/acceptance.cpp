#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "basisrisk/gradient_verify.hpp"
#include "basisrisk/parallel.hpp"
#include "basisrisk/run.hpp"
#include "oracles.hpp"

using namespace basisrisk;
namespace fs = std::filesystem;

namespace {

fs::path g_out = "acceptance_out";

struct Outcome {
    bool pass = true;
    std::vector<std::string> details;

    void require(bool ok, const std::string& what) {
        pass = pass && ok;
        details.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
    }
    void note(const std::string& what) { details.push_back("     " + what); }
};

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

std::string vec(const Vector& v) {
    std::string out = "(";
    for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? ", " : "") + num(v(i));
    return out + ")";
}

const char* kWeatherParameters = R"("parameters": {"alpha1": 0.02, "alpha2": 0.25})";

ScenarioConfig config(const std::string& id, const std::string& extra, const std::string& dir) {
    std::string text = R"({"scenario": ")" + id + '"';
    if (id == "weather-chdd") text += std::string(", ") + kWeatherParameters;
    if (!extra.empty()) text += ", " + extra;
    text += "}";
    ConfigOverrides o;
    o.out_dir = (g_out / dir).string();
    return parse_config(text, o);
}

const std::vector<std::string> kBuiltins{"complete-market-bs", "weather-chdd", "crack-spread"};

const CheckResult* find_check(const RunReport& r, const std::string& name) {
    for (const auto& c : r.checks)
        if (c.name == name) return &c;
    return nullptr;
}

void require_check(Outcome& out, const RunReport& r, const std::string& name) {
    const CheckResult* c = find_check(r, name);
    if (!c) {
        out.require(false, r.scenario + ": check '" + name + "' missing");
        return;
    }
    out.require(c->passed, r.scenario + ": " + name + ": " + c->detail);
}

struct Solved {
    Scenario sc;
    PathEnsemble ens;
    std::shared_ptr<const BsdeSolution> with, zero;
    PriceField price;
};

Solved solve(const ScenarioConfig& cfg) {
    Solved s;
    s.sc = build_scenario(cfg);
    s.ens = simulate_paths(s.sc.spec, s.sc.t0, s.sc.r0, cfg.solver.n_paths, cfg.solver.n_steps, cfg.solver.seed, 0,
                           cfg.solver.antithetic);
    const RegressionBasis basis{cfg.solver.degree, true};
    s.with = std::make_shared<const BsdeSolution>(solve_backward(s.ens, s.sc.spec, TerminalKind::WithClaim, basis));
    s.zero = std::make_shared<const BsdeSolution>(solve_backward(s.ens, s.sc.spec, TerminalKind::ZeroClaim, basis));
    s.price = indifference_price(s.with, s.zero);
    return s;
}

// Criterion 1: complete-market replication.
Outcome complete_market() {
    Outcome out;
    ScenarioConfig cfg = config("complete-market-bs", "", "c1");
    cfg.solver.n_paths = 200000;
    const Solved s = solve(cfg);
    const auto& p = s.sc.parameters;
    const double r0 = s.sc.r0(0), strike = p.at("strike"), sigma = p.at("sigma"), T = p.at("horizon");
    const double cap = s.sc.spec.payoff.sup_norm;
    const double bs = oracle::bs_capped_call(r0, strike, cap, sigma, T);
    const double price = s.price.value(0, s.sc.r0);
    out.require(std::abs(std::abs(price) - bs) <= 0.01 * bs,
                "|p(0, r0)| = " + num(std::abs(price)) + " vs Black-Scholes " + num(bs) + " (1%)");
    const double delta_bs = oracle::bs_capped_call_delta(r0, strike, cap, sigma, T) * r0;
    const Vector delta = optimal_strategy(*s.with, s.sc.spec, 0.0, s.sc.r0) - optimal_strategy(*s.zero, s.sc.spec, 0.0, s.sc.r0);
    const Vector formula = derivative_hedge(s.price, s.sc.spec, 0.0, s.sc.r0);
    out.require(std::abs(delta(0) - delta_bs) <= 0.02 * delta_bs,
                "Delta = pi_hat - pi = " + num(delta(0)) + " vs Black-Scholes delta x S = " + num(delta_bs) + " (2%)");
    out.note("Delta from -grad p rho beta^*(beta beta^*)^-1 = " + num(formula(0)) + "; paths " +
             std::to_string(cfg.solver.n_paths) + ", cap " + num(cap));
    return out;
}

// Criterion 2: regression vs PDE on the one-dimensional built-ins.
Outcome oracle_equivalence() {
    Outcome out;
    for (const std::string id : {"complete-market-bs", "weather-chdd"}) {
        const RunReport r = compare_oracles(config(id, "", "c2-" + id));
        require_check(out, r, "regression price vs PDE at r0 (1%)");
        require_check(out, r, "Z vs grad u rho at interior points (2%)");
        if (const CheckResult* c = find_check(r, "doubling paths moves toward the oracle"))
            out.note(id + ": " + c->name + ": " + (c->passed ? "yes; " : "no; ") + c->detail);
    }
    return out;
}

std::vector<RunReport> g_verify;

const std::vector<RunReport>& verify_reports() {
    if (g_verify.empty())
        for (const auto& id : kBuiltins) g_verify.push_back(run(config(id, "", "verify-" + id), Command::Verify));
    return g_verify;
}

// Criterion 3: three routes to the hedge.
Outcome triangulation() {
    Outcome out;
    for (const RunReport& r : verify_reports()) {
        require_check(out, r, "hedge formula equivalence at r0 (2%)");
        require_check(out, r, "hedge triangulation with gradient BSDE (3%)");
    }
    return out;
}

// Criterion 4: crack-spread algebra, the gamma3 = 0 case and the gamma4 = 0 hedge.
Outcome crack_spread() {
    Outcome out;
    const Scenario sc = build_scenario(config("crack-spread", "", "c4"));
    const auto& p = sc.parameters;
    const double g1 = p.at("gamma1"), g2 = p.at("gamma2"), g3 = p.at("gamma3"), b1 = p.at("beta1"), b2 = p.at("beta2");
    double worst = 0.0;
    for (const auto& [d1, d2] : {std::pair{0.7, -0.4}, std::pair{-1.3, 2.1}, std::pair{0.0, 1.0}}) {
        Vector grad(2);
        grad << d1, d2;
        const Vector delta = hedge_from_gradient(sc.spec, 0.0, sc.r0, grad);
        Vector expected(2);
        expected << -d1 + (b1 * g3 / (g1 * b2) - g2 / g1) * d2, -(g3 / b2) * d2;
        worst = std::max(worst, (delta - expected).cwiseAbs().maxCoeff());
        const DriverContext ctx = make_context(sc.spec, 0.0, sc.r0);
        const Vector row = sc.spec.index_vol(0.0, sc.r0).transpose() * grad;
        Vector proj(3);
        proj << g1 * d1 + g2 * d2, g3 * d2, 0.0;
        worst = std::max(worst, (project(ctx, row) - proj).cwiseAbs().maxCoeff());
    }
    out.require(worst <= 1e-10, "projection and hedge components vs the closed forms: max error " + num(worst));

    {
        const ScenarioConfig cfg = config("crack-spread", R"("parameters": {"gamma3": 0.0})", "c4-gamma3");
        const Scenario s3 = build_scenario(cfg);
        Vector grad(2);
        grad << 0.8, -1.7;
        const double formula = hedge_from_gradient(s3.spec, 0.0, s3.r0, grad)(1);
        out.require(std::abs(formula) <= 1e-10, "gamma3 = 0: second hedge component from the formula " + num(formula));
        const PathEnsemble ens = simulate_paths(s3.spec, s3.t0, s3.r0, cfg.solver.n_paths, cfg.solver.n_steps,
                                                cfg.solver.seed, 0, cfg.solver.antithetic);
        const RegressionBasis basis{cfg.solver.degree, true};
        const BatchEstimate second = batch_estimate(ens, cfg.oracles.batches, [&](const PathEnsemble& part) {
            const BsdeSolution with = solve_backward(part, s3.spec, TerminalKind::WithClaim, basis);
            const BsdeSolution zero = solve_backward(part, s3.spec, TerminalKind::ZeroClaim, basis);
            return (optimal_strategy(with, s3.spec, 0.0, s3.r0) - optimal_strategy(zero, s3.spec, 0.0, s3.r0))(1);
        });
        out.require(std::abs(second.mean) <= 3.0 * second.standard_error,
                    "gamma3 = 0: regression (pi_hat - pi)_2 = " + num(second.mean) + " +- " +
                        num(second.standard_error) + " (3 batch SE)");
    }

    {
        const ScenarioConfig cfg = config("crack-spread", R"("parameters": {"gamma4": 0.0})", "c4-gamma4");
        const Solved s = solve(cfg);
        const MarketSpec& spec = s.sc.spec;
        const int n = 20000;
        const PathEnsemble test = simulate_paths(spec, s.sc.t0, s.sc.r0, n, cfg.solver.n_steps, cfg.solver.seed + 1);
        std::vector<double> gains(n, 0.0), claim(n);
        for (int step = 0; step < test.n_steps; ++step) {
            const double t = test.time(step);
            parallel_for(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t e) {
                for (std::size_t k = b; k < e; ++k) {
                    const int i = static_cast<int>(k);
                    const Vector r = test.states[step].col(i);
                    const Vector delta = optimal_strategy(*s.with, spec, t, r) - optimal_strategy(*s.zero, spec, t, r);
                    const Vector dw = test.increments[step].col(i);
                    gains[k] += delta.dot(spec.asset_drift(t, r) * test.step + spec.asset_vol(t, r) * dw);
                }
            });
        }
        for (int i = 0; i < n; ++i) claim[i] = spec.payoff(test.states.back().col(i));
        auto variance = [](const std::vector<double>& x) {
            double mean = 0.0, ss = 0.0;
            for (double v : x) mean += v;
            mean /= static_cast<double>(x.size());
            for (double v : x) ss += (v - mean) * (v - mean);
            return ss / static_cast<double>(x.size() - 1);
        };
        std::vector<double> hedged(n);
        for (int i = 0; i < n; ++i) hedged[i] = claim[i] - gains[i];
        const double ratio = variance(hedged) / variance(claim);
        out.require(ratio <= 0.05, "gamma4 = 0: hedged P&L variance / unhedged = " + num(ratio) + " (5%), " +
                                       std::to_string(n) + " out-of-sample paths");
    }
    return out;
}

// Criterion 5: marginal utility price three ways.
Outcome marginal_utility() {
    Outcome out;
    for (const auto& id : kBuiltins) {
        const RunReport r = run(config(id, "", "c5-" + id), Command::Mup);
        require_check(out, r, "MUP linear BSDE vs Girsanov (3 sigma)");
        require_check(out, r, "MUP q-bump vs Girsanov");
        require_check(out, r, "MUP q-bump vs linear BSDE");
        require_check(out, r, "Girsanov weights average to one (3 sigma)");
    }
    return out;
}

// Criterion 6: invariants.
Outcome invariants() {
    Outcome out;
    {
        const ScenarioConfig cfg = config("weather-chdd", "", "c6-cash");
        const Solved s = solve(cfg);
        const RegressionBasis basis{cfg.solver.degree, true};
        double y_err = 0.0, z_err = 0.0;
        for (double c : {-5.0, 2.5, 100.0}) {
            const BsdeSolution moved = solve_backward(s.ens, s.sc.spec, shifted(s.sc.spec.payoff, c), basis);
            const double scale = 1.0 + std::abs(c) + s.sc.spec.payoff.sup_norm;
            for (std::size_t k = 0; k < moved.y.size(); ++k)
                y_err = std::max(y_err, ((moved.y[k] - s.with->y[k]).array() - c).abs().maxCoeff() / scale);
            for (std::size_t k = 0; k < moved.z.size(); ++k)
                z_err = std::max(z_err, (moved.z[k] - s.with->z[k]).cwiseAbs().maxCoeff() /
                                            (1.0 + s.with->z[k].cwiseAbs().maxCoeff()));
        }
        out.require(y_err <= 1e-12 && z_err <= 1e-10,
                    "cash invariance: max relative Y shift error " + num(y_err) + ", Z error " + num(z_err));
    }
    {
        const ScenarioConfig cfg =
            config("weather-chdd", R"("payoff": {"type": "constant", "value": 0})", "c6-zero");
        const Solved s = solve(cfg);
        double worst_p = 0.0, worst_delta = 0.0;
        for (int step : {0, s.ens.n_steps / 4, s.ens.n_steps / 2, 3 * s.ens.n_steps / 4}) {
            const double t = s.ens.time(step);
            for (int i = 0; i < 50; ++i) {
                const Vector r = s.ens.states[step].col(i);
                worst_p = std::max(worst_p, std::abs(s.price.value(step, r)));
                worst_delta = std::max(worst_delta, derivative_hedge(s.price, s.sc.spec, t, r).cwiseAbs().maxCoeff());
                worst_delta = std::max(worst_delta, (optimal_strategy(*s.with, s.sc.spec, t, r) -
                                                     optimal_strategy(*s.zero, s.sc.spec, t, r))
                                                        .cwiseAbs()
                                                        .maxCoeff());
            }
        }
        out.require(worst_p <= 1e-9 && worst_delta <= 1e-9,
                    "F = 0: max |p| = " + num(worst_p) + ", max |Delta| = " + num(worst_delta));
    }
    {
        double worst = 0.0;
        for (const auto& id : kBuiltins) {
            const Scenario sc = build_scenario(config(id, "", "c6-projector"));
            const PathEnsemble ens = simulate_paths(sc.spec, sc.t0, sc.r0, 2000, 10, 7);
            for (int step = 0; step <= ens.n_steps; step += 2)
                for (int i = 0; i < ens.n_paths; ++i) {
                    const Matrix P = make_context(sc.spec, ens.time(step), ens.states[step].col(i)).projector;
                    worst = std::max(worst, (P * P - P).cwiseAbs().maxCoeff());
                    worst = std::max(worst, (P - P.transpose()).cwiseAbs().maxCoeff());
                }
        }
        out.require(worst <= 1e-10, "projector idempotence and symmetry on every built-in: " + num(worst));
    }
    for (const std::string id : {"complete-market-bs", "weather-chdd"}) {
        const ScenarioConfig cfg = config(id, "", "c6-dp");
        const Scenario sc = build_scenario(cfg);
        const PathEnsemble ens = simulate_paths(sc.spec, sc.t0, sc.r0, cfg.solver.n_paths, cfg.solver.n_steps,
                                                cfg.solver.seed, 0, cfg.solver.antithetic);
        const double r0 = sc.r0(0);
        const std::vector<Vector> points{Vector::Constant(1, 0.9 * r0), Vector::Constant(1, r0),
                                         Vector::Constant(1, 1.1 * r0)};
        const auto result = markov_consistency(sc.spec, ens, TerminalKind::WithClaim, {cfg.solver.degree, true},
                                               ens.n_steps / 2, points, 20000, cfg.solver.seed + 99);
        for (const auto& pt : result)
            out.require(pt.ok, id + ": dynamic programming at r = " + num(pt.state(0)) + ": fitted " + num(pt.fitted) +
                                   ", re-solved " + num(pt.resolved) + ", SE " + num(pt.standard_error) + " (2 SE)");
    }
    for (const RunReport& r : verify_reports()) require_check(out, r, "Lipschitz audit slope in [0.9, 1.1]");
    {
        const ScenarioConfig cfg = config("weather-chdd", R"("payoff": {"type": "digital", "strike": 100})", "c6-digital");
        const Scenario sc = build_scenario(cfg);
        const LipschitzAudit audit =
            lipschitz_audit(sc.spec, sc.spec.payoff, sc.t0, sc.r0, {0.01, 0.02, 0.04}, cfg.solver.n_paths,
                            cfg.solver.n_steps, cfg.solver.seed, {cfg.solver.degree, true}, 0, cfg.solver.antithetic);
        out.require(!audit.ok, "digital payoff flagged: " + audit.finding);
    }
    return out;
}

// Criterion 7: gradient equation and flow.
Outcome gradients() {
    Outcome out;
    for (const RunReport& r : verify_reports()) {
        require_check(out, r, "gradient BSDE vs common-random-number bump (2%)");
        require_check(out, r, "flow vs path bump (1e-3)");
    }
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Criterion 8: byte-identical outputs under different thread caps.
Outcome determinism() {
    Outcome out;
    const int before = max_threads();
    for (const auto& id : kBuiltins) {
        std::vector<RunReport> reports;
        for (int threads : {1, 4}) {
            set_max_threads(threads);
            ScenarioConfig cfg = config(id, "", "c8-" + id + "-threads" + std::to_string(threads));
            cfg.oracles.pde = false;
            reports.push_back(run(cfg, Command::Hedge));
        }
        int compared = 0;
        bool same = true;
        for (const auto& file : reports[0].files) {
            if (fs::path(file).extension() != ".csv") continue;
            ++compared;
            same = same && slurp(g_out / ("c8-" + id + "-threads1") / file) ==
                               slurp(g_out / ("c8-" + id + "-threads4") / file);
        }
        out.require(same && compared > 0, id + ": " + std::to_string(compared) + " CSV files identical under 1 and 4 threads");
    }
    set_max_threads(before);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) g_out = argv[1];
    fs::create_directories(g_out);
    struct Entry {
        const char* name;
        Outcome (*fn)();
    };
    const std::vector<Entry> criteria{
        {"complete-market replication", complete_market},
        {"regression vs PDE oracle", oracle_equivalence},
        {"hedge triangulation", triangulation},
        {"crack-spread algebra and hedge", crack_spread},
        {"marginal utility price triangulation", marginal_utility},
        {"invariant suite", invariants},
        {"gradient checks", gradients},
        {"determinism across thread caps", determinism},
    };
    int failed = 0;
    for (std::size_t c = 0; c < criteria.size(); ++c) {
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = criteria[c].fn();
        } catch (const std::exception& e) {
            out.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("criterion %zu: %s - %s (%.0f s)\n", c + 1, out.pass ? "PASS" : "FAIL", criteria[c].name, secs);
        for (const auto& d : out.details) std::printf("    %s\n", d.c_str());
        std::fflush(stdout);
        if (!out.pass) ++failed;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
