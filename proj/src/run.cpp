#include "basisrisk/run.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>

#include "basisrisk/generator.hpp"
#include "basisrisk/gradient_verify.hpp"
#include "basisrisk/pde_oracle.hpp"

namespace basisrisk {

namespace fs = std::filesystem;

namespace {

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

std::string vec(const Vector& v) {
    std::string out = "(";
    for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? ", " : "") + num(v(i));
    return out + ")";
}

double relative_gap(const Vector& a, const Vector& b) {
    const double scale = std::max(a.norm(), b.norm());
    return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

struct Session {
    ScenarioConfig cfg;
    Scenario sc;
    RegressionBasis basis;
    PathEnsemble ens;
    std::shared_ptr<const BsdeSolution> with, zero;
    PriceField price;
    RunReport report;
    fs::path out;

    void check(std::string name, bool passed, std::string detail) {
        report.checks.push_back({std::move(name), passed, std::move(detail)});
    }

    std::ofstream open(const std::string& file) {
        report.files.push_back(file);
        std::ofstream f(out / file, std::ios::binary);
        if (!f) throw std::runtime_error("run: cannot write " + (out / file).string());
        return f;
    }
};

Session prepare(const ScenarioConfig& cfg, Command command) {
    Session s;
    s.cfg = cfg;
    s.sc = build_scenario(cfg);
    s.basis.degree = cfg.solver.degree;
    s.out = cfg.output.dir;
    fs::create_directories(s.out);

    RunReport& r = s.report;
    r.command = command;
    r.scenario = s.sc.id;
    r.config_hash = cfg.hash();
    r.seed = cfg.solver.seed;
    r.n_paths = cfg.solver.n_paths;
    r.n_steps = cfg.solver.n_steps;
    r.degree = cfg.solver.degree;
    r.antithetic = cfg.solver.antithetic;
    r.payoff = s.sc.spec.payoff.description;
    r.notes = s.sc.notes;
    r.notes.push_back("sign convention: p = u - u_hat (no claim minus with claim), so a constant claim c has p = -c; "
                      "the buyer-style price is -p");
    r.notes.push_back("strategies are reported without certification of the admissibility condition");

    const MarketSpec& spec = s.sc.spec;
    const AssumptionAudit audit = audit_assumptions(spec, {s.sc.t0, spec.horizon}, {s.sc.r0});
    for (const auto& v : audit.violations) r.notes.push_back("assumption audit: " + v);
    if (make_context(spec, s.sc.t0, s.sc.r0).jitter_used) r.notes.push_back("Cholesky jitter 1e-12 used at r0");

    s.ens = simulate_paths(spec, s.sc.t0, s.sc.r0, cfg.solver.n_paths, cfg.solver.n_steps, cfg.solver.seed, 0,
                           cfg.solver.antithetic);
    s.with = std::make_shared<const BsdeSolution>(solve_backward(s.ens, spec, TerminalKind::WithClaim, s.basis));
    s.zero = std::make_shared<const BsdeSolution>(solve_backward(s.ens, spec, TerminalKind::ZeroClaim, s.basis));
    s.price = indifference_price(s.with, s.zero);

    const double t0 = s.sc.t0;
    const Vector& r0 = s.sc.r0;
    r.price = s.price.value(0, r0);
    r.grad_p = s.price.gradient(0, r0);
    r.pi = optimal_strategy(*s.zero, spec, t0, r0);
    r.pi_hat = optimal_strategy(*s.with, spec, t0, r0);
    r.delta = r.pi_hat - r.pi;
    r.delta_formula = derivative_hedge(s.price, spec, t0, r0);

    if (spec.payoff.smoothness != Smoothness::Smooth)
        r.notes.push_back(std::string("payoff is ") +
                          (spec.payoff.smoothness == Smoothness::Kinked ? "kinked" : "discontinuous") +
                          "; the differentiability hypotheses behind gradient-based outputs (hedges, gradient checks) "
                          "do not hold everywhere");
    for (const BsdeSolution* sol : {s.with.get(), s.zero.get()})
        for (const auto& note : sol->diagnostics.notes) r.notes.push_back(std::string(to_string(sol->kind)) + ": " + note);

    // Checks every command shares.
    const long clips = s.with->diagnostics.clip_events + s.zero->diagnostics.clip_events;
    const long evals = s.with->diagnostics.driver_evaluations + s.zero->diagnostics.driver_evaluations;
    const double clip_rate = evals ? static_cast<double>(clips) / evals : 0.0;
    s.check("clip rate below 0.1%", clip_rate < 1e-3, std::to_string(clips) + " of " + std::to_string(evals));

    double theta_bound = 0.0;
    for (int step = 0; step < s.ens.n_steps; step += std::max(1, s.ens.n_steps / 10))
        for (int i = 0; i < s.ens.n_paths; i += std::max(1, s.ens.n_paths / 200))
            theta_bound = std::max(theta_bound, make_context(spec, s.ens.time(step), s.ens.states[step].col(i)).theta.norm());
    const double bound = spec.payoff.sup_norm + driver_growth_constant(theta_bound, spec.eta) * (spec.horizon - t0);
    double sup_y = 0.0;
    for (const auto& y : s.with->y) sup_y = std::max(sup_y, y.cwiseAbs().maxCoeff());
    s.check("solution bounded by |F| + cT", sup_y <= bound, "sup |Y| = " + num(sup_y) + ", bound " + num(bound));

    const double gap = relative_gap(r.delta, r.delta_formula);
    const bool tiny = std::max(r.delta.norm(), r.delta_formula.norm()) < 1e-9;
    s.check("hedge formula equivalence at r0 (2%)", tiny || gap <= 0.02,
            "pi_hat - pi = " + vec(r.delta) + ", -grad p rho beta^*(beta beta^*)^-1 = " + vec(r.delta_formula));

    {
        auto f = s.open("solution_with.csv");
        s.with->export_csv(f, cfg.output.max_paths);
        auto g = s.open("solution_zero.csv");
        s.zero->export_csv(g, cfg.output.max_paths);
    }
    return s;
}

std::vector<std::pair<int, Vector>> report_points(const Session& s) {
    std::vector<std::pair<int, Vector>> points{{0, s.sc.r0}};
    const int n = s.ens.n_steps;
    const int per_step = std::min(20, s.ens.n_paths);
    for (int q = 1; q <= 3; ++q) {
        const int step = q * n / 4;
        if (step <= 0 || step >= n) continue;
        for (int i = 0; i < per_step; ++i) points.emplace_back(step, s.ens.states[step].col(i));
    }
    return points;
}

void pde_price_check(Session& s) {
    if (!s.cfg.oracles.pde || s.sc.spec.m > 2) return;
    PdeGrid grid;
    grid.nodes = s.cfg.oracles.pde_nodes;
    const MarketSpec& spec = s.sc.spec;
    const PdeSolution with = pde_oracle(spec, spec.payoff, s.sc.t0, s.sc.r0, grid);
    const PdeSolution zero = pde_oracle(spec, zero_payoff(spec.m), s.sc.t0, s.sc.r0, grid);
    const double p_pde = zero.value(0, s.sc.r0) - with.value(0, s.sc.r0);
    const double rel = std::abs(s.report.price - p_pde) / std::max(std::abs(p_pde), 0.01);
    if (spec.m == 1)
        s.check("regression price vs PDE oracle (1%)", rel <= 0.01,
                "p_reg = " + num(s.report.price) + ", p_pde = " + num(p_pde));
    else
        s.report.notes.push_back("PDE oracle price " + num(p_pde) + " (relative gap " + num(rel) +
                                 "; m = 2 grid is coarse, reported only)");
}

void write_plot(Session& s, const HedgeReport& hedge) {
    auto f = s.open("plot.csv");
    hedge.export_plot(f);
}

void run_mup(Session& s) {
    const MarketSpec& spec = s.sc.spec;
    const Payoff& claim = spec.payoff;
    const int batches = s.cfg.oracles.batches;
    const MupEstimate linear = linear_bsde_mup(spec, s.ens, claim, s.basis, batches);
    const MupEstimate girsanov = girsanov_mup(*s.zero, s.ens, claim);
    const MupEstimate bump = mup_by_bump(spec, s.ens, claim, s.basis, s.cfg.oracles.q_step, batches);
    const MupEstimate weights = girsanov_weight_mean(*s.zero, s.ens);
    auto& mup = s.report.mup;
    mup = {{"linear-bsde", linear}, {"girsanov", girsanov}, {"q-bump", bump}, {"girsanov-weight-mean", weights}};
    if (!girsanov.warning.empty()) s.report.notes.push_back("girsanov: " + girsanov.warning);

    auto agree = [&](const char* name, const MupEstimate& a, const MupEstimate& b, double floor) {
        const double tol = std::max(3.0 * std::hypot(a.standard_error, b.standard_error), floor);
        s.check(name, std::abs(a.value - b.value) <= tol,
                num(a.value) + " vs " + num(b.value) + ", tolerance " + num(tol));
    };
    const double q = s.cfg.oracles.q_step;
    const double bump_floor = 5.0 * q * q * std::abs(linear.value);
    agree("MUP linear BSDE vs Girsanov (3 sigma)", linear, girsanov, 0.0);
    agree("MUP q-bump vs Girsanov", bump, girsanov, bump_floor);
    agree("MUP q-bump vs linear BSDE", bump, linear, bump_floor);
    s.check("Girsanov weights average to one (3 sigma)", std::abs(weights.value - 1.0) <= 3.0 * weights.standard_error,
            num(weights.value) + " +- " + num(weights.standard_error));

    auto f = s.open("mup.csv");
    f << "estimator,value,standard_error\n";
    for (const auto& [name, est] : mup) f << name << ',' << num(est.value) << ',' << num(est.standard_error) << '\n';
}

void run_verify(Session& s) {
    const MarketSpec& spec = s.sc.spec;
    const double t0 = s.sc.t0;
    const Vector& r0 = s.sc.r0;
    std::ostringstream text;
    auto f = s.open("verify.csv");
    f << "check,value\n";

    // Flow against a path bump on common random numbers.
    {
        const int paths = std::min(2000, s.ens.n_paths);
        const PathEnsemble base = simulate_flow(spec, s.ens.slice(0, paths));
        double err = 0.0, ref = 0.0;
        for (int j = 0; j < spec.m; ++j) {
            Vector moved = r0;
            const double eps = 1e-4;
            moved(j) += eps;
            const PathEnsemble bumped =
                simulate_paths(spec, t0, moved, paths, s.ens.n_steps, s.ens.seed, 0, s.ens.antithetic);
            for (int i = 0; i < paths; ++i) {
                const Vector fd = (bumped.states.back().col(i) - base.states.back().col(i)) / eps;
                const Vector phi = base.flow(base.n_steps, i).col(j);
                err += (fd - phi).squaredNorm();
                ref += phi.squaredNorm();
            }
        }
        const double rel = ref > 0.0 ? std::sqrt(err / ref) : std::sqrt(err);
        s.check("flow vs path bump (1e-3)", rel <= 1e-3, "relative L2 " + num(rel));
        f << "flow_vs_bump," << num(rel) << '\n';
    }

    const Vector bump_with = bump_gradient(spec, spec.payoff, t0, r0, s.ens.n_paths, s.ens.n_steps, s.ens.seed, s.basis,
                                           s.ens.antithetic);
    f << "bump_grad_y0";
    for (Eigen::Index j = 0; j < bump_with.size(); ++j) f << (j ? ";" : ",") << num(bump_with(j));
    f << '\n';

    if (!spec.payoff.differentiable()) {
        s.report.notes.push_back("gradient BSDE skipped: the payoff has no gradient; bump gradient " + vec(bump_with) +
                                 " reported instead");
    } else {
        const PathEnsemble flow = simulate_flow(spec, s.ens);
        const GradientSolution g_with = solve_gradient_bsde(*s.with, flow, spec, s.basis);
        const GradientSolution g_zero = solve_gradient_bsde(*s.zero, flow, spec, s.basis);
        const Vector grad_with = g_with.initial_gradient();
        const double rel = relative_gap(grad_with, bump_with);
        s.check("gradient BSDE vs common-random-number bump (2%)", rel <= 0.02,
                "grad Y0 = " + vec(grad_with) + ", bump " + vec(bump_with));
        f << "gradient_bsde_vs_bump," << num(rel) << '\n';

        const Vector delta_grad = hedge_from_gradient(spec, t0, r0, g_zero.initial_gradient() - grad_with);
        const double tri1 = relative_gap(delta_grad, s.report.delta_formula);
        const double tri2 = relative_gap(delta_grad, s.report.delta);
        const bool tiny = delta_grad.norm() < 1e-9 && s.report.delta_formula.norm() < 1e-9;
        s.check("hedge triangulation with gradient BSDE (3%)", tiny || (tri1 <= 0.03 && tri2 <= 0.03),
                "gradient BSDE " + vec(delta_grad) + ", formula " + vec(s.report.delta_formula) + ", pi_hat - pi " +
                    vec(s.report.delta));
        f << "hedge_gradient_vs_formula," << num(tri1) << "\nhedge_gradient_vs_strategies," << num(tri2) << '\n';

        const ZRepresentationReport z = check_z_representation(*s.with, g_with, flow, spec);
        s.check("singular flow exclusions at most 0.1%", z.exclusions_ok,
                std::to_string(z.excluded_paths) + " paths excluded");
        text << "Z vs grad_x Y Phi^-1 rho: relative L2 " << num(z.discrepancy) << " (first step "
             << num(z.step_discrepancy.front()) << ", last step " << num(z.step_discrepancy.back()) << ")\n";
        f << "z_representation," << num(z.discrepancy) << '\n';
    }

    const LipschitzAudit audit = lipschitz_audit(spec, spec.payoff, t0, r0, {0.01, 0.02, 0.04}, s.ens.n_paths,
                                                 s.ens.n_steps, s.ens.seed, s.basis, 0, s.ens.antithetic);
    if (spec.payoff.smoothness == Smoothness::Discontinuous)
        s.check("Lipschitz audit flags the discontinuous payoff", !audit.ok, audit.finding);
    else
        s.check("Lipschitz audit slope in [0.9, 1.1]", audit.slope >= 0.9 && audit.slope <= 1.1, audit.finding);
    f << "lipschitz_slope," << num(audit.slope) << '\n';
    text << "Lipschitz audit: " << audit.finding << '\n';
    s.report.sections.emplace_back("gradient verification", text.str());
}

}  // namespace

const char* to_string(Command command) {
    switch (command) {
        case Command::Price: return "price";
        case Command::Hedge: return "hedge";
        case Command::Mup: return "mup";
        case Command::Verify: return "verify";
        case Command::Compare: return "compare";
    }
    return "?";
}

bool RunReport::passed() const {
    for (const auto& c : checks)
        if (!c.passed) return false;
    return true;
}

void RunReport::write_text(std::ostream& out) const {
    out << "basisrisk " << kVersion << " - " << to_string(command) << '\n';
    out << "scenario: " << scenario << "\nconfig hash: " << config_hash << "\nseed: " << seed
        << "\npaths: " << n_paths << (antithetic ? " (antithetic)" : "") << "\nsteps: " << n_steps
        << "\nbasis degree: " << degree << "\npayoff: " << payoff << "\n\n";
    out << "indifference price p(t0, r0): " << num(price) << "\n";
    out << "buyer-style price -p:         " << num(-price) << "\n";
    if (grad_p.size()) {
        out << "grad_r p:                     " << vec(grad_p) << "\n";
        out << "pi (no claim):                " << vec(pi) << "\n";
        out << "pi_hat (with claim):          " << vec(pi_hat) << "\n";
        out << "Delta = pi_hat - pi:          " << vec(delta) << "\n";
        out << "Delta from grad p:            " << vec(delta_formula) << "\n";
    }
    if (!mup.empty()) {
        out << "\nmarginal utility price\n";
        for (const auto& [name, est] : mup)
            out << "  " << name << ": " << num(est.value) << " +- " << num(est.standard_error) << '\n';
    }
    for (const auto& [title, body] : sections) out << '\n' << title << '\n' << body;
    if (!notes.empty()) {
        out << "\nnotes\n";
        for (const auto& n : notes) out << "  - " << n << '\n';
    }
    out << "\nchecks\n";
    for (const auto& c : checks) out << "  [" << (c.passed ? "PASS" : "FAIL") << "] " << c.name << ": " << c.detail << '\n';
    if (!files.empty()) {
        out << "\nfiles\n";
        for (const auto& f : files) out << "  " << f << '\n';
    }
    out << "\nresult: " << (passed() ? "all checks passed" : "invariant failure") << '\n';
}

RunReport run(const ScenarioConfig& cfg, Command command) {
    if (command == Command::Compare) return compare_oracles(cfg);
    Session s = prepare(cfg, command);

    const bool want_mup_column = command == Command::Hedge || command == Command::Mup;
    std::unique_ptr<BsdeSolution> mup;
    if (want_mup_column)
        mup = std::make_unique<BsdeSolution>(
            solve_linear_bsde(s.ens, s.sc.spec, s.sc.spec.payoff, driver_slope(s.zero, s.ens), s.basis));
    const HedgeReport hedge = build_hedge_report(s.price, s.sc.spec, report_points(s), mup.get());
    s.check("Delta equals pi_hat - pi (1e-10)", hedge.max_hedge_gap() <= 1e-10, "max gap " + num(hedge.max_hedge_gap()));
    write_plot(s, hedge);
    if (command == Command::Hedge || command == Command::Mup) {
        auto f = s.open("hedge.csv");
        hedge.export_csv(f);
    }
    if (command == Command::Price || command == Command::Hedge) pde_price_check(s);
    if (command == Command::Mup && cfg.oracles.mup) run_mup(s);
    if (command == Command::Verify) run_verify(s);

    auto f = s.open("report.txt");
    s.report.write_text(f);
    return s.report;
}

RunReport compare_oracles(const ScenarioConfig& cfg) {
    ScenarioConfig probe = cfg;
    const Scenario sc = build_scenario(probe);
    if (sc.spec.m > 2)
        throw UnsupportedOracleError("compare: the PDE oracle supports m <= 2, scenario has m = " +
                                     std::to_string(sc.spec.m));
    Session s = prepare(cfg, Command::Compare);
    const MarketSpec& spec = s.sc.spec;
    const double t0 = s.sc.t0;
    const Vector& r0 = s.sc.r0;

    PdeGrid grid;
    grid.nodes = cfg.oracles.pde_nodes;
    grid.snapshots = s.ens.n_steps;
    auto pde_with = std::make_shared<const PdeSolution>(pde_oracle(spec, spec.payoff, t0, r0, grid));
    auto pde_zero = std::make_shared<const PdeSolution>(pde_oracle(spec, zero_payoff(spec.m), t0, r0, grid));
    const PriceField pde = PriceField::from_pde(pde_with, pde_zero, spec.eta);

    const double p_reg = s.report.price;
    const double p_pde = pde.value(0, r0);
    const double rel = std::abs(p_reg - p_pde) / std::max(std::abs(p_pde), 0.01);
    const Vector g_pde = pde.gradient(0, r0);
    const double g_rel = relative_gap(s.report.grad_p, g_pde);
    if (spec.m == 1)
        s.check("regression price vs PDE at r0 (1%)", rel <= 0.01, num(p_reg) + " vs " + num(p_pde));
    else
        s.report.notes.push_back("m = 2: price gap " + num(rel) + " reported only (coarse PDE grid)");

    // Z against grad u rho on interior points: the start and mid-horizon paths inside the grid's central band.
    auto z_gap = [&](int step) {
        double err = 0.0, ref = 0.0;
        int used = 0;
        const double t = s.ens.time(step);
        const int count = step == 0 ? 1 : s.ens.n_paths;
        for (int i = 0; i < count; ++i) {
            const Vector r = s.ens.states[step].col(i);
            if (!pde_with->interior(r, 0.25)) continue;
            const Vector expected = spec.index_vol(t, r).transpose() * pde_with->gradient(step, r);
            err += (s.with->z[step].col(i) - expected).squaredNorm();
            ref += expected.squaredNorm();
            ++used;
        }
        return std::pair{ref > 0.0 ? std::sqrt(err / ref) : std::sqrt(err), used};
    };
    const auto [z0, n0] = z_gap(0);
    const auto [zmid, nmid] = z_gap(s.ens.n_steps / 2);
    s.check("Z vs grad u rho at interior points (2%)", std::max(z0, zmid) <= 0.02,
            "start " + num(z0) + ", mid-horizon " + num(zmid) + " over " + std::to_string(nmid) + " paths");

    std::ostringstream text;
    text << "PDE grid: " << pde_with->nodes[0] << (spec.m == 2 ? " x " + std::to_string(pde_with->nodes[1]) : "")
         << " nodes, " << pde_with->time_steps << " time steps\n";
    text << "p: regression " << num(p_reg) << ", PDE " << num(p_pde) << ", relative gap " << num(rel) << '\n';
    text << "grad p: regression " << vec(s.report.grad_p) << ", PDE " << vec(g_pde) << ", relative gap " << num(g_rel)
         << '\n';
    (void)n0;

    auto f = s.open("compare.csv");
    f << "quantity,regression,pde,relative_gap\n";
    f << "p," << num(p_reg) << ',' << num(p_pde) << ',' << num(rel) << '\n';
    for (Eigen::Index j = 0; j < g_pde.size(); ++j)
        f << "grad_p_" << j + 1 << ',' << num(s.report.grad_p(j)) << ',' << num(g_pde(j)) << ','
          << num(std::abs(s.report.grad_p(j) - g_pde(j)) / std::max(std::abs(g_pde(j)), 1e-12)) << '\n';
    f << "z_start,,," << num(z0) << "\nz_mid,,," << num(zmid) << '\n';

    if (spec.m == 1) {
        // Refinement: doubled paths should move toward the oracle, or stay within the oracle's own refinement delta.
        ScenarioConfig doubled = cfg;
        doubled.solver.n_paths *= 2;
        const Scenario sc2 = build_scenario(doubled);
        const PathEnsemble ens2 = simulate_paths(sc2.spec, t0, r0, doubled.solver.n_paths, doubled.solver.n_steps,
                                                 doubled.solver.seed, 0, doubled.solver.antithetic);
        const double p2 = solve_backward(ens2, sc2.spec, TerminalKind::ZeroClaim, s.basis).initial_value() -
                          solve_backward(ens2, sc2.spec, TerminalKind::WithClaim, s.basis).initial_value();
        PdeGrid fine = grid;
        fine.nodes = 2 * pde_with->nodes[0] - 1;
        fine.snapshots = 1;
        const double p_fine = pde_oracle(spec, zero_payoff(1), t0, r0, fine).value(0, r0) -
                              pde_oracle(spec, spec.payoff, t0, r0, fine).value(0, r0);
        const double pde_delta = std::abs(p_fine - p_pde);
        const double before = std::abs(p_reg - p_pde), after = std::abs(p2 - p_pde);
        s.check("doubling paths moves toward the oracle", after <= before || after <= pde_delta,
                "|gap| " + num(before) + " -> " + num(after) + ", PDE refinement delta " + num(pde_delta));
        text << "refinement: 2N paths p = " << num(p2) << ", PDE at " << fine.nodes << " nodes p = " << num(p_fine) << '\n';
    }
    s.report.sections.emplace_back("oracle comparison", text.str());

    auto r = s.open("report.txt");
    s.report.write_text(r);
    return s.report;
}

}  // namespace basisrisk
