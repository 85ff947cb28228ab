#include <cmath>

#include "basisrisk/gradient_verify.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace basisrisk;

namespace {

const RegressionBasis kBasis{3, true};

struct Setup {
    MarketSpec spec;
    PathEnsemble ens;
    BsdeSolution sol;
    GradientSolution grad;
};

Setup setup(MarketSpec spec, const Vector& r0, int paths, int steps, std::uint64_t seed) {
    Setup s;
    s.spec = std::move(spec);
    s.ens = simulate_flow(s.spec, simulate_paths(s.spec, 0.0, r0, paths, steps, seed, 0, true));
    s.sol = solve_backward(s.ens, s.spec, TerminalKind::WithClaim, kBasis);
    s.grad = solve_gradient_bsde(s.sol, s.ens, s.spec, kBasis);
    return s;
}

MarketSpec bs_market() {
    MarketSpec spec = oracle::gbm_market(0.05, 0.2);
    spec.payoff = call_payoff(0, 100.0, 200.0);
    return spec;
}

}  // namespace

TEST_CASE("constant claim under constant coefficients has zero gradient") {
    Matrix rho(1, 2);
    rho << 0.3, 0.1;
    MarketSpec spec = oracle::constant_market(Vector::Constant(1, 0.01), rho, Vector::Constant(1, 0.04),
                                              Matrix::Constant(1, 2, 0.2));
    spec.payoff = constant_payoff(1, 3.0);
    const Setup s = setup(spec, Vector::Zero(1), 2000, 10, 1);
    for (const auto& g : s.grad.grad_y) CHECK(g.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("terminal slice is grad F Phi_T") {
    MarketSpec spec = oracle::basis_risk_market(0.02, 0.25, 0.05, 0.2, 0.15, 0.05);
    spec.payoff = call_payoff(0, 100.0, 60.0);
    const Setup s = setup(spec, Vector::Constant(1, 100.0), 2000, 10, 2);
    for (int i = 0; i < s.ens.n_paths; ++i) {
        const Vector rt = s.ens.states.back().col(i);
        const double expected = spec.payoff.gradient(rt)(0) * s.ens.flow(10, i)(0, 0);
        CHECK(s.grad.grad_y.back()(0, i) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("complete market gradient is the Black-Scholes delta") {
    const Setup s = setup(bs_market(), Vector::Constant(1, 100.0), 50000, 50, 3);
    const double delta = oracle::bs_capped_call_delta(100.0, 100.0, 200.0, 0.2, 1.0);
    CHECK(s.grad.initial_gradient()(0) == doctest::Approx(delta).epsilon(0.01));
}

TEST_CASE("gradient BSDE agrees with a common-random-number bump") {
    MarketSpec spec = oracle::basis_risk_market(0.02, 0.25, 0.05, 0.2, 0.15, 0.05);
    spec.payoff = call_payoff(0, 100.0, 60.0);
    const Vector r0 = Vector::Constant(1, 100.0);
    const Setup s = setup(spec, r0, 50000, 50, 4);
    const Vector bump = bump_gradient(spec, spec.payoff, 0.0, r0, 50000, 50, 4, kBasis, true);
    const double g = s.grad.initial_gradient()(0);
    CHECK(std::abs(g - bump(0)) <= 0.02 * std::abs(bump(0)));
}

TEST_CASE("Z representation") {
    SUBCASE("deterministic index") {
        MarketSpec spec = oracle::constant_market(Vector::Constant(1, 0.1), Matrix::Zero(1, 1), Vector::Constant(1, 0.05),
                                                  Matrix::Constant(1, 1, 0.2));
        spec.payoff = call_payoff(0, 0.05, 1.0);
        const Setup s = setup(spec, Vector::Zero(1), 2000, 10, 5);
        const ZRepresentationReport z = check_z_representation(s.sol, s.grad, s.ens, s.spec);
        for (const auto& zz : s.sol.z) CHECK(zz.cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(z.discrepancy <= 1e-12);
    }
    SUBCASE("complete-market call") {
        const Setup s = setup(bs_market(), Vector::Constant(1, 100.0), 50000, 50, 6);
        const ZRepresentationReport z = check_z_representation(s.sol, s.grad, s.ens, s.spec);
        CAPTURE(z.step_discrepancy.front());
        CAPTURE(z.step_discrepancy[25]);
        CAPTURE(z.step_discrepancy.back());
        CHECK(z.discrepancy <= 0.03);
        CHECK(z.exclusions_ok);
        CHECK(z.excluded_paths == 0);
    }
    SUBCASE("path doubling does not increase the discrepancy") {
        std::vector<double> d;
        for (int paths : {5000, 10000, 20000, 40000}) {
            const Setup s = setup(bs_market(), Vector::Constant(1, 100.0), paths, 25, 7);
            d.push_back(check_z_representation(s.sol, s.grad, s.ens, s.spec).discrepancy);
        }
        for (int j = 0; j + 1 < 4; ++j) {
            CAPTURE(j);
            CHECK(d[j + 1] <= 1.1 * d[j]);
        }
    }
}

TEST_CASE("gradient equation is linear in the claim when the driver is linear") {
    const Vector r0 = Vector::Constant(1, 100.0);
    MarketSpec a = oracle::gbm_market(0.05, 0.2), b = a, ab = a;
    a.payoff = call_payoff(0, 100.0, 60.0);
    b.payoff = put_payoff(0, 90.0, 60.0);
    ab.payoff = combination(1.0, a.payoff, 2.0, b.payoff);
    const double ga = setup(a, r0, 10000, 20, 8).grad.initial_gradient()(0);
    const double gb = setup(b, r0, 10000, 20, 8).grad.initial_gradient()(0);
    const double gab = setup(ab, r0, 10000, 20, 8).grad.initial_gradient()(0);
    CHECK(gab == doctest::Approx(ga + 2.0 * gb).epsilon(1e-9));
}

TEST_CASE("Lipschitz audit") {
    const Vector r0 = Vector::Constant(1, 100.0);
    const std::vector<double> distances{0.01, 0.02, 0.04};
    SUBCASE("smooth dependence on the start state") {
        const MarketSpec spec = bs_market();
        const LipschitzAudit audit = lipschitz_audit(spec, spec.payoff, 0.0, r0, distances, 20000, 25, 9, kBasis, 0, true);
        CAPTURE(audit.finding);
        CHECK(audit.slope >= 0.9);
        CHECK(audit.slope <= 1.1);
        CHECK(audit.ok);
    }
    SUBCASE("identical start states give zero difference") {
        const MarketSpec spec = bs_market();
        const PathEnsemble ens = simulate_paths(spec, 0.0, r0, 4000, 10, 10);
        const BsdeSolution a = solve_backward(ens, spec, TerminalKind::WithClaim, kBasis);
        const BsdeSolution b = solve_backward(simulate_paths(spec, 0.0, r0, 4000, 10, 10), spec, TerminalKind::WithClaim, kBasis);
        for (std::size_t n = 0; n < a.y.size(); ++n) CHECK((a.y[n] - b.y[n]).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("digital payoff is flagged") {
        MarketSpec spec = oracle::gbm_market(0.05, 0.2);
        spec.payoff = digital_payoff(0, 100.0);
        const LipschitzAudit audit = lipschitz_audit(spec, spec.payoff, 0.0, r0, distances, 20000, 25, 11, kBasis, 0, true);
        CAPTURE(audit.finding);
        CHECK(audit.slope < 0.9);
        CHECK_FALSE(audit.ok);
    }
}

TEST_CASE("gradient equation preconditions") {
    MarketSpec spec = bs_market();
    const PathEnsemble plain = simulate_paths(spec, 0.0, Vector::Constant(1, 100.0), 2000, 10, 12);
    const BsdeSolution sol = solve_backward(plain, spec, TerminalKind::WithClaim, kBasis);
    CHECK_THROWS_AS(solve_gradient_bsde(sol, plain, spec, kBasis), std::invalid_argument);
    spec.payoff = digital_payoff(0, 100.0);
    const PathEnsemble flow = simulate_flow(spec, plain);
    const BsdeSolution digital = solve_backward(flow, spec, TerminalKind::WithClaim, kBasis);
    CHECK_THROWS_AS(solve_gradient_bsde(digital, flow, spec, kBasis), std::invalid_argument);
}
