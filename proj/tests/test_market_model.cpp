#include <cmath>
#include <vector>

#include "basisrisk/market_model.hpp"
#include "basisrisk/parallel.hpp"
#include "basisrisk/philox.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace basisrisk;

TEST_CASE("Philox4x32-10 known-answer vectors") {
    using C = Philox4x32::Counter;
    using K = Philox4x32::Key;
    CHECK(Philox4x32::generate(C{0, 0, 0, 0}, K{0, 0}) == C{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    CHECK(Philox4x32::generate(C{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, K{0xffffffffu, 0xffffffffu}) ==
          C{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    CHECK(Philox4x32::generate(C{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, K{0xa4093822u, 0x299f31d0u}) ==
          C{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("zero coefficients keep every path at r0") {
    const MarketSpec spec = oracle::constant_market(Vector::Zero(1), Matrix::Zero(1, 1), Vector::Constant(1, 0.1),
                                                    Matrix::Constant(1, 1, 0.2));
    const PathEnsemble ens = simulate_paths(spec, 0.0, Vector::Constant(1, 1.3), 50, 10, 3);
    for (const auto& s : ens.states) CHECK((s.array() == 1.3).all());
}

TEST_CASE("driftless GBM is a martingale") {
    const MarketSpec spec = oracle::gbm_market(0.0, 0.3);
    const int n = 40000;
    const PathEnsemble ens = simulate_paths(spec, 0.0, Vector::Constant(1, 2.0), n, 20, 11);
    const Vector rt = ens.states.back().row(0).transpose();
    const double mean = rt.mean();
    const double sd = std::sqrt((rt.array() - mean).square().sum() / (n - 1));
    CHECK(std::abs(mean - 2.0) <= 4.0 * sd / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("Brownian index has variance T") {
    const MarketSpec spec =
        oracle::constant_market(Vector::Zero(1), Matrix::Identity(1, 1), Vector::Zero(1), Matrix::Identity(1, 1), 1.0, 2.0);
    const int n = 40000;
    const PathEnsemble ens = simulate_paths(spec, 0.0, Vector::Zero(1), n, 16, 5);
    const Vector x = ens.states.back().row(0).transpose();
    const double var = (x.array() - x.mean()).square().sum() / (n - 1);
    // Var of the sample variance of N(0, T) is 2 T^2 / (n - 1).
    CHECK(std::abs(var - 2.0) <= 4.0 * std::sqrt(2.0 * 4.0 / (n - 1)));
}

TEST_CASE("Brownian increments have mean 0 and covariance h I") {
    const MarketSpec spec = oracle::constant_market(Vector::Zero(2), Matrix::Identity(2, 3), Vector::Zero(1),
                                                    Matrix::Constant(1, 3, 0.2));
    const int n = 40000, steps = 4;
    const PathEnsemble ens = simulate_paths(spec, 0.0, Vector::Zero(2), n, steps, 9);
    const double h = ens.step;
    for (const auto& dw : ens.increments) {
        const Vector mean = dw.rowwise().mean();
        CHECK(mean.cwiseAbs().maxCoeff() <= 4.0 * std::sqrt(h / n));
        const Matrix cov = dw * dw.transpose() / n;
        // Each entry has standard deviation about h sqrt(2 / n) on the diagonal, h / sqrt(n) off it.
        CHECK((cov - h * Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <= 4.0 * h * std::sqrt(2.0 / n));
    }
}

TEST_CASE("antithetic pairs mirror their increments") {
    const MarketSpec spec = oracle::gbm_market(0.05, 0.2);
    const PathEnsemble ens = simulate_paths(spec, 0.0, Vector::Constant(1, 1.0), 10, 5, 1, 0, true);
    for (const auto& dw : ens.increments)
        for (int i = 0; i < 10; i += 2) CHECK(dw(0, i) == -dw(0, i + 1));
}

TEST_CASE("paths are identical across thread caps and reproducible from stream ids") {
    const MarketSpec spec = oracle::basis_risk_market(0.02, 0.2, 0.05, 0.2, 0.1);
    const int before = max_threads();
    set_max_threads(1);
    const PathEnsemble a = simulate_paths(spec, 0.0, Vector::Constant(1, 100.0), 5000, 12, 77);
    set_max_threads(6);
    const PathEnsemble b = simulate_paths(spec, 0.0, Vector::Constant(1, 100.0), 5000, 12, 77);
    set_max_threads(before);
    for (int n = 0; n <= 12; ++n) CHECK((a.states[n].array() == b.states[n].array()).all());

    // Path 3000 simulated in a fresh ensemble from its stream id reproduces the same draws.
    const PathEnsemble single = simulate_paths(spec, 0.0, Vector::Constant(1, 100.0), 2, 12, 77, 3000);
    CHECK(single.states.back()(0, 0) == a.states.back()(0, 3000));
    const PathEnsemble tail = a.slice(3000, 5);
    CHECK(tail.stream_id(0) == 3000);
    CHECK(tail.states.back()(0, 0) == single.states.back()(0, 0));
}

TEST_CASE("non-finite coefficients are reported with the path") {
    MarketSpec spec = oracle::gbm_market(0.05, 0.2);
    spec.index_drift = [](double, const Vector& r) { return Vector::Constant(1, r(0) > 1.2 ? NAN : 0.0); };
    CHECK_THROWS_AS(simulate_paths(spec, 0.0, Vector::Constant(1, 1.0), 200, 50, 1), SimulationError);
    CHECK_THROWS_AS(simulate_paths(spec, 0.0, Vector::Constant(1, 1.0), 1, 5, 1), std::invalid_argument);
}

TEST_CASE("flow of constant coefficients is the identity") {
    Matrix rho(2, 2);
    rho << 0.3, 0.0, 0.1, 0.2;
    const MarketSpec spec =
        oracle::constant_market(Vector::Constant(2, 0.01), rho, Vector::Zero(1), Matrix::Constant(1, 2, 0.2));
    const PathEnsemble ens = simulate_flow(spec, simulate_paths(spec, 0.0, Vector::Zero(2), 20, 6, 2));
    for (int n = 0; n <= 6; ++n)
        for (int i = 0; i < 20; ++i) CHECK((ens.flow(n, i) - Matrix::Identity(2, 2)).norm() <= 1e-12);
}

TEST_CASE("GBM flow equals R_T / r0 in the Euler scheme") {
    const MarketSpec spec = oracle::gbm_market(0.07, 0.25);
    const double r0 = 3.0;
    const PathEnsemble ens = simulate_flow(spec, simulate_paths(spec, 0.0, Vector::Constant(1, r0), 500, 30, 4));
    for (int i = 0; i < 500; ++i) {
        CHECK(ens.flow(0, i)(0, 0) == 1.0);
        CHECK(ens.flow(30, i)(0, 0) == doctest::Approx(ens.states[30](0, i) / r0).epsilon(1e-8));
    }
}

TEST_CASE("flow matches a path bump on common random numbers") {
    const MarketSpec spec = oracle::basis_risk_market(0.03, 0.25, 0.05, 0.2, 0.1);
    const double r0 = 100.0, eps = 1e-4;
    const PathEnsemble base = simulate_flow(spec, simulate_paths(spec, 0.0, Vector::Constant(1, r0), 2000, 50, 8));
    const PathEnsemble bumped = simulate_paths(spec, 0.0, Vector::Constant(1, r0 + eps), 2000, 50, 8);
    double err = 0.0, ref = 0.0;
    for (int i = 0; i < 2000; ++i) {
        const double fd = (bumped.states[50](0, i) - base.states[50](0, i)) / eps;
        err += std::pow(fd - base.flow(50, i)(0, 0), 2);
        ref += std::pow(base.flow(50, i)(0, 0), 2);
    }
    CHECK(std::sqrt(err / ref) <= 1e-3);
}

TEST_CASE("Malliavin gradient") {
    const MarketSpec gbm = oracle::gbm_market(0.05, 0.2);
    const PathEnsemble ens = simulate_flow(gbm, simulate_paths(gbm, 0.0, Vector::Constant(1, 1.0), 100, 10, 6));
    SUBCASE("theta equal to s gives rho") {
        const auto d = malliavin_gradient(gbm, ens, 4, 4);
        for (int i = 0; i < 100; ++i) CHECK(d[i](0, 0) == doctest::Approx(0.2 * ens.states[4](0, i)));
    }
    SUBCASE("GBM gives sigma R_s") {
        const auto d = malliavin_gradient(gbm, ens, 2, 9);
        for (int i = 0; i < 100; ++i) CHECK(d[i](0, 0) == doctest::Approx(0.2 * ens.states[9](0, i)).epsilon(1e-10));
    }
    SUBCASE("constant coefficients give rho") {
        Matrix rho(1, 2);
        rho << 0.3, -0.1;
        const MarketSpec spec = oracle::constant_market(Vector::Zero(1), rho, Vector::Zero(1), Matrix::Constant(1, 2, 0.2));
        const PathEnsemble c = simulate_flow(spec, simulate_paths(spec, 0.0, Vector::Zero(1), 10, 5, 1));
        for (const auto& m : malliavin_gradient(spec, c, 1, 5)) CHECK((m - rho).norm() <= 1e-14);
    }
    CHECK_THROWS(malliavin_gradient(gbm, ens, 5, 4));
}

TEST_CASE("Euler bias of E[R_T] shrinks at first order in h") {
    // E[R_T] = r0 (1 + mu h)^N for the Euler scheme; its change under halving h is O(h).
    const MarketSpec spec = oracle::gbm_market(1.0, 0.1);
    std::vector<double> means;
    for (int steps : {8, 16, 32, 64})
        means.push_back(simulate_paths(spec, 0.0, Vector::Constant(1, 1.0), 200000, steps, 21).states.back().mean());
    std::vector<double> x, y;
    for (int j = 0; j < 3; ++j) {
        x.push_back(std::log(1.0 / (8 << j)));
        y.push_back(std::log(std::abs(means[j + 1] - means[j])));
    }
    const double mx = (x[0] + x[1] + x[2]) / 3, my = (y[0] + y[1] + y[2]) / 3;
    double sxy = 0, sxx = 0;
    for (int j = 0; j < 3; ++j) {
        sxy += (x[j] - mx) * (y[j] - my);
        sxx += (x[j] - mx) * (x[j] - mx);
    }
    const double slope = sxy / sxx;
    CHECK(slope >= 0.7);
    CHECK(slope <= 1.3);
}

TEST_CASE("assumption audit on a well-posed market") {
    const MarketSpec spec = oracle::basis_risk_market(0.03, 0.25, 0.05, 0.2, 0.1);
    const AssumptionAudit audit =
        audit_assumptions(spec, {0.0, 0.5, 1.0}, {Vector::Constant(1, 50.0), Vector::Constant(1, 150.0)});
    CHECK(audit.ok());
    CHECK(audit.min_ellipticity == doctest::Approx(0.05));
}
