#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "basisrisk/generator.hpp"
#include "basisrisk/linalg.hpp"
#include "basisrisk/market_model.hpp"
#include "basisrisk/payoff.hpp"
#include "basisrisk/regression.hpp"

namespace basisrisk {

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class TerminalKind { WithClaim, ZeroClaim, Mup, Gradient };
const char* to_string(TerminalKind kind);

/// Generator of a backward equation, evaluated per (step, path) on the
/// ensemble or off-path (path < 0) at an arbitrary state.
class Driver {
public:
    virtual ~Driver() = default;
    virtual double value(int step, int path, double t, const Vector& r, const Vector& z) const = 0;
    virtual Vector grad_z(int step, int path, double t, const Vector& r, const Vector& z) const = 0;
    virtual Vector grad_r(int step, int path, double t, const Vector& r, const Vector& z) const = 0;
};

/// The indifference-pricing driver f(t, r, z) of the market.
class QuadraticDriver final : public Driver {
public:
    explicit QuadraticDriver(MarketSpec spec) : spec_(std::move(spec)) {}
    double value(int, int, double t, const Vector& r, const Vector& z) const override;
    Vector grad_z(int, int, double t, const Vector& r, const Vector& z) const override;
    Vector grad_r(int, int, double t, const Vector& r, const Vector& z) const override;

private:
    MarketSpec spec_;
};

/// Slope of a linear driver V -> slope . V, given per (path, step) and,
/// optionally, as a function of the state for off-path evaluation.
struct SlopeField {
    std::vector<Matrix> per_step;                            // n_steps slices, d x n_paths
    std::function<Vector(int step, const Vector&)> at_state;  // may be empty
};

class LinearDriver final : public Driver {
public:
    explicit LinearDriver(SlopeField slope) : slope_(std::move(slope)) {}
    double value(int step, int path, double t, const Vector& r, const Vector& z) const override;
    Vector grad_z(int step, int path, double t, const Vector& r, const Vector& z) const override;
    Vector grad_r(int step, int path, double t, const Vector& r, const Vector& z) const override;

private:
    Vector slope(int step, int path, const Vector& r) const;
    SlopeField slope_;
};

struct SolverOptions {
    bool clip_z = true;
    int quadrature_nodes = 5;  // per Brownian dimension, for degenerate steps
};

struct SolverDiagnostics {
    long clip_events = 0;
    long driver_evaluations = 0;
    int degree_reductions = 0;
    int degenerate_steps = 0;
    std::vector<std::string> notes;
    double clip_rate() const {
        return driver_evaluations == 0 ? 0.0 : static_cast<double>(clip_events) / driver_evaluations;
    }
};

/// Discrete solution of Y_s = xi - int_s^T Z dW - int_s^T f(u, R_u, Z_u) du.
///
/// Sign convention: dY = Z dW + f ds, so each backward step *subtracts* h f.
/// This is the opposite of the usual BSDE convention Y_s = xi + int f - int Z dW.
class BsdeSolution {
public:
    TerminalKind kind = TerminalKind::WithClaim;
    Payoff terminal;
    std::shared_ptr<const Driver> driver;
    std::shared_ptr<const MarketSpec> spec;

    double t0 = 0.0;
    double step = 0.0;
    int n_steps = 0;
    int n_paths = 0;
    int m = 0;
    int d = 0;
    std::uint64_t seed = 0;
    std::uint64_t first_stream = 0;
    double z_max = 0.0;
    int quadrature_nodes = 5;

    std::vector<Vector> y;                     // n_steps + 1 slices of n_paths
    std::vector<Matrix> z;                     // n_steps slices, d x n_paths
    std::vector<FittedFunction> continuation;  // E[Y_{i+1} | R_i = .]
    std::vector<FittedFunction> z_fit;         // v(t_i, .)
    std::vector<Vector> common_state;          // shared state of a degenerate step, else empty
    SolverDiagnostics diagnostics;

    double time(int n) const { return t0 + n * step; }
    /// Y at the first grid time (all paths start from the same state).
    double initial_value() const;

    /// u(t_i, r). At a degenerate step (all paths at one state) the fit only
    /// determines u at that state; elsewhere u is the one-step Gauss-Hermite
    /// expectation of the next step's fit.
    double value_at(int step, const Vector& r) const;
    Vector gradient_at(int step, const Vector& r) const;  // grad_r u(t_i, r), length m
    Vector z_at(int step, const Vector& r) const;         // v(t_i, r), length d

    bool same_grid(const BsdeSolution& other) const;
    int step_index(double t) const;  // throws unless t is on the grid

    /// CSV with columns step,time,path,Y,Z_1..Z_d for the first max_paths paths.
    void export_csv(std::ostream& out, int max_paths) const;

    Vector clip(const Vector& z, bool* clipped = nullptr) const;

private:
    struct OneStep {
        double value;
        Vector z;
        Vector gradient;
    };
    double direct_value(int step, const Vector& r) const;
    Vector direct_gradient(int step, const Vector& r) const;
    bool at_common_state(int step, const Vector& r) const;
    OneStep quadrature(int step, const Vector& r) const;
};

/// Regression Monte Carlo for the quadratic BSDE with terminal F (WithClaim)
/// or 0 (ZeroClaim). Per step i:
///   Y_i = Reg[Y_{i+1} | R_i] - h f(t_i, R_i, Z_i)
///   Z_i = Reg[(Y_{i+1} - Reg[Y_{i+1} | R_i]) dW_i | R_i] / h, clipped to |Z| <= z_max.
BsdeSolution solve_backward(const PathEnsemble& ensemble, const MarketSpec& spec, TerminalKind terminal,
                            const RegressionBasis& basis, const SolverOptions& options = {});

/// Same recursion with an explicit terminal payoff.
BsdeSolution solve_backward(const PathEnsemble& ensemble, const MarketSpec& spec, const Payoff& terminal,
                            const RegressionBasis& basis, const SolverOptions& options = {});

/// Linear BSDE U_s = F - int V dW - int slope . V du.
BsdeSolution solve_linear_bsde(const PathEnsemble& ensemble, const MarketSpec& spec, const Payoff& terminal,
                               SlopeField slope, const RegressionBasis& basis, const SolverOptions& options = {});

/// grad_z f evaluated along a solved quadratic BSDE (the ensemble it was
/// solved on), the slope of the marginal utility price equation.
SlopeField driver_slope(std::shared_ptr<const BsdeSolution> base, const PathEnsemble& ensemble);

struct BatchEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
    std::vector<double> values;
};
/// Runs an estimator on contiguous path batches; standard_error is the
/// batch-means error of the full-ensemble estimate.
BatchEstimate batch_estimate(const PathEnsemble& ensemble, int batches,
                             const std::function<double(const PathEnsemble&)>& estimator);

/// Markov consistency of u(t_j, .): re-solve from (t_j, r) on fresh sub-paths
/// and compare with the full solve's fitted value.
struct ConsistencyPoint {
    Vector state;
    double fitted = 0.0;
    double resolved = 0.0;
    double standard_error = 0.0;  // combined batch-means error of both estimates
    bool ok = false;
};
std::vector<ConsistencyPoint> markov_consistency(const MarketSpec& spec, const PathEnsemble& ensemble,
                                                 TerminalKind terminal, const RegressionBasis& basis, int step,
                                                 const std::vector<Vector>& points, int sub_paths,
                                                 std::uint64_t sub_seed, int batches = 10,
                                                 double tolerance_in_se = 2.0);

}  // namespace basisrisk
