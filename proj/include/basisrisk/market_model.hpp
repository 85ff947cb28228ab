#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "basisrisk/linalg.hpp"
#include "basisrisk/payoff.hpp"

namespace basisrisk {

class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigurationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using VectorField = std::function<Vector(double, const Vector&)>;
using MatrixField = std::function<Matrix(double, const Vector&)>;
/// r-derivative of a matrix-valued coefficient: one slice d/dr_j per index coordinate.
using MatrixFieldDerivative = std::function<std::vector<Matrix>(double, const Vector&)>;

/// Index dynamics dR = b dt + rho dW and traded assets dS/S = alpha dt + beta dW,
/// driven by the same d-dimensional Brownian motion.
struct MarketSpec {
    int m = 1;  // index dimension
    int k = 1;  // traded risky assets
    int d = 1;  // Brownian dimension, d >= k

    VectorField index_drift;  // b: m
    MatrixField index_vol;    // rho: m x d
    VectorField asset_drift;  // alpha: k
    MatrixField asset_vol;    // beta: k x d

    // Optional analytic r-derivatives. Central differences with relative step
    // 1e-5 are used for any that are left empty.
    MatrixField index_drift_jacobian;          // m x m
    MatrixFieldDerivative index_vol_jacobian;  // m slices of m x d
    MatrixField asset_drift_jacobian;          // k x m
    MatrixFieldDerivative asset_vol_jacobian;  // m slices of k x d

    double eta = 1.0;      // risk aversion
    double horizon = 1.0;  // T
    Payoff payoff;         // F
    bool time_homogeneous = false;  // coefficients do not depend on t

    /// Dimension and sign checks; throws ConfigurationError.
    void validate() const;
};

Matrix index_drift_jacobian(const MarketSpec& spec, double t, const Vector& r);
std::vector<Matrix> index_vol_jacobian(const MarketSpec& spec, double t, const Vector& r);
Matrix asset_drift_jacobian(const MarketSpec& spec, double t, const Vector& r);
std::vector<Matrix> asset_vol_jacobian(const MarketSpec& spec, double t, const Vector& r);

/// Finite-difference step used whenever a derivative is not supplied.
inline double fd_step(double x) { return 1e-5 * (1.0 + std::abs(x)); }

/// Sampled checks of the standing assumptions on a lattice of states.
struct AssumptionAudit {
    double min_ellipticity = 0.0;  // smallest eigenvalue of beta beta^*
    double max_ellipticity = 0.0;  // largest eigenvalue of beta beta^*
    double lipschitz_estimate = 0.0;
    double growth_estimate = 0.0;
    bool dimension_ok = false;
    bool ellipticity_ok = false;
    bool finite_ok = false;
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

AssumptionAudit audit_assumptions(const MarketSpec& spec, const std::vector<double>& times,
                                  const std::vector<Vector>& states, double ellipticity_floor = 1e-10);

/// Simulated index paths on a uniform grid t0 < ... < T. Storage is one
/// column per path for each step.
struct PathEnsemble {
    double t0 = 0.0;
    double step = 0.0;
    int n_steps = 0;
    int n_paths = 0;
    int m = 0;
    int d = 0;
    std::uint64_t seed = 0;
    std::uint64_t first_stream = 0;  // stream id of path 0
    bool antithetic = false;         // odd stream ids replay the even neighbour with -dW

    std::vector<Matrix> states;      // n_steps + 1 slices, m x n_paths
    std::vector<Matrix> increments;  // n_steps slices, d x n_paths
    std::vector<Matrix> flows;       // empty, or n_steps + 1 slices of (m*m) x n_paths, column-major
    std::vector<std::uint8_t> singular_flow;  // per path, set when |det Phi| < 1e-12

    double time(int n) const { return t0 + n * step; }
    std::uint64_t stream_id(int path) const { return first_stream + static_cast<std::uint64_t>(path); }
    bool has_flow() const { return !flows.empty(); }
    Vector state(int n, int path) const { return states[n].col(path); }
    Matrix flow(int n, int path) const;

    /// Contiguous block of paths [begin, begin + count), keeping stream ids.
    PathEnsemble slice(int begin, int count) const;
};

/// Euler-Maruyama paths from (t0, r0) to the horizon with n_steps uniform steps.
/// Path i draws its increments from the counter-based stream (seed, first_stream + i).
/// With antithetic sampling, stream ids 2j and 2j+1 share the draws of stream j
/// with opposite signs.
PathEnsemble simulate_paths(const MarketSpec& spec, double t0, const Vector& r0, int n_paths, int n_steps,
                            std::uint64_t seed, std::uint64_t first_stream = 0, bool antithetic = false);

/// Same, but each path starts from its own state (columns of r0).
PathEnsemble simulate_paths_from(const MarketSpec& spec, double t0, const Matrix& r0, int n_steps,
                                 std::uint64_t seed, std::uint64_t first_stream = 0, bool antithetic = false);

/// Integrates the first variation Phi = dR/dr0 on the ensemble's grid and increments.
PathEnsemble simulate_flow(const MarketSpec& spec, PathEnsemble ensemble);

/// D_theta R_s = Phi_s Phi_theta^{-1} rho(t_theta, R_theta), one m x d matrix per path.
std::vector<Matrix> malliavin_gradient(const MarketSpec& spec, const PathEnsemble& ensemble, int theta_idx,
                                       int s_idx);

}  // namespace basisrisk
