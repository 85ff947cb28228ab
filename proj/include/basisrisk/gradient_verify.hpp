#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "basisrisk/bsde_solver.hpp"

namespace basisrisk {

/// Pathwise x-derivative of a solved BSDE. The recursion runs in the
/// coordinates G_i = grad_x Y_i Phi_i^{-1} = grad_r u(t_i, R_i), which are
/// functions of R_i alone and can therefore be regressed; grad_x Y follows by
/// multiplying with the flow.
struct GradientSolution {
    int m = 0;
    int d = 0;
    int n_steps = 0;
    int n_paths = 0;
    int direction = -1;  // -1: full Jacobian; else the index coordinate differentiated

    std::vector<Matrix> grad_u;   // n_steps + 1 slices, m x N: grad_r u(t_i, R_i)
    std::vector<Matrix> grad_uz;  // n_steps slices, (d*m) x N, column-major d x m: grad_x Z Phi^{-1}
    std::vector<Matrix> grad_y;   // n_steps + 1 slices, (m or 1) x N: grad_x Y (full or along e_direction)

    bool directional() const { return direction >= 0; }
    /// Mean over paths of grad_x Y at the first step (all paths share the start).
    Vector initial_gradient() const;
};

/// Backward regression for grad_x Y = grad F(X_T) Phi_T - int grad_x Z dW
/// - int [grad_r f Phi + grad_z f grad_x Z] ds, linearized at the base solution's Z.
/// Throws std::invalid_argument without a flow or for a payoff with no gradient.
GradientSolution solve_gradient_bsde(const BsdeSolution& sol, const PathEnsemble& ensemble, const MarketSpec& spec,
                                     const RegressionBasis& basis, int direction = -1);

struct ZRepresentationReport {
    std::vector<double> step_discrepancy;  // relative L2 per step
    double discrepancy = 0.0;              // relative L2 over all steps and paths
    int excluded_paths = 0;                // singular flow
    double excluded_fraction = 0.0;
    bool exclusions_ok = true;             // at most 0.1% of paths excluded
};

/// Compares Z with (grad_x Y Phi^{-1}) rho along the ensemble.
ZRepresentationReport check_z_representation(const BsdeSolution& sol, const GradientSolution& grad,
                                             const PathEnsemble& ensemble, const MarketSpec& spec);

/// Central difference of Y_0 in each index coordinate on common random
/// numbers, with eps_j = 1e-3 (1 + |r0_j|) unless given.
Vector bump_gradient(const MarketSpec& spec, const Payoff& terminal, double t0, const Vector& r0, int n_paths,
                     int n_steps, std::uint64_t seed, const RegressionBasis& basis, bool antithetic = false,
                     double eps = 0.0);

struct LipschitzAudit {
    std::vector<double> distances;
    std::vector<double> differences;  // (E sup_t |Y_t^x - Y_t^x'|^2)^{1/2}
    double slope = 0.0;               // log-log fit
    bool ok = false;                  // slope >= 0.9
    std::string finding;
};

/// Perturbs r0 along coordinate `coordinate` by each distance and fits the
/// exponent of the sup-path difference of Y (common random numbers).
LipschitzAudit lipschitz_audit(const MarketSpec& spec, const Payoff& terminal, double t0, const Vector& r0,
                               const std::vector<double>& distances, int n_paths, int n_steps, std::uint64_t seed,
                               const RegressionBasis& basis, int coordinate = 0, bool antithetic = false);

}  // namespace basisrisk
