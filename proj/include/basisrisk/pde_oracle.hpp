#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "basisrisk/linalg.hpp"
#include "basisrisk/market_model.hpp"
#include "basisrisk/payoff.hpp"

namespace basisrisk {

class PdeStabilityError : public std::runtime_error {
public:
    PdeStabilityError(const std::string& what, double required_step)
        : std::runtime_error(what), required_step(required_step) {}
    double required_step;
};

/// Space-time grid for the finite-difference oracle (m <= 2).
struct PdeGrid {
    int nodes = 0;       // per dimension; 0 picks 801 (m = 1) or 161 (m = 2)
    int time_steps = 0;  // 0 picks the smallest count meeting the stability bound
    std::vector<double> lower, upper;  // explicit bounds; empty means 6 SD of R_T around r0
    double domain_sds = 6.0;
    int pilot_paths = 20000;
    int pilot_steps = 50;
    std::uint64_t pilot_seed = 0x5eed;
    int snapshots = 1;  // u is kept at t0 + j (T - t0) / snapshots, j = 0..snapshots
};

/// u on a tensor grid at a few stored times, with multilinear interpolation.
class PdeSolution {
public:
    int m = 0;
    int d = 0;
    double t0 = 0.0;
    double horizon = 0.0;
    int time_steps = 0;
    double time_step = 0.0;
    std::vector<double> lower, upper;
    std::vector<int> nodes;
    std::vector<std::vector<double>> u;  // per snapshot, flattened with coordinate 0 fastest

    int snapshots() const { return static_cast<int>(u.size()) - 1; }
    double snapshot_time(int j) const { return t0 + (horizon - t0) * j / snapshots(); }
    int snapshot_index(double t) const;  // throws unless t is a stored time

    double spacing(int dim) const { return (upper[dim] - lower[dim]) / (nodes[dim] - 1); }
    double value(int snapshot, const Vector& r) const;
    /// Central differences on the grid, interpolated to r.
    Vector gradient(int snapshot, const Vector& r) const;
    /// True when r lies at least `margin` of the domain width inside every face.
    bool interior(const Vector& r, double margin = 0.1) const;

private:
    double node_value(int snapshot, int i, int j) const;
    double node_derivative(int snapshot, int dim, int i, int j) const;
    template <class F>
    double interpolate(const Vector& r, F&& at_node) const;
};

/// Explicit backward finite differences for u_t + L u = f(t, r, grad u rho),
/// u(T) = terminal, with L = b.grad + (1/2) tr(rho rho^* D^2) and vanishing
/// second derivative on the boundary.
PdeSolution pde_oracle(const MarketSpec& spec, const Payoff& terminal, double t0, const Vector& r0,
                       const PdeGrid& grid = {});

/// The largest stable time step for the given spatial grid.
double pde_stable_step(const MarketSpec& spec, double t0, const std::vector<double>& lower,
                       const std::vector<double>& upper, const std::vector<int>& nodes);

}  // namespace basisrisk
