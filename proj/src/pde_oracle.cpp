#include "basisrisk/pde_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "basisrisk/generator.hpp"
#include "basisrisk/parallel.hpp"

namespace basisrisk {
namespace {

struct NodeCoefficients {
    Vector drift;      // m
    Matrix diffusion;  // rho rho^*, m x m
    Matrix vol;        // rho, m x d
    Vector theta;      // d
    Matrix residual;   // I - P, d x d
    double theta_sq = 0.0;
};

NodeCoefficients coefficients_at(const MarketSpec& spec, double t, const Vector& r) {
    NodeCoefficients c;
    c.drift = spec.index_drift(t, r);
    c.vol = spec.index_vol(t, r);
    c.diffusion = c.vol * c.vol.transpose();
    const DriverContext ctx = make_context(spec, t, r);
    c.theta = ctx.theta;
    c.residual = Matrix::Identity(spec.d, spec.d) - ctx.projector;
    c.theta_sq = ctx.theta.squaredNorm();
    return c;
}

double driver_at(const NodeCoefficients& c, const Vector& z, double eta) {
    const Vector shifted = c.residual * (z + c.theta / eta);
    return z.dot(c.theta) + c.theta_sq / (2.0 * eta) - 0.5 * eta * shifted.squaredNorm();
}

std::vector<Vector> node_states(const std::vector<double>& lower, const std::vector<double>& upper,
                                const std::vector<int>& nodes) {
    const int m = static_cast<int>(nodes.size());
    const int n0 = nodes[0];
    const int n1 = m == 2 ? nodes[1] : 1;
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(n0) * n1);
    for (int j = 0; j < n1; ++j)
        for (int i = 0; i < n0; ++i) {
            Vector r(m);
            r(0) = lower[0] + (upper[0] - lower[0]) * i / (n0 - 1);
            if (m == 2) r(1) = lower[1] + (upper[1] - lower[1]) * j / (n1 - 1);
            out.push_back(r);
        }
    return out;
}

void extrapolate_boundary(std::vector<double>& u, int n0, int n1) {
    auto at = [&](int i, int j) -> double& { return u[static_cast<std::size_t>(j) * n0 + i]; };
    for (int j = 0; j < n1; ++j) {
        at(0, j) = 2.0 * at(1, j) - at(2, j);
        at(n0 - 1, j) = 2.0 * at(n0 - 2, j) - at(n0 - 3, j);
    }
    if (n1 > 1)
        for (int i = 0; i < n0; ++i) {
            at(i, 0) = 2.0 * at(i, 1) - at(i, 2);
            at(i, n1 - 1) = 2.0 * at(i, n1 - 2) - at(i, n1 - 3);
        }
}

}  // namespace

double pde_stable_step(const MarketSpec& spec, double t0, const std::vector<double>& lower,
                       const std::vector<double>& upper, const std::vector<int>& nodes) {
    const int m = static_cast<int>(nodes.size());
    double dr = std::numeric_limits<double>::infinity();
    for (int k = 0; k < m; ++k) dr = std::min(dr, (upper[k] - lower[k]) / (nodes[k] - 1));
    double amax = 0.0;
    const std::vector<double> times{t0, 0.5 * (t0 + spec.horizon), spec.horizon};
    for (const Vector& r : node_states(lower, upper, nodes))
        for (double t : times) {
            if (spec.time_homogeneous && t != t0) break;
            const Matrix rho = spec.index_vol(t, r);
            amax = std::max(amax, (rho * rho.transpose()).cwiseAbs().maxCoeff());
        }
    if (amax == 0.0) return std::numeric_limits<double>::infinity();
    return dr * dr / (2.0 * amax * m);
}

PdeSolution pde_oracle(const MarketSpec& spec, const Payoff& terminal, double t0, const Vector& r0,
                       const PdeGrid& grid) {
    spec.validate();
    if (spec.m > 2) throw std::invalid_argument("pde_oracle: only m <= 2 is supported");
    if (r0.size() != spec.m) throw std::invalid_argument("pde_oracle: r0 has the wrong dimension");
    if (grid.snapshots < 1) throw std::invalid_argument("pde_oracle: need at least one snapshot interval");
    const int m = spec.m;

    PdeSolution sol;
    sol.m = m;
    sol.d = spec.d;
    sol.t0 = t0;
    sol.horizon = spec.horizon;
    sol.nodes.assign(m, grid.nodes > 0 ? grid.nodes : (m == 1 ? 801 : 161));
    if (sol.nodes[0] < 5) throw std::invalid_argument("pde_oracle: need at least 5 nodes per dimension");

    if (!grid.lower.empty() || !grid.upper.empty()) {
        if (static_cast<int>(grid.lower.size()) != m || static_cast<int>(grid.upper.size()) != m)
            throw std::invalid_argument("pde_oracle: bounds must have one entry per index coordinate");
        sol.lower = grid.lower;
        sol.upper = grid.upper;
    } else {
        const PathEnsemble pilot =
            simulate_paths(spec, t0, r0, grid.pilot_paths, grid.pilot_steps, grid.pilot_seed);
        const Matrix& last = pilot.states.back();
        for (int k = 0; k < m; ++k) {
            const double mean = last.row(k).mean();
            const double sd = std::sqrt((last.row(k).array() - mean).square().mean());
            const double width = sd > 0.0 ? grid.domain_sds * sd : 1.0;
            sol.lower.push_back(std::min(r0(k), mean) - width);
            sol.upper.push_back(std::max(r0(k), mean) + width);
        }
    }

    const double stable = pde_stable_step(spec, t0, sol.lower, sol.upper, sol.nodes);
    const double span = spec.horizon - t0;
    int steps = grid.time_steps;
    if (steps <= 0) {
        steps = std::isfinite(stable) ? static_cast<int>(std::ceil(span / (0.9 * stable))) : 1;
        steps = std::max(steps, grid.snapshots);
        steps = ((steps + grid.snapshots - 1) / grid.snapshots) * grid.snapshots;
    } else if (span / steps > stable) {
        std::ostringstream os;
        os << "pde_oracle: time step " << span / steps << " violates the stability bound; need h_pde <= "
           << stable << " (at least " << static_cast<long>(std::ceil(span / stable)) << " steps)";
        throw PdeStabilityError(os.str(), stable);
    } else if (steps % grid.snapshots != 0) {
        throw std::invalid_argument("pde_oracle: time_steps must be a multiple of snapshots");
    }
    sol.time_steps = steps;
    sol.time_step = span / steps;
    const double h = sol.time_step;

    const int n0 = sol.nodes[0];
    const int n1 = m == 2 ? sol.nodes[1] : 1;
    const std::vector<Vector> states = node_states(sol.lower, sol.upper, sol.nodes);
    const std::size_t total = states.size();

    std::vector<double> cur(total), next(total);
    for (std::size_t i = 0; i < total; ++i) cur[i] = terminal(states[i]);
    const int per_snapshot = steps / grid.snapshots;
    sol.u.assign(grid.snapshots + 1, {});
    sol.u[grid.snapshots] = cur;

    std::vector<NodeCoefficients> coeffs(total);
    auto refresh = [&](double t) {
        parallel_for(total, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) coeffs[i] = coefficients_at(spec, t, states[i]);
        });
    };
    if (spec.time_homogeneous) refresh(t0);

    const double dx = sol.spacing(0);
    const double dy = m == 2 ? sol.spacing(1) : 1.0;
    const double eta = spec.eta;
    for (int n = steps; n > 0; --n) {
        const double t = t0 + n * h;
        if (!spec.time_homogeneous) refresh(t);
        parallel_for(total, [&](std::size_t b, std::size_t e) {
            Vector grad(m), z(spec.d);
            for (std::size_t idx = b; idx < e; ++idx) {
                const int i = static_cast<int>(idx % n0);
                const int j = static_cast<int>(idx / n0);
                if (i == 0 || i == n0 - 1 || (m == 2 && (j == 0 || j == n1 - 1))) continue;
                const NodeCoefficients& c = coeffs[idx];
                const double uc = cur[idx];
                const double ue = cur[idx + 1], uw = cur[idx - 1];
                grad(0) = (ue - uw) / (2.0 * dx);
                double lu = c.drift(0) * grad(0) + 0.5 * c.diffusion(0, 0) * (ue - 2.0 * uc + uw) / (dx * dx);
                if (m == 2) {
                    const std::size_t row = static_cast<std::size_t>(n0);
                    const double un = cur[idx + row], us = cur[idx - row];
                    grad(1) = (un - us) / (2.0 * dy);
                    const double mixed = (cur[idx + row + 1] - cur[idx + row - 1] - cur[idx - row + 1] +
                                          cur[idx - row - 1]) / (4.0 * dx * dy);
                    lu += c.drift(1) * grad(1) + 0.5 * c.diffusion(1, 1) * (un - 2.0 * uc + us) / (dy * dy) +
                          c.diffusion(0, 1) * mixed;
                }
                z.noalias() = c.vol.transpose() * grad;
                next[idx] = uc + h * (lu - driver_at(c, z, eta));
            }
        });
        extrapolate_boundary(next, n0, n1);
        std::swap(cur, next);
        if ((n - 1) % per_snapshot == 0) sol.u[(n - 1) / per_snapshot] = cur;
        if (!std::isfinite(cur[total / 2])) {
            std::ostringstream os;
            os << "pde_oracle: non-finite value at t=" << t - h;
            throw std::runtime_error(os.str());
        }
    }
    return sol;
}

int PdeSolution::snapshot_index(double t) const {
    const double pos = (t - t0) / (horizon - t0) * snapshots();
    const long j = std::lround(pos);
    if (j < 0 || j > snapshots() || std::abs(pos - static_cast<double>(j)) > 1e-9) {
        std::ostringstream os;
        os << "pde_oracle: time " << t << " is not a stored snapshot";
        throw std::out_of_range(os.str());
    }
    return static_cast<int>(j);
}

double PdeSolution::node_value(int s, int i, int j) const {
    return u[s][static_cast<std::size_t>(j) * nodes[0] + i];
}

double PdeSolution::node_derivative(int s, int dim, int i, int j) const {
    const int n = nodes[dim];
    const int pos = dim == 0 ? i : j;
    auto shifted = [&](int delta) { return dim == 0 ? node_value(s, i + delta, j) : node_value(s, i, j + delta); };
    const double dr = spacing(dim);
    if (pos == 0) return (shifted(1) - shifted(0)) / dr;
    if (pos == n - 1) return (shifted(0) - shifted(-1)) / dr;
    return (shifted(1) - shifted(-1)) / (2.0 * dr);
}

template <class F>
double PdeSolution::interpolate(const Vector& r, F&& at_node) const {
    int base[2] = {0, 0};
    double frac[2] = {0.0, 0.0};
    for (int k = 0; k < m; ++k) {
        const double pos = (r(k) - lower[k]) / spacing(k);
        if (pos < 0.0 || pos > nodes[k] - 1) {
            std::ostringstream os;
            os << "pde_oracle: state outside the grid in coordinate " << k << " (" << r(k) << ")";
            throw std::out_of_range(os.str());
        }
        base[k] = std::min(static_cast<int>(pos), nodes[k] - 2);
        frac[k] = pos - base[k];
    }
    if (m == 1) return (1.0 - frac[0]) * at_node(base[0], 0) + frac[0] * at_node(base[0] + 1, 0);
    const double lo = (1.0 - frac[0]) * at_node(base[0], base[1]) + frac[0] * at_node(base[0] + 1, base[1]);
    const double hi = (1.0 - frac[0]) * at_node(base[0], base[1] + 1) + frac[0] * at_node(base[0] + 1, base[1] + 1);
    return (1.0 - frac[1]) * lo + frac[1] * hi;
}

double PdeSolution::value(int s, const Vector& r) const {
    return interpolate(r, [&](int i, int j) { return node_value(s, i, j); });
}

Vector PdeSolution::gradient(int s, const Vector& r) const {
    Vector g(m);
    for (int k = 0; k < m; ++k) g(k) = interpolate(r, [&](int i, int j) { return node_derivative(s, k, i, j); });
    return g;
}

bool PdeSolution::interior(const Vector& r, double margin) const {
    for (int k = 0; k < m; ++k) {
        const double w = upper[k] - lower[k];
        if (r(k) < lower[k] + margin * w || r(k) > upper[k] - margin * w) return false;
    }
    return true;
}

}  // namespace basisrisk
