#include "basisrisk/gradient_verify.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "basisrisk/parallel.hpp"

namespace basisrisk {

Vector GradientSolution::initial_gradient() const { return grad_y.front().rowwise().mean(); }

GradientSolution solve_gradient_bsde(const BsdeSolution& sol, const PathEnsemble& ens, const MarketSpec& spec,
                                     const RegressionBasis& basis, int direction) {
    if (!ens.has_flow()) throw std::invalid_argument("gradient_verify: the ensemble carries no flow; run simulate_flow");
    if (!sol.terminal.differentiable())
        throw std::invalid_argument("gradient_verify: terminal condition '" + sol.terminal.description +
                                    "' has no gradient; use bump_gradient instead");
    if (ens.n_paths != sol.n_paths || ens.n_steps != sol.n_steps || ens.seed != sol.seed)
        throw std::invalid_argument("gradient_verify: ensemble does not match the solution");
    if (direction >= spec.m) throw std::invalid_argument("gradient_verify: direction out of range");

    const int m = spec.m, d = spec.d, n = ens.n_paths;
    const double h = ens.step;
    GradientSolution g;
    g.m = m;
    g.d = d;
    g.n_steps = ens.n_steps;
    g.n_paths = n;
    g.direction = direction;
    g.grad_u.assign(ens.n_steps + 1, Matrix(m, n));
    g.grad_uz.assign(ens.n_steps, Matrix(d * m, n));
    g.grad_y.assign(ens.n_steps + 1, Matrix(direction >= 0 ? 1 : m, n));

    auto store_grad_y = [&](int s) {
        parallel_for(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                const int path = static_cast<int>(i);
                const Vector row = ens.flow(s, path).transpose() * g.grad_u[s].col(path);
                if (direction >= 0)
                    g.grad_y[s](0, path) = row(direction);
                else
                    g.grad_y[s].col(path) = row;
            }
        });
    };

    parallel_for(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const int path = static_cast<int>(i);
            g.grad_u.back().col(path) = sol.terminal.gradient(ens.states.back().col(path));
        }
    });
    store_grad_y(ens.n_steps);

    Matrix targets(n, m);
    for (int s = ens.n_steps - 1; s >= 0; --s) {
        const double t = ens.time(s);
        const Matrix& states = ens.states[s];
        // Row of grad u(t_{i+1}) pulled back through one Euler step.
        parallel_for(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t e) {
            Matrix jac(m, m);
            for (std::size_t i = b; i < e; ++i) {
                const int path = static_cast<int>(i);
                const Vector r = states.col(path);
                const auto vol = index_vol_jacobian(spec, t, r);
                jac = Matrix::Identity(m, m) + index_drift_jacobian(spec, t, r) * h;
                for (int j = 0; j < m; ++j) jac.col(j) += vol[j] * ens.increments[s].col(path);
                targets.row(path) = g.grad_u[s + 1].col(path).transpose() * jac;
            }
        });
        const CrossSectionRegression reg(states, basis);
        const Matrix cont = reg.fitted_values(reg.fit(targets));
        const Matrix resid = targets - cont;
        Matrix z_targets(n, d * m);
        for (int j = 0; j < m; ++j)
            for (int l = 0; l < d; ++l)
                z_targets.col(j * d + l) = resid.col(j).cwiseProduct(ens.increments[s].row(l).transpose()) / h;
        const Matrix hz = reg.fitted_values(reg.fit(z_targets));

        parallel_for(static_cast<std::size_t>(n), [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                const int path = static_cast<int>(i);
                const Vector r = states.col(path);
                const Vector z = sol.z[s].col(path);
                const Matrix h_path = Eigen::Map<const Matrix>(hz.row(path).eval().data(), d, m);
                g.grad_uz[s].col(path) = Eigen::Map<const Vector>(h_path.data(), d * m);
                const Vector fr = sol.driver->grad_r(s, path, t, r, z);
                const Vector fz = sol.driver->grad_z(s, path, t, r, z);
                g.grad_u[s].col(path) = cont.row(path).transpose() - h * (fr + h_path.transpose() * fz);
            }
        });
        if (!g.grad_u[s].allFinite()) {
            std::ostringstream os;
            os << "gradient_verify: non-finite gradient at step " << s << " (t=" << t << ")";
            throw SolverError(os.str());
        }
        store_grad_y(s);
    }
    return g;
}

ZRepresentationReport check_z_representation(const BsdeSolution& sol, const GradientSolution& grad,
                                             const PathEnsemble& ens, const MarketSpec& spec) {
    if (!ens.has_flow()) throw std::invalid_argument("gradient_verify: the ensemble carries no flow");
    if (grad.directional()) throw std::invalid_argument("gradient_verify: the Z check needs the full gradient");
    ZRepresentationReport report;
    std::vector<std::uint8_t> excluded(ens.n_paths, 0);
    for (int i = 0; i < ens.n_paths; ++i)
        if (!ens.singular_flow.empty() && ens.singular_flow[i]) {
            excluded[i] = 1;
            ++report.excluded_paths;
        }
    report.excluded_fraction = static_cast<double>(report.excluded_paths) / ens.n_paths;
    report.exclusions_ok = report.excluded_fraction <= 1e-3;

    double err_total = 0.0, ref_total = 0.0;
    for (int s = 0; s < ens.n_steps; ++s) {
        const double t = ens.time(s);
        std::vector<double> err(ens.n_paths, 0.0), ref(ens.n_paths, 0.0);
        parallel_for(static_cast<std::size_t>(ens.n_paths), [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                const int path = static_cast<int>(i);
                if (excluded[path]) continue;
                const Vector r = ens.states[s].col(path);
                const Vector grad_u = ens.flow(s, path).transpose().partialPivLu().solve(grad.grad_y[s].col(path));
                const Vector expected = spec.index_vol(t, r).transpose() * grad_u;
                err[path] = (sol.z[s].col(path) - expected).squaredNorm();
                ref[path] = expected.squaredNorm();
            }
        });
        double es = 0.0, rs = 0.0;
        for (int i = 0; i < ens.n_paths; ++i) {
            es += err[i];
            rs += ref[i];
        }
        report.step_discrepancy.push_back(rs > 0.0 ? std::sqrt(es / rs) : std::sqrt(es));
        err_total += es;
        ref_total += rs;
    }
    report.discrepancy = ref_total > 0.0 ? std::sqrt(err_total / ref_total) : std::sqrt(err_total);
    return report;
}

Vector bump_gradient(const MarketSpec& spec, const Payoff& terminal, double t0, const Vector& r0, int n_paths,
                     int n_steps, std::uint64_t seed, const RegressionBasis& basis, bool antithetic, double eps) {
    Vector grad(spec.m);
    for (int j = 0; j < spec.m; ++j) {
        const double e = eps > 0.0 ? eps : 1e-3 * (1.0 + std::abs(r0(j)));
        Vector up = r0, dn = r0;
        up(j) += e;
        dn(j) -= e;
        const double yu =
            solve_backward(simulate_paths(spec, t0, up, n_paths, n_steps, seed, 0, antithetic), spec, terminal, basis)
                .initial_value();
        const double yd =
            solve_backward(simulate_paths(spec, t0, dn, n_paths, n_steps, seed, 0, antithetic), spec, terminal, basis)
                .initial_value();
        grad(j) = (yu - yd) / (2.0 * e);
    }
    return grad;
}

LipschitzAudit lipschitz_audit(const MarketSpec& spec, const Payoff& terminal, double t0, const Vector& r0,
                               const std::vector<double>& distances, int n_paths, int n_steps, std::uint64_t seed,
                               const RegressionBasis& basis, int coordinate, bool antithetic) {
    if (distances.size() < 2) throw std::invalid_argument("gradient_verify: need at least two distances");
    LipschitzAudit audit;
    audit.distances = distances;
    const BsdeSolution base =
        solve_backward(simulate_paths(spec, t0, r0, n_paths, n_steps, seed, 0, antithetic), spec, terminal, basis);
    for (double dist : distances) {
        Vector moved = r0;
        moved(coordinate) += dist;
        const BsdeSolution other = solve_backward(simulate_paths(spec, t0, moved, n_paths, n_steps, seed, 0, antithetic),
                                                  spec, terminal, basis);
        Vector sup = Vector::Zero(n_paths);
        for (int s = 0; s <= n_steps; ++s) sup = sup.cwiseMax((base.y[s] - other.y[s]).cwiseAbs());
        audit.differences.push_back(std::sqrt(sup.squaredNorm() / n_paths));
    }
    // Least-squares slope of log difference against log distance.
    const int k = static_cast<int>(distances.size());
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < k; ++i) {
        mx += std::log(distances[i]) / k;
        my += std::log(std::max(audit.differences[i], 1e-300)) / k;
    }
    double sxy = 0.0, sxx = 0.0;
    for (int i = 0; i < k; ++i) {
        const double dx = std::log(distances[i]) - mx;
        sxy += dx * (std::log(std::max(audit.differences[i], 1e-300)) - my);
        sxx += dx * dx;
    }
    audit.slope = sxy / sxx;
    audit.ok = audit.slope >= 0.9;
    std::ostringstream os;
    os << "fitted exponent " << audit.slope;
    if (!audit.ok)
        os << " < 0.9: Y is not Lipschitz in the initial state; the differentiability hypotheses on F ("
           << terminal.description << ") fail";
    audit.finding = os.str();
    return audit;
}

}  // namespace basisrisk
