#include "basisrisk/market_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "basisrisk/parallel.hpp"
#include "basisrisk/philox.hpp"

namespace basisrisk {
namespace {

std::string describe_state(double t, const Vector& r) {
    std::ostringstream os;
    os << "t=" << t << ", r=(";
    for (int j = 0; j < r.size(); ++j) os << (j ? ", " : "") << r(j);
    os << ")";
    return os.str();
}

template <class F>
Matrix central_difference(F&& f, const Vector& r, int rows) {
    Matrix jac(rows, r.size());
    for (int j = 0; j < r.size(); ++j) {
        const double h = fd_step(r(j));
        Vector up = r, dn = r;
        up(j) += h;
        dn(j) -= h;
        jac.col(j) = (f(up) - f(dn)) / (2.0 * h);
    }
    return jac;
}

template <class F>
std::vector<Matrix> central_difference_slices(F&& f, const Vector& r) {
    std::vector<Matrix> out;
    out.reserve(r.size());
    for (int j = 0; j < r.size(); ++j) {
        const double h = fd_step(r(j));
        Vector up = r, dn = r;
        up(j) += h;
        dn(j) -= h;
        out.push_back((f(up) - f(dn)) / (2.0 * h));
    }
    return out;
}

}  // namespace

void MarketSpec::validate() const {
    std::vector<std::string> problems;
    if (m < 1) problems.push_back("index dimension m must be positive");
    if (k < 1) problems.push_back("asset count k must be positive");
    if (d < k) problems.push_back("Brownian dimension d must be >= k");
    if (!(eta > 0.0)) problems.push_back("risk aversion eta must be > 0");
    if (!(horizon > 0.0)) problems.push_back("horizon T must be > 0");
    if (!index_drift || !index_vol || !asset_drift || !asset_vol) problems.push_back("missing coefficient function");
    if (!payoff.value) problems.push_back("missing payoff");
    if (!problems.empty()) {
        std::ostringstream os;
        os << "market_model: invalid MarketSpec:";
        for (const auto& p : problems) os << " [" << p << "]";
        throw ConfigurationError(os.str());
    }
}

Matrix index_drift_jacobian(const MarketSpec& spec, double t, const Vector& r) {
    if (spec.index_drift_jacobian) return spec.index_drift_jacobian(t, r);
    return central_difference([&](const Vector& x) { return spec.index_drift(t, x); }, r, spec.m);
}

std::vector<Matrix> index_vol_jacobian(const MarketSpec& spec, double t, const Vector& r) {
    if (spec.index_vol_jacobian) return spec.index_vol_jacobian(t, r);
    return central_difference_slices([&](const Vector& x) { return spec.index_vol(t, x); }, r);
}

Matrix asset_drift_jacobian(const MarketSpec& spec, double t, const Vector& r) {
    if (spec.asset_drift_jacobian) return spec.asset_drift_jacobian(t, r);
    return central_difference([&](const Vector& x) { return spec.asset_drift(t, x); }, r, spec.k);
}

std::vector<Matrix> asset_vol_jacobian(const MarketSpec& spec, double t, const Vector& r) {
    if (spec.asset_vol_jacobian) return spec.asset_vol_jacobian(t, r);
    return central_difference_slices([&](const Vector& x) { return spec.asset_vol(t, x); }, r);
}

AssumptionAudit audit_assumptions(const MarketSpec& spec, const std::vector<double>& times,
                                  const std::vector<Vector>& states, double ellipticity_floor) {
    AssumptionAudit audit;
    audit.dimension_ok = spec.d >= spec.k;
    if (!audit.dimension_ok) audit.violations.push_back("d < k");
    audit.min_ellipticity = std::numeric_limits<double>::infinity();
    audit.max_ellipticity = 0.0;
    audit.finite_ok = true;

    for (double t : times) {
        for (std::size_t i = 0; i < states.size(); ++i) {
            const Vector& x = states[i];
            const Vector b = spec.index_drift(t, x);
            const Matrix rho = spec.index_vol(t, x);
            const Vector alpha = spec.asset_drift(t, x);
            const Matrix beta = spec.asset_vol(t, x);
            if (!b.allFinite() || !rho.allFinite() || !alpha.allFinite() || !beta.allFinite()) {
                audit.finite_ok = false;
                audit.violations.push_back("non-finite coefficient at " + describe_state(t, x));
                continue;
            }
            const Eigen::SelfAdjointEigenSolver<Matrix> eig(beta * beta.transpose());
            audit.min_ellipticity = std::min(audit.min_ellipticity, eig.eigenvalues().minCoeff());
            audit.max_ellipticity = std::max(audit.max_ellipticity, eig.eigenvalues().maxCoeff());
            audit.growth_estimate = std::max(audit.growth_estimate, (b.norm() + rho.norm()) / (1.0 + x.norm()));
            for (std::size_t j = i + 1; j < states.size(); ++j) {
                const double dist = (x - states[j]).norm();
                if (dist <= 0.0) continue;
                const double diff = (b - spec.index_drift(t, states[j])).norm() +
                                    (rho - spec.index_vol(t, states[j])).norm();
                audit.lipschitz_estimate = std::max(audit.lipschitz_estimate, diff / dist);
            }
        }
    }
    audit.ellipticity_ok = audit.min_ellipticity >= ellipticity_floor && std::isfinite(audit.max_ellipticity);
    if (!audit.ellipticity_ok) {
        std::ostringstream os;
        os << "beta beta^* not uniformly elliptic: smallest eigenvalue " << audit.min_ellipticity;
        audit.violations.push_back(os.str());
    }
    return audit;
}

Matrix PathEnsemble::flow(int n, int path) const {
    return Eigen::Map<const Matrix>(flows[n].col(path).data(), m, m);
}

PathEnsemble PathEnsemble::slice(int begin, int count) const {
    PathEnsemble out = *this;
    out.n_paths = count;
    out.first_stream = stream_id(begin);
    for (auto& s : out.states) s = s.middleCols(begin, count).eval();
    for (auto& s : out.increments) s = s.middleCols(begin, count).eval();
    for (auto& s : out.flows) s = s.middleCols(begin, count).eval();
    if (!singular_flow.empty())
        out.singular_flow.assign(singular_flow.begin() + begin, singular_flow.begin() + begin + count);
    return out;
}

PathEnsemble simulate_paths(const MarketSpec& spec, double t0, const Vector& r0, int n_paths, int n_steps,
                            std::uint64_t seed, std::uint64_t first_stream, bool antithetic) {
    if (n_paths < 2) throw std::invalid_argument("market_model: simulate_paths needs n_paths >= 2");
    if (r0.size() != spec.m) throw std::invalid_argument("market_model: r0 has wrong dimension");
    return simulate_paths_from(spec, t0, r0.replicate(1, n_paths), n_steps, seed, first_stream, antithetic);
}

PathEnsemble simulate_paths_from(const MarketSpec& spec, double t0, const Matrix& r0, int n_steps,
                                 std::uint64_t seed, std::uint64_t first_stream, bool antithetic) {
    spec.validate();
    const int n_paths = static_cast<int>(r0.cols());
    if (n_paths < 2) throw std::invalid_argument("market_model: simulate_paths needs n_paths >= 2");
    if (n_steps < 1) throw std::invalid_argument("market_model: simulate_paths needs n_steps >= 1");
    if (r0.rows() != spec.m) throw std::invalid_argument("market_model: r0 has wrong dimension");
    if (!r0.allFinite()) throw std::invalid_argument("market_model: r0 must be finite");
    if (!(t0 < spec.horizon)) throw std::invalid_argument("market_model: t0 must lie before the horizon");

    PathEnsemble ens;
    ens.t0 = t0;
    ens.n_steps = n_steps;
    ens.n_paths = n_paths;
    ens.step = (spec.horizon - t0) / n_steps;
    ens.m = spec.m;
    ens.d = spec.d;
    ens.seed = seed;
    ens.first_stream = first_stream;
    ens.antithetic = antithetic;
    ens.states.assign(n_steps + 1, Matrix(spec.m, n_paths));
    ens.increments.assign(n_steps, Matrix(spec.d, n_paths));
    ens.states[0] = r0;

    const double h = ens.step;
    const double sqrt_h = std::sqrt(h);
    parallel_for(static_cast<std::size_t>(n_paths), [&](std::size_t begin, std::size_t end) {
        Vector r(spec.m), dw(spec.d);
        for (std::size_t i = begin; i < end; ++i) {
            const int path = static_cast<int>(i);
            const std::uint64_t id = ens.stream_id(path);
            const NormalStream stream(seed, antithetic ? id >> 1 : id);
            const double scale = antithetic && (id & 1U) ? -sqrt_h : sqrt_h;
            r = r0.col(path);
            for (int n = 0; n < n_steps; ++n) {
                for (int l = 0; l < spec.d; l += 2) {
                    const auto z = stream.pair(static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(l / 2));
                    dw(l) = scale * z[0];
                    if (l + 1 < spec.d) dw(l + 1) = scale * z[1];
                }
                const double t = ens.time(n);
                const Vector b = spec.index_drift(t, r);
                const Matrix rho = spec.index_vol(t, r);
                if (!b.allFinite() || !rho.allFinite()) {
                    std::ostringstream os;
                    os << "market_model: non-finite coefficient at " << describe_state(t, r) << ", path " << path;
                    throw SimulationError(os.str());
                }
                r += b * h + rho * dw;
                ens.increments[n].col(path) = dw;
                ens.states[n + 1].col(path) = r;
            }
        }
    });
    return ens;
}

PathEnsemble simulate_flow(const MarketSpec& spec, PathEnsemble ens) {
    const int m = ens.m;
    ens.flows.assign(ens.n_steps + 1, Matrix(m * m, ens.n_paths));
    ens.singular_flow.assign(ens.n_paths, 0);
    const double h = ens.step;
    parallel_for(static_cast<std::size_t>(ens.n_paths), [&](std::size_t begin, std::size_t end) {
        Matrix phi(m, m), step_map(m, m);
        for (std::size_t i = begin; i < end; ++i) {
            const int path = static_cast<int>(i);
            phi.setIdentity();
            ens.flows[0].col(path) = Eigen::Map<const Vector>(phi.data(), m * m);
            for (int n = 0; n < ens.n_steps; ++n) {
                const double t = ens.time(n);
                const Vector r = ens.states[n].col(path);
                const Vector dw = ens.increments[n].col(path);
                const auto vol_slices = index_vol_jacobian(spec, t, r);
                step_map = index_drift_jacobian(spec, t, r) * h;
                for (int j = 0; j < m; ++j) step_map.col(j) += vol_slices[j] * dw;
                phi += step_map * phi;
                ens.flows[n + 1].col(path) = Eigen::Map<const Vector>(phi.data(), m * m);
                if (std::abs(phi.determinant()) < 1e-12) ens.singular_flow[path] = 1;
            }
        }
    });
    return ens;
}

std::vector<Matrix> malliavin_gradient(const MarketSpec& spec, const PathEnsemble& ens, int theta_idx, int s_idx) {
    if (!ens.has_flow()) throw std::invalid_argument("market_model: malliavin_gradient needs flow matrices");
    if (theta_idx < 0 || s_idx > ens.n_steps || theta_idx > s_idx)
        throw std::invalid_argument("market_model: malliavin_gradient needs 0 <= theta_idx <= s_idx <= n_steps");
    std::vector<Matrix> out(ens.n_paths);
    const double t_theta = ens.time(theta_idx);
    parallel_for(static_cast<std::size_t>(ens.n_paths), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const int path = static_cast<int>(i);
            const Matrix phi_theta = ens.flow(theta_idx, path);
            const Matrix rho = spec.index_vol(t_theta, ens.states[theta_idx].col(path));
            if (theta_idx == s_idx) {
                out[path] = rho;
                continue;
            }
            if (std::abs(phi_theta.determinant()) < 1e-12) {
                std::ostringstream os;
                os << "market_model: singular flow at step " << theta_idx << " on path " << path;
                throw SimulationError(os.str());
            }
            out[path] = ens.flow(s_idx, path) * phi_theta.partialPivLu().solve(rho);
        }
    });
    return out;
}

}  // namespace basisrisk
