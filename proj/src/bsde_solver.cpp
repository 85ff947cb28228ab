#include "basisrisk/bsde_solver.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "basisrisk/parallel.hpp"

namespace basisrisk {
namespace {

struct GaussHermite {
    std::vector<double> nodes;
    std::vector<double> weights;  // normalized to sum 1 (standard normal)
};

// Golub-Welsch for the probabilists' Hermite weight.
GaussHermite gauss_hermite(int n) {
    Matrix jacobi = Matrix::Zero(n, n);
    for (int i = 1; i < n; ++i) jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(static_cast<double>(i));
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(jacobi);
    GaussHermite gh;
    for (int i = 0; i < n; ++i) {
        gh.nodes.push_back(eig.eigenvalues()(i));
        const double v = eig.eigenvectors()(0, i);
        gh.weights.push_back(v * v);
    }
    return gh;
}

std::string step_context(TerminalKind kind, int step, double t) {
    std::ostringstream os;
    os << "bsde_solver: " << to_string(kind) << " solve, step " << step << " (t=" << t << ")";
    return os.str();
}

BsdeSolution backward(const PathEnsemble& ens, const MarketSpec& spec, const Payoff& terminal,
                      std::shared_ptr<const Driver> driver, TerminalKind kind, const RegressionBasis& basis,
                      const SolverOptions& options) {
    spec.validate();
    if (ens.m != spec.m || ens.d != spec.d) throw std::invalid_argument("bsde_solver: ensemble/spec dimension mismatch");
    const int needed = 20 * basis_size(spec.m, basis.degree);
    if (ens.n_paths < needed) {
        std::ostringstream os;
        os << "bsde_solver: " << ens.n_paths << " paths is below 20 x basis size (" << needed << ")";
        throw std::invalid_argument(os.str());
    }

    BsdeSolution sol;
    sol.kind = kind;
    sol.terminal = terminal;
    sol.driver = std::move(driver);
    sol.spec = std::make_shared<const MarketSpec>(spec);
    sol.t0 = ens.t0;
    sol.step = ens.step;
    sol.n_steps = ens.n_steps;
    sol.n_paths = ens.n_paths;
    sol.m = ens.m;
    sol.d = ens.d;
    sol.seed = ens.seed;
    sol.first_stream = ens.first_stream;
    sol.quadrature_nodes = options.quadrature_nodes;
    const double h = ens.step;
    sol.z_max = options.clip_z ? (2.0 * terminal.sup_norm + 1.0) / std::sqrt(h)
                               : std::numeric_limits<double>::infinity();

    const int n = ens.n_paths;
    sol.y.assign(ens.n_steps + 1, Vector(n));
    sol.z.assign(ens.n_steps, Matrix(ens.d, n));
    sol.continuation.resize(ens.n_steps);
    sol.z_fit.resize(ens.n_steps);
    sol.common_state.resize(ens.n_steps);

    Vector& terminal_slice = sol.y[ens.n_steps];
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            terminal_slice(static_cast<int>(i)) = terminal(ens.states[ens.n_steps].col(static_cast<int>(i)));
    });
    if (!terminal_slice.allFinite())
        throw SolverError(step_context(kind, ens.n_steps, ens.time(ens.n_steps)) + ": non-finite terminal value");

    std::atomic<long> clips{0};
    for (int s = ens.n_steps - 1; s >= 0; --s) {
        const double t = ens.time(s);
        const Matrix& states = ens.states[s];
        const CrossSectionRegression reg(states, basis);
        if (reg.degenerate()) {
            ++sol.diagnostics.degenerate_steps;
            sol.common_state[s] = states.col(0);
        } else if (reg.degree_reduced()) {
            ++sol.diagnostics.degree_reductions;
            std::ostringstream os;
            os << "step " << s << ": basis degree reduced from " << reg.requested_degree() << " to "
               << reg.degree();
            sol.diagnostics.notes.push_back(os.str());
        }

        const Vector& next = sol.y[s + 1];
        sol.continuation[s] = reg.fit(next);
        const Vector conditional = reg.fitted_values(sol.continuation[s]);
        const Vector residual = next - conditional;
        const Matrix z_targets = (ens.increments[s].transpose().array().colwise() * residual.array()) / h;
        sol.z_fit[s] = reg.fit(z_targets);
        Matrix& z_slice = sol.z[s];
        z_slice = reg.fitted_values(sol.z_fit[s]).transpose();

        Vector& y_slice = sol.y[s];
        parallel_for(static_cast<std::size_t>(n), [&](std::size_t begin, std::size_t end) {
            long local = 0;
            for (std::size_t i = begin; i < end; ++i) {
                const int path = static_cast<int>(i);
                bool clipped = false;
                const Vector zc = sol.clip(z_slice.col(path), &clipped);
                if (clipped) {
                    ++local;
                    z_slice.col(path) = zc;
                }
                y_slice(path) = conditional(path) - h * sol.driver->value(s, path, t, states.col(path), zc);
            }
            clips += local;
        });
        if (!y_slice.allFinite() || !z_slice.allFinite())
            throw SolverError(step_context(kind, s, t) + ": non-finite value (first offending step)");
    }
    sol.diagnostics.clip_events = clips.load();
    sol.diagnostics.driver_evaluations = static_cast<long>(n) * ens.n_steps;
    return sol;
}

}  // namespace

const char* to_string(TerminalKind kind) {
    switch (kind) {
        case TerminalKind::WithClaim: return "WITH_CLAIM";
        case TerminalKind::ZeroClaim: return "ZERO_CLAIM";
        case TerminalKind::Mup: return "MUP";
        case TerminalKind::Gradient: return "GRADIENT";
    }
    return "UNKNOWN";
}

double QuadraticDriver::value(int, int, double t, const Vector& r, const Vector& z) const {
    return driver(make_context(spec_, t, r), z);
}

Vector QuadraticDriver::grad_z(int, int, double t, const Vector& r, const Vector& z) const {
    return driver_grad_z(make_context(spec_, t, r), z);
}

Vector QuadraticDriver::grad_r(int, int, double t, const Vector& r, const Vector& z) const {
    return driver_grad_r(spec_, t, r, z);
}

Vector LinearDriver::slope(int step, int path, const Vector& r) const {
    if (path >= 0) return slope_.per_step[step].col(path);
    if (!slope_.at_state) throw SolverError("bsde_solver: linear driver has no off-path slope");
    return slope_.at_state(step, r);
}

double LinearDriver::value(int step, int path, double, const Vector& r, const Vector& z) const {
    return slope(step, path, r).dot(z);
}

Vector LinearDriver::grad_z(int step, int path, double, const Vector& r, const Vector&) const {
    return slope(step, path, r);
}

Vector LinearDriver::grad_r(int step, int, double, const Vector& r, const Vector& z) const {
    if (!slope_.at_state) throw SolverError("bsde_solver: linear driver has no off-path slope");
    Vector grad(r.size());
    for (int j = 0; j < r.size(); ++j) {
        const double h = fd_step(r(j));
        Vector up = r, dn = r;
        up(j) += h;
        dn(j) -= h;
        grad(j) = (slope_.at_state(step, up) - slope_.at_state(step, dn)).dot(z) / (2.0 * h);
    }
    return grad;
}

Vector BsdeSolution::clip(const Vector& zv, bool* clipped) const {
    const double norm = zv.norm();
    if (norm > z_max) {
        if (clipped) *clipped = true;
        return zv * (z_max / norm);
    }
    if (clipped) *clipped = false;
    return zv;
}

double BsdeSolution::initial_value() const { return y[0].mean(); }

bool BsdeSolution::at_common_state(int s, const Vector& r) const {
    const Vector& c = common_state[s];
    return (r - c).norm() <= 1e-12 * (1.0 + c.norm());
}

double BsdeSolution::direct_value(int s, const Vector& r) const {
    if (s == n_steps) return terminal(r);
    const Vector zc = clip(z_fit[s].value(r));
    return continuation[s].value(r)(0) - step * driver->value(s, -1, time(s), r, zc);
}

Vector BsdeSolution::direct_gradient(int s, const Vector& r) const {
    if (s == n_steps) return terminal.gradient ? terminal.gradient(r) : Vector::Zero(m).eval();
    if (common_state[s].size() > 0) return Vector::Zero(m);
    const double t = time(s);
    const Vector zc = clip(z_fit[s].value(r));
    const Matrix dz = z_fit[s].gradient(r);  // d x m
    const Vector df_dz = driver->grad_z(s, -1, t, r, zc);
    const Vector df_dr = driver->grad_r(s, -1, t, r, zc);
    return continuation[s].gradient(r).row(0).transpose() - step * (df_dr + dz.transpose() * df_dz);
}

BsdeSolution::OneStep BsdeSolution::quadrature(int s, const Vector& r) const {
    const GaussHermite gh = gauss_hermite(quadrature_nodes);
    const double t = time(s);
    const double sqrt_h = std::sqrt(step);
    const Vector drift = spec->index_drift(t, r);
    const Matrix vol = spec->index_vol(t, r);
    const Matrix drift_jac = index_drift_jacobian(*spec, t, r);
    const auto vol_jac = index_vol_jacobian(*spec, t, r);

    double expectation = 0.0;
    Vector zq = Vector::Zero(d);
    Vector grad_e = Vector::Zero(m);
    Matrix grad_z = Matrix::Zero(d, m);

    const int q = quadrature_nodes;
    long total = 1;
    for (int l = 0; l < d; ++l) total *= q;
    Vector xi(d);
    Matrix jac(m, m);
    for (long idx = 0; idx < total; ++idx) {
        double w = 1.0;
        long rem = idx;
        for (int l = 0; l < d; ++l) {
            xi(l) = gh.nodes[rem % q];
            w *= gh.weights[rem % q];
            rem /= q;
        }
        const Vector x = r + drift * step + vol * (sqrt_h * xi);
        const double next = direct_value(s + 1, x);
        const Vector next_grad = direct_gradient(s + 1, x);
        jac = Matrix::Identity(m, m) + drift_jac * step;
        for (int j = 0; j < m; ++j) jac.col(j) += vol_jac[j] * (sqrt_h * xi);
        const Vector chain = jac.transpose() * next_grad;
        expectation += w * next;
        zq += w * next * xi;
        grad_e += w * chain;
        grad_z += w * xi * chain.transpose();
    }
    zq /= sqrt_h;
    grad_z /= sqrt_h;

    const Vector zc = clip(zq);
    OneStep out;
    out.z = zc;
    out.value = expectation - step * driver->value(s, -1, t, r, zc);
    out.gradient = grad_e - step * (driver->grad_r(s, -1, t, r, zc) + grad_z.transpose() * driver->grad_z(s, -1, t, r, zc));
    return out;
}

double BsdeSolution::value_at(int s, const Vector& r) const {
    if (s < 0 || s > n_steps) throw std::out_of_range("bsde_solver: step out of range");
    if (s == n_steps || common_state[s].size() == 0 || at_common_state(s, r)) return direct_value(s, r);
    return quadrature(s, r).value;
}

Vector BsdeSolution::gradient_at(int s, const Vector& r) const {
    if (s < 0 || s > n_steps) throw std::out_of_range("bsde_solver: step out of range");
    if (s == n_steps || common_state[s].size() == 0) return direct_gradient(s, r);
    return quadrature(s, r).gradient;
}

Vector BsdeSolution::z_at(int s, const Vector& r) const {
    if (s < 0 || s >= n_steps) throw std::out_of_range("bsde_solver: no Z at this step");
    if (common_state[s].size() == 0 || at_common_state(s, r)) return clip(z_fit[s].value(r));
    return quadrature(s, r).z;
}

bool BsdeSolution::same_grid(const BsdeSolution& other) const {
    return t0 == other.t0 && step == other.step && n_steps == other.n_steps && n_paths == other.n_paths &&
           m == other.m && d == other.d && seed == other.seed && first_stream == other.first_stream;
}

int BsdeSolution::step_index(double t) const {
    const double pos = (t - t0) / step;
    const long idx = std::lround(pos);
    if (idx < 0 || idx > n_steps || std::abs(pos - static_cast<double>(idx)) > 1e-9) {
        std::ostringstream os;
        os << "bsde_solver: time " << t << " is not on the solution grid";
        throw std::out_of_range(os.str());
    }
    return static_cast<int>(idx);
}

void BsdeSolution::export_csv(std::ostream& out, int max_paths) const {
    out << "step,time,path,Y";
    for (int l = 0; l < d; ++l) out << ",Z_" << (l + 1);
    out << '\n';
    const int paths = std::min(max_paths, n_paths);
    char buf[64];
    for (int s = 0; s <= n_steps; ++s) {
        for (int i = 0; i < paths; ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", time(s));
            out << s << ',' << buf << ',' << i << ',';
            std::snprintf(buf, sizeof buf, "%.17g", y[s](i));
            out << buf;
            for (int l = 0; l < d; ++l) {
                if (s < n_steps) {
                    std::snprintf(buf, sizeof buf, "%.17g", z[s](l, i));
                    out << ',' << buf;
                } else {
                    out << ",nan";
                }
            }
            out << '\n';
        }
    }
}

BsdeSolution solve_backward(const PathEnsemble& ens, const MarketSpec& spec, TerminalKind terminal,
                            const RegressionBasis& basis, const SolverOptions& options) {
    switch (terminal) {
        case TerminalKind::WithClaim: return solve_backward(ens, spec, spec.payoff, basis, options);
        case TerminalKind::ZeroClaim: {
            auto sol = solve_backward(ens, spec, zero_payoff(spec.m), basis, options);
            sol.kind = TerminalKind::ZeroClaim;
            return sol;
        }
        default: throw std::invalid_argument("bsde_solver: solve_backward handles WITH_CLAIM and ZERO_CLAIM only");
    }
}

BsdeSolution solve_backward(const PathEnsemble& ens, const MarketSpec& spec, const Payoff& terminal,
                            const RegressionBasis& basis, const SolverOptions& options) {
    return backward(ens, spec, terminal, std::make_shared<QuadraticDriver>(spec), TerminalKind::WithClaim, basis,
                    options);
}

BsdeSolution solve_linear_bsde(const PathEnsemble& ens, const MarketSpec& spec, const Payoff& terminal,
                               SlopeField slope, const RegressionBasis& basis, const SolverOptions& options) {
    if (static_cast<int>(slope.per_step.size()) != ens.n_steps)
        throw std::invalid_argument("bsde_solver: slope field does not match the ensemble grid");
    for (const auto& s : slope.per_step)
        if (s.rows() != ens.d || s.cols() != ens.n_paths)
            throw std::invalid_argument("bsde_solver: slope field has the wrong shape");
    return backward(ens, spec, terminal, std::make_shared<LinearDriver>(std::move(slope)), TerminalKind::Mup, basis,
                    options);
}

SlopeField driver_slope(std::shared_ptr<const BsdeSolution> base, const PathEnsemble& ens) {
    if (ens.n_steps != base->n_steps || ens.n_paths != base->n_paths)
        throw std::invalid_argument("bsde_solver: ensemble does not match the base solution");
    SlopeField field;
    field.per_step.assign(base->n_steps, Matrix(base->d, base->n_paths));
    for (int s = 0; s < base->n_steps; ++s) {
        const double t = base->time(s);
        Matrix& out = field.per_step[s];
        parallel_for(static_cast<std::size_t>(base->n_paths), [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                const int path = static_cast<int>(i);
                out.col(path) = base->driver->grad_z(s, path, t, ens.states[s].col(path), base->z[s].col(path));
            }
        });
    }
    field.at_state = [base](int s, const Vector& r) {
        return base->driver->grad_z(s, -1, base->time(s), r, base->z_at(s, r));
    };
    return field;
}

BatchEstimate batch_estimate(const PathEnsemble& ens, int batches,
                             const std::function<double(const PathEnsemble&)>& estimator) {
    if (batches < 2) throw std::invalid_argument("bsde_solver: batch_estimate needs at least 2 batches");
    BatchEstimate out;
    const int size = ens.n_paths / batches;
    for (int b = 0; b < batches; ++b) out.values.push_back(estimator(ens.slice(b * size, size)));
    double sum = 0.0;
    for (double v : out.values) sum += v;
    out.mean = sum / batches;
    double ss = 0.0;
    for (double v : out.values) ss += (v - out.mean) * (v - out.mean);
    out.standard_error = std::sqrt(ss / (batches - 1)) / std::sqrt(static_cast<double>(batches));
    return out;
}

std::vector<ConsistencyPoint> markov_consistency(const MarketSpec& spec, const PathEnsemble& ens,
                                                 TerminalKind terminal, const RegressionBasis& basis, int step,
                                                 const std::vector<Vector>& points, int sub_paths,
                                                 std::uint64_t sub_seed, int batches, double tolerance_in_se) {
    if (step <= 0 || step >= ens.n_steps) throw std::invalid_argument("bsde_solver: consistency step must be interior");
    const BsdeSolution full = solve_backward(ens, spec, terminal, basis);
    std::vector<BsdeSolution> full_batches;
    const int size = ens.n_paths / batches;
    for (int b = 0; b < batches; ++b) full_batches.push_back(solve_backward(ens.slice(b * size, size), spec, terminal, basis));

    std::vector<ConsistencyPoint> out;
    for (std::size_t p = 0; p < points.size(); ++p) {
        ConsistencyPoint cp;
        cp.state = points[p];
        cp.fitted = full.value_at(step, cp.state);
        std::vector<double> fb;
        for (const auto& sol : full_batches) fb.push_back(sol.value_at(step, cp.state));
        double mean = 0.0, ss = 0.0;
        for (double v : fb) mean += v / batches;
        for (double v : fb) ss += (v - mean) * (v - mean);
        const double se_full = std::sqrt(ss / (batches - 1)) / std::sqrt(static_cast<double>(batches));

        const PathEnsemble sub = simulate_paths(spec, ens.time(step), cp.state, sub_paths, ens.n_steps - step,
                                                sub_seed + 7919 * p);
        cp.resolved = solve_backward(sub, spec, terminal, basis).initial_value();
        const BatchEstimate sub_batches = batch_estimate(sub, batches, [&](const PathEnsemble& e) {
            return solve_backward(e, spec, terminal, basis).initial_value();
        });
        cp.standard_error = std::hypot(se_full, sub_batches.standard_error);
        cp.ok = std::abs(cp.fitted - cp.resolved) <= tolerance_in_se * cp.standard_error;
        out.push_back(cp);
    }
    return out;
}

}  // namespace basisrisk
