#include "basisrisk/generator.hpp"

#include <cmath>
#include <sstream>

namespace basisrisk {
namespace {

constexpr double kMaxCondition = 1e12;
constexpr double kJitter = 1e-12;

}  // namespace

DriverContext make_context(const MarketSpec& spec, double t, const Vector& r) {
    DriverContext ctx;
    ctx.eta = spec.eta;
    ctx.beta = spec.asset_vol(t, r);
    const Vector alpha = spec.asset_drift(t, r);
    Matrix gram = ctx.beta * ctx.beta.transpose();

    const Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > kMaxCondition) {
        std::ostringstream os;
        os << "generator: beta beta^* violates ellipticity at t=" << t << " (eigenvalues " << lo << ", " << hi
           << ")";
        throw EllipticityError(os.str());
    }

    Eigen::LLT<Matrix> chol(gram);
    if (chol.info() != Eigen::Success) {
        gram += kJitter * Matrix::Identity(spec.k, spec.k);
        chol.compute(gram);
        ctx.jitter_used = true;
        if (chol.info() != Eigen::Success) throw EllipticityError("generator: Cholesky of beta beta^* failed");
    }
    // hedge_map^T = (beta beta^*)^{-1} beta
    ctx.hedge_map = chol.solve(ctx.beta).transpose();
    ctx.theta = ctx.hedge_map * alpha;
    ctx.projector = ctx.hedge_map * ctx.beta;
    return ctx;
}

Vector project(const DriverContext& ctx, const Vector& z) { return ctx.projector * z; }

double driver(const DriverContext& ctx, const Vector& z) {
    const Vector shifted = z + ctx.theta / ctx.eta;
    const Vector off_subspace = shifted - ctx.projector * shifted;
    return z.dot(ctx.theta) + ctx.theta.squaredNorm() / (2.0 * ctx.eta) -
           0.5 * ctx.eta * off_subspace.squaredNorm();
}

Vector driver_grad_z(const DriverContext& ctx, const Vector& z) {
    const Vector shifted = z + ctx.theta / ctx.eta;
    return ctx.theta - ctx.eta * (shifted - ctx.projector * shifted);
}

ContextDerivative context_derivative(const MarketSpec& spec, double t, const Vector& r) {
    ContextDerivative out;
    out.theta.reserve(spec.m);
    out.projector.reserve(spec.m);
    if (spec.asset_drift_jacobian && spec.asset_vol_jacobian) {
        const Matrix beta = spec.asset_vol(t, r);
        const Vector alpha = spec.asset_drift(t, r);
        const Matrix gram_inv = (beta * beta.transpose()).inverse();
        const Matrix hedge = beta.transpose() * gram_inv;
        const Matrix dalpha = spec.asset_drift_jacobian(t, r);
        const auto dbeta = spec.asset_vol_jacobian(t, r);
        for (int j = 0; j < spec.m; ++j) {
            const Matrix dgram = dbeta[j] * beta.transpose() + beta * dbeta[j].transpose();
            const Matrix dgram_inv = -gram_inv * dgram * gram_inv;
            const Matrix dhedge = dbeta[j].transpose() * gram_inv + beta.transpose() * dgram_inv;
            out.theta.push_back(dhedge * alpha + hedge * dalpha.col(j));
            out.projector.push_back(dhedge * beta + hedge * dbeta[j]);
        }
        return out;
    }
    for (int j = 0; j < spec.m; ++j) {
        const double h = fd_step(r(j));
        Vector up = r, dn = r;
        up(j) += h;
        dn(j) -= h;
        const DriverContext cu = make_context(spec, t, up);
        const DriverContext cd = make_context(spec, t, dn);
        out.theta.push_back((cu.theta - cd.theta) / (2.0 * h));
        out.projector.push_back((cu.projector - cd.projector) / (2.0 * h));
    }
    return out;
}

Vector driver_grad_r(const MarketSpec& spec, double t, const Vector& r, const Vector& z) {
    const DriverContext ctx = make_context(spec, t, r);
    const ContextDerivative dctx = context_derivative(spec, t, r);
    const Vector shifted = z + ctx.theta / ctx.eta;
    const Vector off_subspace = shifted - ctx.projector * shifted;
    Vector grad(spec.m);
    for (int j = 0; j < spec.m; ++j) {
        const Vector& dtheta = dctx.theta[j];
        const Vector doff = -dctx.projector[j] * shifted + (dtheta - ctx.projector * dtheta) / ctx.eta;
        grad(j) = z.dot(dtheta) + ctx.theta.dot(dtheta) / ctx.eta - ctx.eta * off_subspace.dot(doff);
    }
    return grad;
}

double driver_growth_constant(double theta_bound, double eta) {
    return 0.5 * theta_bound + theta_bound * theta_bound / (2.0 * eta) + 0.5 * eta;
}

}  // namespace basisrisk
