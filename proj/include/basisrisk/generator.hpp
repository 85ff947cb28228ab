#pragma once

#include <stdexcept>
#include <vector>

#include "basisrisk/linalg.hpp"
#include "basisrisk/market_model.hpp"

namespace basisrisk {

class EllipticityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything the quadratic driver needs at one (t, r). Vectors in R^d are
/// row vectors in the math; here they are stored as column Vectors and P is
/// symmetric, so zP and Pz coincide.
struct DriverContext {
    Vector theta;      // market price of risk beta^*(beta beta^*)^{-1} alpha, in R^d
    Matrix beta;       // k x d
    Matrix projector;  // P = beta^*(beta beta^*)^{-1} beta, orthogonal projector onto C(t,r)
    Matrix hedge_map;  // beta^*(beta beta^*)^{-1}, d x k
    double eta = 1.0;
    bool jitter_used = false;
};

/// Builds the context; inverts beta beta^* by Cholesky, adding 1e-12 jitter
/// when the factorization fails. Condition number above 1e12 is an
/// EllipticityError.
DriverContext make_context(const MarketSpec& spec, double t, const Vector& r);

/// Orthogonal projection of z onto C(t, r) = {x beta : x in R^k}.
Vector project(const DriverContext& ctx, const Vector& z);

/// f(t, r, z) = z.theta + |theta|^2/(2 eta) - (eta/2) dist^2(z + theta/eta, C(t, r)).
double driver(const DriverContext& ctx, const Vector& z);

/// theta - eta (I - P)(z + theta/eta)
Vector driver_grad_z(const DriverContext& ctx, const Vector& z);

/// r-gradient of the driver at fixed z, through theta(t, r) and P(t, r).
Vector driver_grad_r(const MarketSpec& spec, double t, const Vector& r, const Vector& z);

/// Constant c in |f| <= c (1 + |z|^2) given a bound on |theta|.
double driver_growth_constant(double theta_bound, double eta);

/// r-derivatives of theta and P, one slice per index coordinate.
struct ContextDerivative {
    std::vector<Vector> theta;
    std::vector<Matrix> projector;
};
ContextDerivative context_derivative(const MarketSpec& spec, double t, const Vector& r);

}  // namespace basisrisk
