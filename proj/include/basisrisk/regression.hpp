#pragma once

#include <string>
#include <vector>

#include "basisrisk/linalg.hpp"

namespace basisrisk {

/// Global polynomials of total degree <= degree in the index coordinates,
/// optionally standardized per step by the cross-section mean and deviation.
/// Each coordinate is clamped to its [tail, 1 - tail] sample quantiles before
/// the features are formed, so fitted functions are flat beyond them.
struct RegressionBasis {
    int degree = 3;
    bool standardize = true;
    double tail = 0.001;
};

/// C(m + D, D)
int basis_size(int m, int degree);

class PolynomialFeatures {
public:
    PolynomialFeatures() = default;

    /// Centers/scales from the sample (m x N). Coordinates with no spread are
    /// dropped; if none remain the basis is the constant alone.
    static PolynomialFeatures from_sample(const Matrix& states, const RegressionBasis& basis);

    int size() const { return static_cast<int>(exponents_.size()); }
    int degree() const { return degree_; }
    int dimension() const { return static_cast<int>(center_.size()); }
    bool degenerate() const { return active_.empty(); }
    const Vector& center() const { return center_; }
    void set_degree(int degree);

    void fill(const Vector& r, double* out) const;
    Vector features(const Vector& r) const;
    Matrix jacobian(const Vector& r) const;  // size x m

private:
    double coordinate(const Vector& r, int j, bool* clamped = nullptr) const;

    Vector center_;
    Vector scale_;
    Vector lower_;
    Vector upper_;
    std::vector<int> active_;
    int degree_ = 0;
    std::vector<std::vector<int>> exponents_;  // per basis function, per active coordinate
};

/// Least-squares fit of q targets on the polynomial features of one step.
struct FittedFunction {
    PolynomialFeatures features;
    Matrix coefficients;     // size x q
    Vector residual_variance;
    Matrix gram_inverse;     // (X^T X)^{-1}
    int n_samples = 0;

    bool empty() const { return coefficients.size() == 0; }
    Vector value(const Vector& r) const;
    Matrix gradient(const Vector& r) const;  // q x m
    /// Standard error of the fitted value of one target at r.
    double standard_error(const Vector& r, int target = 0) const;
};

/// Design matrix and QR factorization of one cross-section, shared across
/// all targets regressed at that step.
class CrossSectionRegression {
public:
    CrossSectionRegression(const Matrix& states, const RegressionBasis& basis);

    FittedFunction fit(const Matrix& targets) const;  // targets: N x q
    Matrix fitted_values(const FittedFunction& fn) const { return design_ * fn.coefficients; }

    int requested_degree() const { return requested_degree_; }
    int degree() const { return features_.degree(); }
    bool degenerate() const { return features_.degenerate(); }
    bool degree_reduced() const { return !features_.degenerate() && features_.degree() < requested_degree_; }

private:
    void assemble(const Matrix& states);

    PolynomialFeatures features_;
    Matrix design_;
    Eigen::ColPivHouseholderQR<Matrix> qr_;
    Matrix gram_inverse_;
    int requested_degree_ = 0;
};

}  // namespace basisrisk
