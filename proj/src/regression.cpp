#include "basisrisk/regression.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "basisrisk/bsde_solver.hpp"
#include "basisrisk/parallel.hpp"

namespace basisrisk {
namespace {

void graded_exponents(int dims, int degree, std::vector<std::vector<int>>& out) {
    out.clear();
    std::vector<int> current(dims, 0);
    for (int total = 0; total <= degree; ++total) {
        std::function<void(int, int)> place = [&](int dim, int remaining) {
            if (dim == dims - 1) {
                current[dim] = remaining;
                out.push_back(current);
                return;
            }
            for (int e = remaining; e >= 0; --e) {
                current[dim] = e;
                place(dim + 1, remaining - e);
            }
        };
        if (dims == 0) {
            out.push_back({});
            return;
        }
        place(0, total);
    }
}

}  // namespace

int basis_size(int m, int degree) {
    long num = 1, den = 1;
    for (int i = 1; i <= degree; ++i) {
        num *= m + i;
        den *= i;
    }
    return static_cast<int>(num / den);
}

PolynomialFeatures PolynomialFeatures::from_sample(const Matrix& states, const RegressionBasis& basis) {
    PolynomialFeatures f;
    const int m = static_cast<int>(states.rows());
    const double n = static_cast<double>(states.cols());
    if (!(basis.tail >= 0.0 && basis.tail < 0.5)) throw std::invalid_argument("regression: tail must be in [0, 0.5)");
    f.center_ = Vector::Zero(m);
    f.scale_ = Vector::Ones(m);
    f.lower_ = Vector::Constant(m, -std::numeric_limits<double>::infinity());
    f.upper_ = Vector::Constant(m, std::numeric_limits<double>::infinity());
    for (int j = 0; j < m; ++j) {
        const double lo = states.row(j).minCoeff(), hi = states.row(j).maxCoeff();
        const double mean = states.row(j).sum() / n;
        const double var = (states.row(j).array() - mean).square().sum() / n;
        const double sd = std::sqrt(var);
        if (hi - lo <= 1e-12 * (1.0 + std::abs(lo))) {
            f.center_(j) = lo;
            continue;
        }
        if (sd <= 1e-12 * (1.0 + std::abs(mean))) {
            f.center_(j) = mean;
            continue;
        }
        f.active_.push_back(j);
        if (basis.tail > 0.0) {
            std::vector<double> x(states.cols());
            for (int i = 0; i < states.cols(); ++i) x[i] = states(j, i);
            const auto k = static_cast<std::ptrdiff_t>(std::floor(basis.tail * (x.size() - 1)));
            std::nth_element(x.begin(), x.begin() + k, x.end());
            f.lower_(j) = x[k];
            std::nth_element(x.begin(), x.end() - 1 - k, x.end());
            f.upper_(j) = x[x.size() - 1 - k];
        }
        if (basis.standardize) {
            f.center_(j) = mean;
            f.scale_(j) = sd;
        }
    }
    f.set_degree(basis.degree);
    return f;
}

void PolynomialFeatures::set_degree(int degree) {
    degree_ = active_.empty() ? 0 : degree;
    graded_exponents(static_cast<int>(active_.size()), degree_, exponents_);
}

double PolynomialFeatures::coordinate(const Vector& r, int j, bool* clamped) const {
    const int c = active_[j];
    const double x = std::clamp(r(c), lower_(c), upper_(c));
    if (clamped) *clamped = x != r(c);
    return (x - center_(c)) / scale_(c);
}

void PolynomialFeatures::fill(const Vector& r, double* out) const {
    const int a = static_cast<int>(active_.size());
    // powers[j][e] = x_j^e
    double powers[8][16];
    for (int j = 0; j < a; ++j) {
        const double x = coordinate(r, j);
        powers[j][0] = 1.0;
        for (int e = 1; e <= degree_; ++e) powers[j][e] = powers[j][e - 1] * x;
    }
    for (std::size_t b = 0; b < exponents_.size(); ++b) {
        double v = 1.0;
        for (int j = 0; j < a; ++j) v *= powers[j][exponents_[b][j]];
        out[b] = v;
    }
}

Vector PolynomialFeatures::features(const Vector& r) const {
    Vector out(size());
    fill(r, out.data());
    return out;
}

Matrix PolynomialFeatures::jacobian(const Vector& r) const {
    const int a = static_cast<int>(active_.size());
    Matrix jac = Matrix::Zero(size(), dimension());
    double powers[8][16];
    bool flat[8];
    for (int j = 0; j < a; ++j) {
        const double x = coordinate(r, j, &flat[j]);
        powers[j][0] = 1.0;
        for (int e = 1; e <= degree_; ++e) powers[j][e] = powers[j][e - 1] * x;
    }
    for (std::size_t b = 0; b < exponents_.size(); ++b) {
        for (int j = 0; j < a; ++j) {
            const int e = exponents_[b][j];
            if (e == 0 || flat[j]) continue;
            double v = e * powers[j][e - 1] / scale_(active_[j]);
            for (int l = 0; l < a; ++l)
                if (l != j) v *= powers[l][exponents_[b][l]];
            jac(static_cast<int>(b), active_[j]) = v;
        }
    }
    return jac;
}

Vector FittedFunction::value(const Vector& r) const {
    return coefficients.transpose() * features.features(r);
}

Matrix FittedFunction::gradient(const Vector& r) const {
    return coefficients.transpose() * features.jacobian(r);
}

double FittedFunction::standard_error(const Vector& r, int target) const {
    const Vector phi = features.features(r);
    return std::sqrt(std::max(0.0, residual_variance(target) * phi.dot(gram_inverse * phi)));
}

CrossSectionRegression::CrossSectionRegression(const Matrix& states, const RegressionBasis& basis)
    : requested_degree_(basis.degree) {
    if (basis.degree < 0 || basis.degree > 15) throw std::invalid_argument("regression: degree must be in [0, 15]");
    if (states.rows() > 8) throw std::invalid_argument("regression: index dimension above 8 is not supported");
    features_ = PolynomialFeatures::from_sample(states, basis);
    for (;;) {
        assemble(states);
        qr_.compute(design_);
        if (qr_.rank() == features_.size()) break;
        if (features_.degree() == 0) throw SolverError("regression: design matrix rank deficient at degree 0");
        features_.set_degree(features_.degree() - 1);
    }
    const Matrix gram = design_.transpose() * design_;
    gram_inverse_ = gram.ldlt().solve(Matrix::Identity(gram.rows(), gram.cols()));
}

void CrossSectionRegression::assemble(const Matrix& states) {
    const int n = static_cast<int>(states.cols());
    const int b = features_.size();
    // Row-major scratch so each path writes one contiguous row.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(n, b);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) features_.fill(states.col(static_cast<int>(i)), rows.row(i).data());
    });
    design_ = rows;
}

FittedFunction CrossSectionRegression::fit(const Matrix& targets) const {
    FittedFunction fn;
    fn.features = features_;
    fn.coefficients = qr_.solve(targets);
    fn.gram_inverse = gram_inverse_;
    fn.n_samples = static_cast<int>(design_.rows());
    const Matrix residual = targets - design_ * fn.coefficients;
    const double dof = std::max(1.0, static_cast<double>(design_.rows() - features_.size()));
    fn.residual_variance = residual.colwise().squaredNorm().transpose() / dof;
    return fn;
}

}  // namespace basisrisk
