#include "basisrisk/pricing.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "basisrisk/generator.hpp"
#include "basisrisk/parallel.hpp"

namespace basisrisk {
namespace {

void write_number(std::ostream& out, double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    out << buf;
}

MupEstimate sample_mean(const Vector& values) {
    MupEstimate est;
    const double n = static_cast<double>(values.size());
    est.value = values.mean();
    est.standard_error = std::sqrt((values.array() - est.value).square().sum() / (n - 1.0) / n);
    return est;
}

MupEstimate from_batches(double full_value, const std::vector<double>& batch_values) {
    MupEstimate est;
    est.value = full_value;
    const double b = static_cast<double>(batch_values.size());
    double mean = 0.0;
    for (double v : batch_values) mean += v / b;
    double ss = 0.0;
    for (double v : batch_values) ss += (v - mean) * (v - mean);
    est.standard_error = std::sqrt(ss / (b - 1.0) / b);
    return est;
}

/// Per-path weights; returns false if a product-form weight went negative.
bool girsanov_weights(const BsdeSolution& zero, const PathEnsemble& ens, GirsanovForm form, Vector& weights) {
    const auto slopes = mup_slopes(zero, ens);
    weights.resize(ens.n_paths);
    std::atomic<bool> negative{false};
    parallel_for(static_cast<std::size_t>(ens.n_paths), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const int path = static_cast<int>(i);
            double log_w = 0.0, prod_w = 1.0;
            for (int s = 0; s < ens.n_steps; ++s) {
                const double dot = slopes[s].col(path).dot(ens.increments[s].col(path));
                if (form == GirsanovForm::Log)
                    log_w += -dot - 0.5 * slopes[s].col(path).squaredNorm() * ens.step;
                else
                    prod_w *= 1.0 - dot;
            }
            if (form == GirsanovForm::Product && prod_w < 0.0) negative = true;
            weights(path) = form == GirsanovForm::Log ? std::exp(log_w) : prod_w;
        }
    });
    return !negative.load();
}

}  // namespace

const char* to_string(PriceSource source) { return source == PriceSource::Regression ? "REGRESSION" : "PDE"; }

PriceField PriceField::from_regression(std::shared_ptr<const BsdeSolution> with_claim,
                                       std::shared_ptr<const BsdeSolution> zero_claim) {
    if (!with_claim->same_grid(*zero_claim))
        throw std::invalid_argument("pricing: solutions do not share grid and ensemble");
    if (with_claim->spec->eta != zero_claim->spec->eta)
        throw std::invalid_argument("pricing: solutions use different risk aversion");
    PriceField p;
    p.source_ = PriceSource::Regression;
    p.eta_ = with_claim->spec->eta;
    p.reg_with_ = std::move(with_claim);
    p.reg_zero_ = std::move(zero_claim);
    return p;
}

PriceField PriceField::from_pde(std::shared_ptr<const PdeSolution> with_claim,
                                std::shared_ptr<const PdeSolution> zero_claim, double eta) {
    if (with_claim->nodes != zero_claim->nodes || with_claim->lower != zero_claim->lower ||
        with_claim->upper != zero_claim->upper || with_claim->snapshots() != zero_claim->snapshots() ||
        with_claim->t0 != zero_claim->t0)
        throw std::invalid_argument("pricing: PDE solutions do not share a grid");
    PriceField p;
    p.source_ = PriceSource::Pde;
    p.eta_ = eta;
    p.pde_with_ = std::move(with_claim);
    p.pde_zero_ = std::move(zero_claim);
    return p;
}

int PriceField::n_steps() const { return source_ == PriceSource::Regression ? reg_with_->n_steps : pde_with_->snapshots(); }

double PriceField::time(int step) const {
    return source_ == PriceSource::Regression ? reg_with_->time(step) : pde_with_->snapshot_time(step);
}

int PriceField::step_index(double t) const {
    return source_ == PriceSource::Regression ? reg_with_->step_index(t) : pde_with_->snapshot_index(t);
}

double PriceField::value(int step, const Vector& r) const {
    if (source_ == PriceSource::Regression) return reg_zero_->value_at(step, r) - reg_with_->value_at(step, r);
    return pde_zero_->value(step, r) - pde_with_->value(step, r);
}

Vector PriceField::gradient(int step, const Vector& r) const {
    if (source_ == PriceSource::Regression) return reg_zero_->gradient_at(step, r) - reg_with_->gradient_at(step, r);
    return pde_zero_->gradient(step, r) - pde_with_->gradient(step, r);
}

double PriceField::initial_value() const {
    if (source_ != PriceSource::Regression)
        throw std::logic_error("pricing: initial_value needs a regression field; evaluate value(0, r0)");
    return reg_zero_->initial_value() - reg_with_->initial_value();
}

PriceField indifference_price(std::shared_ptr<const BsdeSolution> with_claim,
                              std::shared_ptr<const BsdeSolution> zero_claim) {
    return PriceField::from_regression(std::move(with_claim), std::move(zero_claim));
}

Vector optimal_strategy(const BsdeSolution& sol, const MarketSpec& spec, double t, const Vector& r) {
    const int step = sol.step_index(t);
    if (step >= sol.n_steps) throw std::out_of_range("pricing: no strategy at the horizon");
    return strategy_from_z(spec, t, r, sol.z_at(step, r));
}

Vector strategy_from_z(const MarketSpec& spec, double t, const Vector& r, const Vector& z) {
    const DriverContext ctx = make_context(spec, t, r);
    const Vector gamma = project(ctx, z + ctx.theta / ctx.eta);
    return ctx.hedge_map.transpose() * gamma;
}

Vector hedge_from_gradient(const MarketSpec& spec, double t, const Vector& r, const Vector& grad_p) {
    const DriverContext ctx = make_context(spec, t, r);
    const Vector exposure = spec.index_vol(t, r).transpose() * grad_p;  // (grad p rho)^*, in R^d
    return -(ctx.hedge_map.transpose() * exposure);
}

Vector derivative_hedge(const PriceField& price, const MarketSpec& spec, double t, const Vector& r) {
    return hedge_from_gradient(spec, t, r, price.gradient(price.step_index(t), r));
}

double single_asset_hedge(const MarketSpec& spec, double t, const Vector& r, const Vector& grad_p) {
    if (spec.k != 1) throw std::invalid_argument("pricing: single_asset_hedge needs k = 1");
    const Vector beta = spec.asset_vol(t, r).row(0).transpose();
    const Vector exposure = spec.index_vol(t, r).transpose() * grad_p;
    return -beta.dot(exposure) / beta.squaredNorm();
}

double HedgeReport::max_hedge_gap() const {
    double gap = 0.0;
    for (const auto& row : rows) gap = std::max(gap, (row.delta - (row.pi_hat - row.pi)).cwiseAbs().maxCoeff());
    return gap;
}

double HedgeReport::max_formula_gap(double floor) const {
    double gap = 0.0;
    for (const auto& row : rows) {
        const double scale = row.delta_formula.norm();
        if (scale > floor) gap = std::max(gap, (row.delta - row.delta_formula).norm() / scale);
    }
    return gap;
}

void HedgeReport::export_csv(std::ostream& out) const {
    if (rows.empty()) return;
    const auto m = rows.front().r.size();
    const auto k = rows.front().pi.size();
    out << "t";
    for (Eigen::Index j = 0; j < m; ++j) out << ",r_" << j + 1;
    out << ",p";
    for (Eigen::Index j = 0; j < m; ++j) out << ",grad_p_" << j + 1;
    for (Eigen::Index j = 0; j < k; ++j) out << ",pi_" << j + 1;
    for (Eigen::Index j = 0; j < k; ++j) out << ",pihat_" << j + 1;
    for (Eigen::Index j = 0; j < k; ++j) out << ",delta_" << j + 1;
    out << ",mup\n";
    auto list = [&](const Vector& v) {
        for (Eigen::Index j = 0; j < v.size(); ++j) {
            out << ',';
            write_number(out, v(j));
        }
    };
    for (const auto& row : rows) {
        write_number(out, row.t);
        list(row.r);
        out << ',';
        write_number(out, row.p);
        list(row.grad_p);
        list(row.pi);
        list(row.pi_hat);
        list(row.delta);
        out << ',';
        write_number(out, row.mup);
        out << '\n';
    }
}

void HedgeReport::export_plot(std::ostream& out) const {
    if (rows.empty()) return;
    out << "t";
    for (Eigen::Index j = 0; j < rows.front().r.size(); ++j) out << ",r_" << j + 1;
    out << ",p\n";
    for (const auto& row : rows) {
        write_number(out, row.t);
        for (Eigen::Index j = 0; j < row.r.size(); ++j) {
            out << ',';
            write_number(out, row.r(j));
        }
        out << ',';
        write_number(out, row.p);
        out << '\n';
    }
}

HedgeReport build_hedge_report(const PriceField& price, const MarketSpec& spec,
                               const std::vector<std::pair<int, Vector>>& points, const BsdeSolution* mup) {
    if (price.source() != PriceSource::Regression)
        throw std::invalid_argument("pricing: hedge reports need the regression solutions for pi and pi_hat");
    const BsdeSolution& with = *price.with_claim();
    const BsdeSolution& zero = *price.zero_claim();
    HedgeReport report;
    report.rows.resize(points.size());
    parallel_for(points.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const auto& [step, r] = points[i];
            HedgeRow& row = report.rows[i];
            row.t = price.time(step);
            row.r = r;
            row.p = price.value(step, r);
            row.grad_p = price.gradient(step, r);
            row.pi = optimal_strategy(zero, spec, row.t, r);
            row.pi_hat = optimal_strategy(with, spec, row.t, r);
            row.delta = row.pi_hat - row.pi;
            row.delta_formula = hedge_from_gradient(spec, row.t, r, row.grad_p);
            row.mup = mup ? mup->value_at(step, r) : std::nan("");
        }
    }, 1);
    for (const BsdeSolution* sol : {&with, &zero}) {
        report.clip_events += sol->diagnostics.clip_events;
        report.driver_evaluations += sol->diagnostics.driver_evaluations;
        report.degree_reductions += sol->diagnostics.degree_reductions;
        for (const auto& note : sol->diagnostics.notes) report.notes.push_back(std::string(to_string(sol->kind)) + ": " + note);
    }
    return report;
}

std::vector<Matrix> mup_slopes(const BsdeSolution& zero, const PathEnsemble& ens) {
    if (ens.n_paths != zero.n_paths || ens.n_steps != zero.n_steps || ens.seed != zero.seed)
        throw std::invalid_argument("pricing: ensemble does not match the zero-claim solution");
    std::vector<Matrix> slopes(zero.n_steps, Matrix(zero.d, zero.n_paths));
    for (int s = 0; s < zero.n_steps; ++s) {
        const double t = zero.time(s);
        parallel_for(static_cast<std::size_t>(zero.n_paths), [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                const int path = static_cast<int>(i);
                slopes[s].col(path) = zero.driver->grad_z(s, path, t, ens.states[s].col(path), zero.z[s].col(path));
            }
        });
    }
    return slopes;
}

MupEstimate girsanov_mup(const BsdeSolution& zero, const PathEnsemble& ens, const Payoff& claim, GirsanovForm form) {
    if (zero.kind != TerminalKind::ZeroClaim)
        throw std::invalid_argument("pricing: girsanov_mup needs the zero-claim solution");
    Vector weights;
    std::string warning;
    if (!girsanov_weights(zero, ens, form, weights)) {
        warning = "negative product-form weight; switched to the log form";
        form = GirsanovForm::Log;
        girsanov_weights(zero, ens, form, weights);
    }
    Vector weighted(ens.n_paths);
    for (int i = 0; i < ens.n_paths; ++i) weighted(i) = weights(i) * claim(ens.states.back().col(i));
    MupEstimate est = sample_mean(weighted);
    est.form = form;
    est.warning = warning;
    return est;
}

MupEstimate girsanov_weight_mean(const BsdeSolution& zero, const PathEnsemble& ens, GirsanovForm form) {
    Vector weights;
    std::string warning;
    if (!girsanov_weights(zero, ens, form, weights)) {
        warning = "negative product-form weight; switched to the log form";
        form = GirsanovForm::Log;
        girsanov_weights(zero, ens, form, weights);
    }
    MupEstimate est = sample_mean(weights);
    est.form = form;
    est.warning = warning;
    return est;
}

namespace {

double linear_mup_value(const MarketSpec& spec, const PathEnsemble& ens, const Payoff& claim,
                        const RegressionBasis& basis) {
    auto zero = std::make_shared<const BsdeSolution>(solve_backward(ens, spec, TerminalKind::ZeroClaim, basis));
    return solve_linear_bsde(ens, spec, claim, driver_slope(zero, ens), basis).initial_value();
}

double bump_value(const MarketSpec& spec, const PathEnsemble& ens, const Payoff& claim, const RegressionBasis& basis,
                  double q) {
    const double up = solve_backward(ens, spec, scaled(claim, q), basis).initial_value();
    const double down = solve_backward(ens, spec, scaled(claim, -q), basis).initial_value();
    return (up - down) / (2.0 * q);
}

std::vector<double> per_batch(const PathEnsemble& ens, int batches,
                              const std::function<double(const PathEnsemble&)>& estimator) {
    if (batches < 2) throw std::invalid_argument("pricing: need at least 2 batches");
    std::vector<double> values;
    const int size = ens.n_paths / batches;
    for (int b = 0; b < batches; ++b) values.push_back(estimator(ens.slice(b * size, size)));
    return values;
}

}  // namespace

MupEstimate linear_bsde_mup(const MarketSpec& spec, const PathEnsemble& ens, const Payoff& claim,
                            const RegressionBasis& basis, int batches) {
    const double full = linear_mup_value(spec, ens, claim, basis);
    return from_batches(full, per_batch(ens, batches, [&](const PathEnsemble& e) {
                            return linear_mup_value(spec, e, claim, basis);
                        }));
}

MupEstimate mup_by_bump(const MarketSpec& spec, const PathEnsemble& ens, const Payoff& claim,
                        const RegressionBasis& basis, double q_step, int batches) {
    if (!(q_step > 0.0 && q_step <= 0.5)) throw std::invalid_argument("pricing: q_step must lie in (0, 0.5]");
    const double full = bump_value(spec, ens, claim, basis, q_step);
    return from_batches(full, per_batch(ens, batches, [&](const PathEnsemble& e) {
                            return bump_value(spec, e, claim, basis, q_step);
                        }));
}

}  // namespace basisrisk
