#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "basisrisk/bsde_solver.hpp"
#include "basisrisk/pde_oracle.hpp"

namespace basisrisk {

enum class PriceSource { Regression, Pde };
const char* to_string(PriceSource source);

/// Indifference price p(t_i, r) = u(t_i, r) - u_hat(t_i, r), where u solves the
/// equation without the claim and u_hat the one with it. With this sign a
/// constant claim F = c has p = -c; buyer_value() returns -p.
class PriceField {
public:
    static PriceField from_regression(std::shared_ptr<const BsdeSolution> with_claim,
                                      std::shared_ptr<const BsdeSolution> zero_claim);
    static PriceField from_pde(std::shared_ptr<const PdeSolution> with_claim,
                               std::shared_ptr<const PdeSolution> zero_claim, double eta);

    PriceSource source() const { return source_; }
    double eta() const { return eta_; }
    int n_steps() const;
    double time(int step) const;
    int step_index(double t) const;

    double value(int step, const Vector& r) const;
    double buyer_value(int step, const Vector& r) const { return -value(step, r); }
    Vector gradient(int step, const Vector& r) const;
    /// p at the initial state of a regression field (mean over the common start).
    double initial_value() const;

    const BsdeSolution* with_claim() const { return reg_with_.get(); }
    const BsdeSolution* zero_claim() const { return reg_zero_.get(); }

private:
    PriceSource source_ = PriceSource::Regression;
    double eta_ = 1.0;
    std::shared_ptr<const BsdeSolution> reg_with_, reg_zero_;
    std::shared_ptr<const PdeSolution> pde_with_, pde_zero_;
};

/// Throws std::invalid_argument unless both solutions come from the same ensemble.
PriceField indifference_price(std::shared_ptr<const BsdeSolution> with_claim,
                              std::shared_ptr<const BsdeSolution> zero_claim);

/// pi(t, r) = gamma beta^*(beta beta^*)^{-1}, gamma = P (Z + theta / eta), in R^k,
/// with Z = v(t, r) from the solution's fit.
Vector optimal_strategy(const BsdeSolution& sol, const MarketSpec& spec, double t, const Vector& r);
/// The same map for a given z.
Vector strategy_from_z(const MarketSpec& spec, double t, const Vector& r, const Vector& z);

/// Delta = -grad_r p rho beta^*(beta beta^*)^{-1}, in R^k.
Vector derivative_hedge(const PriceField& price, const MarketSpec& spec, double t, const Vector& r);
/// The same formula for a given price gradient.
Vector hedge_from_gradient(const MarketSpec& spec, double t, const Vector& r, const Vector& grad_p);
/// Single traded asset: Delta = -<beta, grad_r p rho> / |beta|^2.
double single_asset_hedge(const MarketSpec& spec, double t, const Vector& r, const Vector& grad_p);

struct HedgeRow {
    double t = 0.0;
    Vector r;
    double p = 0.0;
    Vector grad_p;
    Vector pi;             // without the claim
    Vector pi_hat;         // with the claim
    Vector delta;          // pi_hat - pi
    Vector delta_formula;  // -grad p rho beta^*(beta beta^*)^{-1}
    double mup = 0.0;
};

struct HedgeReport {
    std::vector<HedgeRow> rows;
    long clip_events = 0;
    long driver_evaluations = 0;
    int degree_reductions = 0;
    std::vector<std::string> notes;

    /// Largest |delta - (pi_hat - pi)| over the rows.
    double max_hedge_gap() const;
    /// Largest relative gap between delta and delta_formula over rows where
    /// |delta_formula| exceeds `floor`.
    double max_formula_gap(double floor = 1e-8) const;
    void export_csv(std::ostream& out) const;
    /// Plot data: t, r_1..r_m, p.
    void export_plot(std::ostream& out) const;
};

/// Rows at the given (step, state) points. `mup` may be null.
HedgeReport build_hedge_report(const PriceField& price, const MarketSpec& spec,
                               const std::vector<std::pair<int, Vector>>& points, const BsdeSolution* mup);

enum class GirsanovForm { Log, Product };

struct MupEstimate {
    double value = 0.0;
    double standard_error = 0.0;
    GirsanovForm form = GirsanovForm::Log;
    std::string warning;
};

/// Slope of the marginal-utility equation on the zero-claim solution,
/// grad_z f(t_i, R_i, Z_i), one d x N slice per step.
std::vector<Matrix> mup_slopes(const BsdeSolution& zero_claim, const PathEnsemble& ensemble);

/// E[L_T F(R_T)] with the density L_T of the measure under which W + int slope ds
/// is a Brownian motion: exp(-sum slope.dW - (1/2) sum |slope|^2 h) in log form,
/// prod (1 - slope.dW) in product form. A negative product weight switches to
/// the log form with a warning.
MupEstimate girsanov_mup(const BsdeSolution& zero_claim, const PathEnsemble& ensemble, const Payoff& claim,
                         GirsanovForm form = GirsanovForm::Log);

/// Mean of the Girsanov weights alone (should be 1).
MupEstimate girsanov_weight_mean(const BsdeSolution& zero_claim, const PathEnsemble& ensemble,
                                 GirsanovForm form = GirsanovForm::Log);

/// U_0 of the linear equation U = F - int V dW - int slope.V ds, with a
/// batch-means standard error from `batches` independent re-solves.
MupEstimate linear_bsde_mup(const MarketSpec& spec, const PathEnsemble& ensemble, const Payoff& claim,
                            const RegressionBasis& basis, int batches = 10);

/// Central difference in the claim size: (u_hat(q F) - u_hat(-q F)) / (2q) on
/// common random numbers, which equals -dp/dq at q = 0.
MupEstimate mup_by_bump(const MarketSpec& spec, const PathEnsemble& ensemble, const Payoff& claim,
                        const RegressionBasis& basis, double q_step = 0.05, int batches = 10);

}  // namespace basisrisk
