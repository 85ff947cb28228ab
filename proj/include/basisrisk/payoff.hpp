#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "basisrisk/linalg.hpp"

namespace basisrisk {

enum class Smoothness {
    Smooth,         // twice differentiable
    Kinked,         // Lipschitz, gradient defined almost everywhere
    Discontinuous,  // e.g. digital; no pathwise gradient
};

/// Bounded terminal condition F(R_T) together with its gradient when one exists.
struct Payoff {
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&)> gradient;  // empty for discontinuous payoffs
    double sup_norm = 0.0;                           // bound on |F|
    Smoothness smoothness = Smoothness::Smooth;
    std::string description;

    double operator()(const Vector& r) const { return value(r); }
    bool differentiable() const { return static_cast<bool>(gradient); }
};

/// Coordinates a payoff reads: the index itself or its exponential (for
/// indices modelled as log-prices).
enum class PayoffCoordinates { Level, Exponential };

Payoff zero_payoff(int m);
Payoff constant_payoff(int m, double c);

/// min((x_j - strike)^+, cap)
Payoff call_payoff(int coordinate, double strike, double cap,
                   PayoffCoordinates coords = PayoffCoordinates::Level);
/// min((strike - x_j)^+, cap)
Payoff put_payoff(int coordinate, double strike, double cap,
                  PayoffCoordinates coords = PayoffCoordinates::Level);
/// min((x_long - x_short - strike)^+, cap)
Payoff spread_call_payoff(int long_coordinate, int short_coordinate, double strike, double cap,
                          PayoffCoordinates coords = PayoffCoordinates::Level);
/// 1{x_j > strike}
Payoff digital_payoff(int coordinate, double strike,
                      PayoffCoordinates coords = PayoffCoordinates::Level);

struct Monomial {
    double coefficient = 0.0;
    std::vector<int> exponents;  // one per index coordinate
};
/// Polynomial of the terminal index, clamped to [-cap, cap].
Payoff polynomial_payoff(std::vector<Monomial> terms, double cap,
                         PayoffCoordinates coords = PayoffCoordinates::Level);

/// q * F
Payoff scaled(const Payoff& payoff, double q);
/// F + c
Payoff shifted(const Payoff& payoff, double c);
/// a * F1 + b * F2
Payoff combination(double a, const Payoff& first, double b, const Payoff& second);

}  // namespace basisrisk
