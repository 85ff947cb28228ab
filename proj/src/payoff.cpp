#include "basisrisk/payoff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace basisrisk {
namespace {

double coordinate_value(const Vector& r, int j, PayoffCoordinates coords) {
    return coords == PayoffCoordinates::Exponential ? std::exp(r(j)) : r(j);
}

// d x_j / d r_j
double coordinate_slope(const Vector& r, int j, PayoffCoordinates coords) {
    return coords == PayoffCoordinates::Exponential ? std::exp(r(j)) : 1.0;
}

std::string coords_tag(PayoffCoordinates coords) {
    return coords == PayoffCoordinates::Exponential ? "exp" : "level";
}

void require_cap(double cap) {
    if (!(cap > 0.0) || !std::isfinite(cap)) throw std::invalid_argument("payoff: cap must be finite and positive");
}

}  // namespace

Payoff zero_payoff(int m) { return constant_payoff(m, 0.0); }

Payoff constant_payoff(int m, double c) {
    Payoff p;
    p.value = [c](const Vector&) { return c; };
    p.gradient = [m](const Vector&) { return Vector::Zero(m).eval(); };
    p.sup_norm = std::abs(c);
    p.smoothness = Smoothness::Smooth;
    std::ostringstream os;
    os << "constant(" << c << ")";
    p.description = os.str();
    return p;
}

Payoff call_payoff(int coordinate, double strike, double cap, PayoffCoordinates coords) {
    require_cap(cap);
    Payoff p;
    p.value = [=](const Vector& r) {
        return std::min(std::max(coordinate_value(r, coordinate, coords) - strike, 0.0), cap);
    };
    p.gradient = [=](const Vector& r) {
        Vector g = Vector::Zero(r.size());
        const double x = coordinate_value(r, coordinate, coords);
        if (x > strike && x < strike + cap) g(coordinate) = coordinate_slope(r, coordinate, coords);
        return g;
    };
    p.sup_norm = cap;
    p.smoothness = Smoothness::Kinked;
    std::ostringstream os;
    os << "call(K=" << strike << ", cap=" << cap << ", " << coords_tag(coords) << ")";
    p.description = os.str();
    return p;
}

Payoff put_payoff(int coordinate, double strike, double cap, PayoffCoordinates coords) {
    require_cap(cap);
    Payoff p;
    p.value = [=](const Vector& r) {
        return std::min(std::max(strike - coordinate_value(r, coordinate, coords), 0.0), cap);
    };
    p.gradient = [=](const Vector& r) {
        Vector g = Vector::Zero(r.size());
        const double x = coordinate_value(r, coordinate, coords);
        if (x < strike && x > strike - cap) g(coordinate) = -coordinate_slope(r, coordinate, coords);
        return g;
    };
    p.sup_norm = cap;
    p.smoothness = Smoothness::Kinked;
    std::ostringstream os;
    os << "put(K=" << strike << ", cap=" << cap << ", " << coords_tag(coords) << ")";
    p.description = os.str();
    return p;
}

Payoff spread_call_payoff(int long_coordinate, int short_coordinate, double strike, double cap,
                          PayoffCoordinates coords) {
    require_cap(cap);
    Payoff p;
    p.value = [=](const Vector& r) {
        const double spread =
            coordinate_value(r, long_coordinate, coords) - coordinate_value(r, short_coordinate, coords);
        return std::min(std::max(spread - strike, 0.0), cap);
    };
    p.gradient = [=](const Vector& r) {
        Vector g = Vector::Zero(r.size());
        const double spread =
            coordinate_value(r, long_coordinate, coords) - coordinate_value(r, short_coordinate, coords);
        if (spread > strike && spread < strike + cap) {
            g(long_coordinate) += coordinate_slope(r, long_coordinate, coords);
            g(short_coordinate) -= coordinate_slope(r, short_coordinate, coords);
        }
        return g;
    };
    p.sup_norm = cap;
    p.smoothness = Smoothness::Kinked;
    std::ostringstream os;
    os << "spread-call(long=" << long_coordinate << ", short=" << short_coordinate << ", K=" << strike
       << ", cap=" << cap << ", " << coords_tag(coords) << ")";
    p.description = os.str();
    return p;
}

Payoff digital_payoff(int coordinate, double strike, PayoffCoordinates coords) {
    Payoff p;
    p.value = [=](const Vector& r) { return coordinate_value(r, coordinate, coords) > strike ? 1.0 : 0.0; };
    p.sup_norm = 1.0;
    p.smoothness = Smoothness::Discontinuous;
    std::ostringstream os;
    os << "digital(K=" << strike << ", " << coords_tag(coords) << ")";
    p.description = os.str();
    return p;
}

Payoff polynomial_payoff(std::vector<Monomial> terms, double cap, PayoffCoordinates coords) {
    require_cap(cap);
    auto raw = [terms, coords](const Vector& r) {
        double sum = 0.0;
        for (const auto& t : terms) {
            double v = t.coefficient;
            for (std::size_t j = 0; j < t.exponents.size(); ++j)
                v *= std::pow(coordinate_value(r, static_cast<int>(j), coords), t.exponents[j]);
            sum += v;
        }
        return sum;
    };
    Payoff p;
    p.value = [raw, cap](const Vector& r) { return std::clamp(raw(r), -cap, cap); };
    p.gradient = [raw, terms, cap, coords](const Vector& r) {
        Vector g = Vector::Zero(r.size());
        const double v = raw(r);
        if (v <= -cap || v >= cap) return g;
        for (const auto& t : terms) {
            for (std::size_t j = 0; j < t.exponents.size(); ++j) {
                if (t.exponents[j] == 0) continue;
                double term = t.coefficient * t.exponents[j];
                for (std::size_t l = 0; l < t.exponents.size(); ++l) {
                    const double x = coordinate_value(r, static_cast<int>(l), coords);
                    term *= std::pow(x, l == j ? t.exponents[l] - 1 : t.exponents[l]);
                }
                g(static_cast<int>(j)) += term * coordinate_slope(r, static_cast<int>(j), coords);
            }
        }
        return g;
    };
    p.sup_norm = cap;
    p.smoothness = Smoothness::Kinked;
    p.description = "polynomial(cap=" + std::to_string(cap) + ", " + coords_tag(coords) + ")";
    return p;
}

Payoff scaled(const Payoff& payoff, double q) {
    Payoff p;
    p.value = [f = payoff.value, q](const Vector& r) { return q * f(r); };
    if (payoff.gradient) p.gradient = [g = payoff.gradient, q](const Vector& r) { return (q * g(r)).eval(); };
    p.sup_norm = std::abs(q) * payoff.sup_norm;
    p.smoothness = payoff.smoothness;
    std::ostringstream os;
    os << q << "*" << payoff.description;
    p.description = os.str();
    return p;
}

Payoff shifted(const Payoff& payoff, double c) {
    Payoff p;
    p.value = [f = payoff.value, c](const Vector& r) { return f(r) + c; };
    p.gradient = payoff.gradient;
    p.sup_norm = payoff.sup_norm + std::abs(c);
    p.smoothness = payoff.smoothness;
    std::ostringstream os;
    os << payoff.description << "+" << c;
    p.description = os.str();
    return p;
}

Payoff combination(double a, const Payoff& first, double b, const Payoff& second) {
    Payoff p;
    p.value = [a, b, f1 = first.value, f2 = second.value](const Vector& r) { return a * f1(r) + b * f2(r); };
    if (first.gradient && second.gradient) {
        p.gradient = [a, b, g1 = first.gradient, g2 = second.gradient](const Vector& r) {
            return (a * g1(r) + b * g2(r)).eval();
        };
    }
    p.sup_norm = std::abs(a) * first.sup_norm + std::abs(b) * second.sup_norm;
    p.smoothness = std::max(first.smoothness, second.smoothness);
    std::ostringstream os;
    os << a << "*" << first.description << "+" << b << "*" << second.description;
    p.description = os.str();
    return p;
}

}  // namespace basisrisk
