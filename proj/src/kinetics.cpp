#include "robermix/kinetics.hpp"

#include <cmath>

#include "robermix/errors.hpp"

namespace robermix {

void RateConstants::validate() const {
    if (!(std::isfinite(k1) && k1 > 0.0) || !(std::isfinite(k2) && k2 > 0.0) ||
        !(std::isfinite(k3) && k3 > 0.0)) {
        throw ConfigError("rate constants must be finite and strictly positive");
    }
}

StateVector rober_rhs(const StateVector& y, const RateConstants& k) {
    const double r1 = k.k1 * y[0];
    const double r2 = k.k2 * y[1] * y[1];
    const double r3 = k.k3 * y[1] * y[2];
    return {-r1 + r3, r1 - r2 - r3, r2};
}

std::array<double, 9> rober_jacobian(const StateVector& y, const RateConstants& k) {
    const double a = k.k3 * y[2];
    const double b = k.k3 * y[1];
    const double c = 2.0 * k.k2 * y[1];
    return {
        -k.k1, a,      b,    //
        k.k1,  -c - a, -b,   //
        0.0,   c,      0.0,  //
    };
}

double mass_total(const StateVector& y) { return y[0] + y[1] + y[2]; }

void OdeSystem::rhs_time_derivative(double, std::span<const double>,
                                    std::span<double> dfdt) const {
    for (double& v : dfdt) v = 0.0;
}

RoberSystem::RoberSystem(RateConstants k) : k_(k) { k_.validate(); }

void RoberSystem::rhs(double, std::span<const double> y, std::span<double> dydt) const {
    const StateVector d = rober_rhs({y[0], y[1], y[2]}, k_);
    dydt[0] = d[0];
    dydt[1] = d[1];
    dydt[2] = d[2];
}

void RoberSystem::jacobian(double, std::span<const double> y, std::span<double> jac) const {
    const auto j = rober_jacobian({y[0], y[1], y[2]}, k_);
    for (int i = 0; i < 9; ++i) jac[i] = j[i];
}

}  // namespace robermix
