#pragma once

#include <array>
#include <cstddef>
#include <span>

namespace robermix {

// Concentrations of the three ROBER species at one instant.
using StateVector = std::array<double, 3>;

// Reaction rate constants. k2/k1 and k3/k1 typically span many orders of
// magnitude, which is what makes the system stiff.
struct RateConstants {
    double k1 = 0.04;
    double k2 = 3.0e7;
    double k3 = 1.0e4;

    // Throws ConfigError unless all constants are strictly positive and finite.
    void validate() const;
};

// Right-hand side of the ROBER system:
//   y1' = -k1*y1 + k3*y2*y3
//   y2' =  k1*y1 - k2*y2^2 - k3*y2*y3
//   y3' =  k2*y2^2
// The components sum to zero, so total mass is conserved.
StateVector rober_rhs(const StateVector& y, const RateConstants& k);

// Analytic Jacobian d(rhs_i)/d(y_j), row-major 3x3. Every column sums to zero.
std::array<double, 9> rober_jacobian(const StateVector& y, const RateConstants& k);

// Total mass y1 + y2 + y3 (the conserved quantity).
double mass_total(const StateVector& y);

// Generic ODE system interface consumed by the integrators. rhs and jacobian
// must be pure: identical inputs give bitwise-identical outputs.
class OdeSystem {
  public:
    virtual ~OdeSystem() = default;

    virtual std::size_t dimension() const = 0;

    // dydt[i] = f_i(t, y)
    virtual void rhs(double t, std::span<const double> y, std::span<double> dydt) const = 0;

    // jac[i*dim + j] = d f_i / d y_j  (row-major)
    virtual void jacobian(double t, std::span<const double> y, std::span<double> jac) const = 0;

    // df/dt at fixed y. Zero for autonomous systems, which is the default.
    virtual void rhs_time_derivative(double t, std::span<const double> y,
                                     std::span<double> dfdt) const;
};

// ROBER as an OdeSystem (autonomous, dimension 3).
class RoberSystem final : public OdeSystem {
  public:
    explicit RoberSystem(RateConstants k = RateConstants{});

    std::size_t dimension() const override { return 3; }
    void rhs(double t, std::span<const double> y, std::span<double> dydt) const override;
    void jacobian(double t, std::span<const double> y, std::span<double> jac) const override;

    const RateConstants& rates() const { return k_; }

  private:
    RateConstants k_;
};

}  // namespace robermix
