#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "robermix/kinetics.hpp"
#include "robermix/timeseries.hpp"

namespace robermix {

struct ToleranceSpec {
    double rtol = 1.0e-8;
    double atol = 1.0e-10;

    void validate() const;  // requires 0 < rtol < 1 and atol > 0
};

struct TimeSpan {
    double t0 = 0.0;
    double t_end = 0.0;
};

// Step-size control for the adaptive integrator. The defaults are the ones
// every trajectory in this repo is generated with.
struct StepControl {
    double safety = 0.9;
    double factor_min = 0.2;
    double factor_max = 5.0;
    double initial_step = 1.0e-6;
};

// Accepted steps of one integration, densely interpolable via sample().
struct Trajectory {
    std::size_t dim = 0;
    std::vector<double> times;        // accepted step times, strictly increasing
    std::vector<double> states;       // times.size() x dim, row-major
    std::vector<double> derivs;       // rhs at the accepted points (for Hermite)
    std::vector<double> error_norms;  // weighted error estimate per accepted step
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    ToleranceSpec tol;  // tolerances the trajectory was produced with

    std::span<const double> state(std::size_t i) const { return {states.data() + i * dim, dim}; }
    std::span<const double> deriv(std::size_t i) const { return {derivs.data() + i * dim, dim}; }
    std::span<const double> terminal_state() const { return state(times.size() - 1); }
};

// Uniform sampling request; (t_end - t0) / dt must be a positive integer.
struct SamplingSpec {
    double dt = 1.0;
    double t0 = 0.0;
    double t_end = 0.0;

    void validate() const;
    std::size_t sample_count() const;  // (t_end - t0)/dt + 1
};

// Adaptive 4th-order L-stable Rosenbrock integrator with an embedded
// 3rd-order error estimate (one Jacobian + one LU factorization per step).
// Throws StepSizeUnderflow if the step falls below 1e-14 * span while still
// rejecting, NonFiniteState if the state or its derivative turns NaN/Inf.
Trajectory integrate_stiff(const OdeSystem& system, std::span<const double> y0, TimeSpan span,
                           ToleranceSpec tol = ToleranceSpec{},
                           StepControl control = StepControl{});

// Fixed-step classical 4-stage explicit Runge-Kutta. Used as a
// cross-validation oracle on short non-stiff horizons; diverges (and throws
// NonFiniteState) on stiff regions, which is expected and documented.
Trajectory integrate_reference(const OdeSystem& system, std::span<const double> y0,
                               TimeSpan span, double fixed_step);

// Uniform resampling by cubic Hermite interpolation between accepted steps,
// using the stored states and RHS evaluations. Sampling exactly at an
// accepted step time returns that state bit-for-bit.
//
// If nonneg_clamp_atol > 0, sampled values in (-atol, 0) are clamped to zero
// and values <= -atol raise NonFiniteState; used when the trajectory holds
// concentrations that must stay physical.
TimeSeries sample(const Trajectory& trajectory, const SamplingSpec& spec,
                  std::vector<std::string> channel_names = {},
                  double nonneg_clamp_atol = 0.0);

}  // namespace robermix
