#include "robermix/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "robermix/errors.hpp"

namespace robermix {

namespace {

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// Dense LU with partial pivoting; a is n x n row-major, piv holds row swaps.
// Returns false if a pivot is exactly zero or non-finite.
bool lu_factorize(std::vector<double>& a, std::vector<int>& piv, std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        double best = std::fabs(a[k * n + k]);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double m = std::fabs(a[i * n + k]);
            if (m > best) {
                best = m;
                p = i;
            }
        }
        if (!(best > 0.0) || !std::isfinite(best)) return false;
        piv[k] = static_cast<int>(p);
        if (p != k)
            for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[p * n + j]);
        const double inv = 1.0 / a[k * n + k];
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = a[i * n + k] * inv;
            a[i * n + k] = f;
            for (std::size_t j = k + 1; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
        }
    }
    return true;
}

void lu_solve(const std::vector<double>& a, const std::vector<int>& piv, std::size_t n,
              std::vector<double>& b) {
    for (std::size_t k = 0; k < n; ++k) {
        const auto p = static_cast<std::size_t>(piv[k]);
        if (p != k) std::swap(b[k], b[p]);
        for (std::size_t i = k + 1; i < n; ++i) b[i] -= a[i * n + k] * b[k];
    }
    for (std::size_t k = n; k-- > 0;) {
        for (std::size_t j = k + 1; j < n; ++j) b[k] -= a[k * n + j] * b[j];
        b[k] /= a[k * n + k];
    }
}

// Rosenbrock-Wanner 4(3) coefficients (Hairer & Wanner's 6-stage L-stable,
// stiffly accurate set). Written in the transformed g-variable form: each
// stage solves (I/(gamma*h) - J) g_i = f(x + sum a_ij g_j) + h d_i df/dt
// + (sum c_ij g_j)/h, with the same factorization reused for all stages.
struct RosenbrockCoefficients {
    static constexpr double gamma = 0.25;
    static constexpr double d1 = 0.25, d2 = -0.1043, d3 = 0.1035, d4 = 0.3620000000000023e-01;
    static constexpr double c2 = 0.386, c3 = 0.21, c4 = 0.63;
    static constexpr double a21 = 0.1544000000000000e+01;
    static constexpr double a31 = 0.9466785280815826e+00, a32 = 0.2557011698983284e+00;
    static constexpr double a41 = 0.3314825187068521e+01, a42 = 0.2896124015972201e+01,
                            a43 = 0.9986419139977817e+00;
    static constexpr double a51 = 0.1221224509226641e+01, a52 = 0.6019134481288629e+01,
                            a53 = 0.1253708332932087e+02, a54 = -0.6878860361058950e+00;
    static constexpr double c21 = -0.5668800000000000e+01;
    static constexpr double c31 = -0.2430093356833875e+01, c32 = -0.2063599157091915e+00;
    static constexpr double c41 = -0.1073529058151375e+00, c42 = -0.9594562251023355e+01,
                            c43 = -0.2047028614809616e+02;
    static constexpr double c51 = 0.7496443313967647e+01, c52 = -0.1024680431464352e+02,
                            c53 = -0.3399990352819905e+02, c54 = 0.1170890893206160e+02;
    static constexpr double c61 = 0.8083246795921522e+01, c62 = -0.7981132988064893e+01,
                            c63 = -0.3152159432874371e+02, c64 = 0.1631930543123136e+02,
                            c65 = -0.6058818238834054e+01;
};

struct StepWorkspace {
    std::vector<double> jac, lu, dfdt, f0, ftmp, xtmp, x6;
    std::vector<double> g1, g2, g3, g4, g5, err;
    std::vector<int> piv;

    explicit StepWorkspace(std::size_t n)
        : jac(n * n), lu(n * n), dfdt(n), f0(n), ftmp(n), xtmp(n), x6(n), g1(n), g2(n), g3(n),
          g4(n), g5(n), err(n), piv(n) {}
};

// One trial step from (t, y) with the precomputed f0 = rhs(t, y).
// Returns false if the LU factorization fails or any stage turns non-finite;
// on success fills y_new and err (the embedded error vector).
bool rosenbrock_try_step(const OdeSystem& sys, double t, std::span<const double> y,
                         double h, StepWorkspace& w, std::vector<double>& y_new) {
    using C = RosenbrockCoefficients;
    const std::size_t n = sys.dimension();

    sys.jacobian(t, y, std::span<double>(w.jac));
    sys.rhs_time_derivative(t, y, std::span<double>(w.dfdt));
    if (!all_finite(w.jac) || !all_finite(w.dfdt)) return false;

    const double diag = 1.0 / (C::gamma * h);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            w.lu[i * n + j] = (i == j ? diag : 0.0) - w.jac[i * n + j];
    if (!lu_factorize(w.lu, w.piv, n)) return false;

    for (std::size_t i = 0; i < n; ++i) w.g1[i] = w.f0[i] + h * C::d1 * w.dfdt[i];
    lu_solve(w.lu, w.piv, n, w.g1);

    for (std::size_t i = 0; i < n; ++i) w.xtmp[i] = y[i] + C::a21 * w.g1[i];
    sys.rhs(t + C::c2 * h, w.xtmp, std::span<double>(w.ftmp));
    for (std::size_t i = 0; i < n; ++i)
        w.g2[i] = w.ftmp[i] + h * C::d2 * w.dfdt[i] + C::c21 * w.g1[i] / h;
    lu_solve(w.lu, w.piv, n, w.g2);

    for (std::size_t i = 0; i < n; ++i) w.xtmp[i] = y[i] + C::a31 * w.g1[i] + C::a32 * w.g2[i];
    sys.rhs(t + C::c3 * h, w.xtmp, std::span<double>(w.ftmp));
    for (std::size_t i = 0; i < n; ++i)
        w.g3[i] = w.ftmp[i] + h * C::d3 * w.dfdt[i] + (C::c31 * w.g1[i] + C::c32 * w.g2[i]) / h;
    lu_solve(w.lu, w.piv, n, w.g3);

    for (std::size_t i = 0; i < n; ++i)
        w.xtmp[i] = y[i] + C::a41 * w.g1[i] + C::a42 * w.g2[i] + C::a43 * w.g3[i];
    sys.rhs(t + C::c4 * h, w.xtmp, std::span<double>(w.ftmp));
    for (std::size_t i = 0; i < n; ++i)
        w.g4[i] = w.ftmp[i] + h * C::d4 * w.dfdt[i] +
                  (C::c41 * w.g1[i] + C::c42 * w.g2[i] + C::c43 * w.g3[i]) / h;
    lu_solve(w.lu, w.piv, n, w.g4);

    for (std::size_t i = 0; i < n; ++i)
        w.xtmp[i] = y[i] + C::a51 * w.g1[i] + C::a52 * w.g2[i] + C::a53 * w.g3[i] +
                    C::a54 * w.g4[i];
    sys.rhs(t + h, w.xtmp, std::span<double>(w.ftmp));
    for (std::size_t i = 0; i < n; ++i)
        w.g5[i] = w.ftmp[i] + (C::c51 * w.g1[i] + C::c52 * w.g2[i] + C::c53 * w.g3[i] +
                               C::c54 * w.g4[i]) /
                                  h;
    lu_solve(w.lu, w.piv, n, w.g5);

    for (std::size_t i = 0; i < n; ++i) w.x6[i] = w.xtmp[i] + w.g5[i];
    if (!all_finite(w.x6)) return false;
    sys.rhs(t + h, w.x6, std::span<double>(w.ftmp));
    for (std::size_t i = 0; i < n; ++i)
        w.err[i] = w.ftmp[i] + (C::c61 * w.g1[i] + C::c62 * w.g2[i] + C::c63 * w.g3[i] +
                                C::c64 * w.g4[i] + C::c65 * w.g5[i]) /
                                   h;
    lu_solve(w.lu, w.piv, n, w.err);

    for (std::size_t i = 0; i < n; ++i) y_new[i] = w.x6[i] + w.err[i];
    return all_finite(y_new) && all_finite(w.err);
}

double weighted_error_norm(std::span<const double> err, std::span<const double> y_old,
                           std::span<const double> y_new, const ToleranceSpec& tol) {
    double sum = 0.0;
    for (std::size_t i = 0; i < err.size(); ++i) {
        const double scale =
            tol.atol + tol.rtol * std::max(std::fabs(y_old[i]), std::fabs(y_new[i]));
        const double e = err[i] / scale;
        sum += e * e;
    }
    return std::sqrt(sum / static_cast<double>(err.size()));
}

void append_point(Trajectory& traj, double t, std::span<const double> y,
                  std::span<const double> f) {
    traj.times.push_back(t);
    traj.states.insert(traj.states.end(), y.begin(), y.end());
    traj.derivs.insert(traj.derivs.end(), f.begin(), f.end());
}

}  // namespace

void ToleranceSpec::validate() const {
    if (!(rtol > 0.0 && rtol < 1.0)) throw ConfigError("rtol must lie in (0, 1)");
    if (!(atol > 0.0)) throw ConfigError("atol must be positive");
}

void SamplingSpec::validate() const {
    if (!(dt > 0.0)) throw ConfigError("sampling dt must be positive");
    if (!(t_end > t0)) throw ConfigError("sampling span must be nonempty");
    const double steps = (t_end - t0) / dt;
    if (std::fabs(steps - std::round(steps)) > 1.0e-9 * std::max(1.0, steps) ||
        std::round(steps) < 1.0) {
        throw ConfigError("(t_end - t0) / dt must be a positive integer");
    }
}

std::size_t SamplingSpec::sample_count() const {
    return static_cast<std::size_t>(std::llround((t_end - t0) / dt)) + 1;
}

Trajectory integrate_stiff(const OdeSystem& system, std::span<const double> y0, TimeSpan span,
                           ToleranceSpec tol, StepControl control) {
    tol.validate();
    const std::size_t n = system.dimension();
    if (y0.size() != n) throw ShapeError("initial state size does not match system dimension");
    if (!all_finite(y0)) throw NonFiniteState("initial state is not finite");
    if (!(span.t_end > span.t0)) throw ConfigError("integration span must be nonempty");

    const double span_len = span.t_end - span.t0;
    const double h_min = 1.0e-14 * span_len;

    Trajectory traj;
    traj.dim = n;
    traj.tol = tol;

    std::vector<double> y(y0.begin(), y0.end());
    std::vector<double> y_new(n);
    StepWorkspace w(n);

    double t = span.t0;
    system.rhs(t, y, std::span<double>(w.f0));
    if (!all_finite(w.f0)) throw NonFiniteState("rhs not finite at the initial state");
    append_point(traj, t, y, w.f0);

    double h = std::min(control.initial_step, span_len);
    double err_prev = 1.0;
    bool have_prev = false;
    bool last_rejected = false;

    while (t < span.t_end) {
        h = std::min(h, span.t_end - t);

        const bool ok = rosenbrock_try_step(system, t, y, h, w, y_new);
        const double err = ok ? weighted_error_norm(w.err, y, y_new, tol)
                              : std::numeric_limits<double>::infinity();

        if (err <= 1.0) {
            t += h;
            y.swap(y_new);
            system.rhs(t, y, std::span<double>(w.f0));
            if (!all_finite(w.f0))
                throw NonFiniteState("rhs not finite at accepted state, t=" + std::to_string(t));
            append_point(traj, t, y, w.f0);
            traj.error_norms.push_back(err);
            ++traj.accepted;

            // PI controller; plain I-control on the first step and after any
            // rejection, per the usual restart rule.
            const double e = std::max(err, 1.0e-10);
            double fac;
            if (have_prev && !last_rejected) {
                fac = control.safety * std::pow(e, -0.7 / 4.0) * std::pow(err_prev, 0.4 / 4.0);
            } else {
                fac = control.safety * std::pow(e, -0.25);
            }
            fac = std::clamp(fac, control.factor_min, control.factor_max);
            h *= fac;
            err_prev = e;
            have_prev = true;
            last_rejected = false;
        } else {
            ++traj.rejected;
            last_rejected = true;
            double fac = std::isfinite(err) ? control.safety * std::pow(err, -0.25)
                                            : control.factor_min;
            fac = std::clamp(fac, control.factor_min, 1.0);
            h *= fac;
            if (h < h_min) {
                throw StepSizeUnderflow("step size fell below " + std::to_string(h_min) +
                                        " at t=" + std::to_string(t) + " while rejecting");
            }
        }
    }
    return traj;
}

Trajectory integrate_reference(const OdeSystem& system, std::span<const double> y0,
                               TimeSpan span, double fixed_step) {
    const std::size_t n = system.dimension();
    if (y0.size() != n) throw ShapeError("initial state size does not match system dimension");
    if (!all_finite(y0)) throw NonFiniteState("initial state is not finite");
    if (!(fixed_step > 0.0)) throw ConfigError("fixed step must be positive");
    const double span_len = span.t_end - span.t0;
    if (!(span_len > 0.0)) throw ConfigError("integration span must be nonempty");
    const double steps_real = span_len / fixed_step;
    const auto steps = static_cast<std::size_t>(std::llround(steps_real));
    if (steps < 1 || std::fabs(steps_real - std::round(steps_real)) > 1.0e-9 * steps_real)
        throw ConfigError("span length must be an integer multiple of the fixed step");

    Trajectory traj;
    traj.dim = n;
    traj.tol = ToleranceSpec{};  // informational only; no adaptivity here

    std::vector<double> y(y0.begin(), y0.end());
    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
    const double h = fixed_step;

    system.rhs(span.t0, y, std::span<double>(k1));
    if (!all_finite(k1)) throw NonFiniteState("rhs not finite at the initial state");
    append_point(traj, span.t0, y, k1);

    for (std::size_t s = 0; s < steps; ++s) {
        const double t = span.t0 + static_cast<double>(s) * h;
        // k1 already holds rhs(t, y)
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
        system.rhs(t + 0.5 * h, tmp, std::span<double>(k2));
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
        system.rhs(t + 0.5 * h, tmp, std::span<double>(k3));
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
        system.rhs(t + h, tmp, std::span<double>(k4));
        for (std::size_t i = 0; i < n; ++i)
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

        const double t_next = span.t0 + static_cast<double>(s + 1) * h;
        system.rhs(t_next, y, std::span<double>(k1));
        if (!all_finite(y) || !all_finite(k1)) {
            throw NonFiniteState("explicit reference integrator diverged at t=" +
                                 std::to_string(t_next));
        }
        append_point(traj, t_next, y, k1);
        ++traj.accepted;
    }
    return traj;
}

TimeSeries sample(const Trajectory& trajectory, const SamplingSpec& spec,
                  std::vector<std::string> channel_names, double nonneg_clamp_atol) {
    spec.validate();
    if (trajectory.times.empty()) throw RangeError("cannot sample an empty trajectory");
    const double traj_t0 = trajectory.times.front();
    const double traj_t1 = trajectory.times.back();
    const double slack = 1.0e-12 * std::max(1.0, std::fabs(traj_t1));
    if (spec.t0 < traj_t0 - slack || spec.t_end > traj_t1 + slack)
        throw RangeError("requested samples lie outside the integrated span");

    const std::size_t dim = trajectory.dim;
    if (channel_names.empty()) {
        for (std::size_t ch = 0; ch < dim; ++ch)
            channel_names.push_back("y" + std::to_string(ch + 1));
    }
    if (channel_names.size() != dim)
        throw ShapeError("channel name count does not match trajectory dimension");

    const std::size_t count = spec.sample_count();
    TimeSeries out;
    out.times.resize(count);
    out.channel_names = std::move(channel_names);
    out.values.resize(dim * count);

    std::size_t seg = 0;  // interval index; sample times are increasing
    for (std::size_t i = 0; i < count; ++i) {
        const double ts = spec.t0 + static_cast<double>(i) * spec.dt;
        out.times[i] = ts;
        while (seg + 2 < trajectory.times.size() && trajectory.times[seg + 1] < ts) ++seg;

        const double ta = trajectory.times[seg];
        const double tb = trajectory.times[seg + 1 < trajectory.times.size() ? seg + 1 : seg];
        const auto ya = trajectory.state(seg);

        for (std::size_t ch = 0; ch < dim; ++ch) {
            double v;
            if (ts == ta) {
                v = ya[ch];
            } else if (ts == tb) {
                v = trajectory.state(seg + 1)[ch];
            } else {
                const auto yb = trajectory.state(seg + 1);
                const auto fa = trajectory.deriv(seg);
                const auto fb = trajectory.deriv(seg + 1);
                const double dt_seg = tb - ta;
                const double u = (ts - ta) / dt_seg;
                // cubic Hermite in a form that reproduces constant segments
                // exactly (all correction terms vanish when dy and f are 0)
                const double dy = yb[ch] - ya[ch];
                const double ca = dt_seg * fa[ch] - dy;
                const double cb = dy - dt_seg * fb[ch];
                v = ya[ch] + u * dy + u * (1.0 - u) * (ca * (1.0 - u) + cb * u);
            }
            if (!std::isfinite(v))
                throw NonFiniteState("non-finite value produced while sampling");
            if (nonneg_clamp_atol > 0.0 && v < 0.0) {
                if (v <= -nonneg_clamp_atol) {
                    throw NonFiniteState(
                        "sampled concentration below -atol: channel " + std::to_string(ch) +
                        " at t=" + std::to_string(ts) + " value=" + std::to_string(v));
                }
                v = 0.0;
            }
            out.values[ch * count + i] = v;
        }
    }
    return out;
}

}  // namespace robermix
