#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "oms/error.hpp"

namespace oms {

/// p_+ = W_+ / (W_+ + W_-), with W_+ the rate into the upper branch.
inline std::pair<double, double> steady_probabilities(double w_plus, double w_minus) {
    if (!(w_plus >= 0.0) || !(w_minus >= 0.0) || !(w_plus + w_minus > 0.0))
        throw Error("twostate", "invalid-rates", "switching rates must be >= 0 and not both zero");
    const double p = w_plus / (w_plus + w_minus);
    return {p, 1.0 - p};
}

struct TwoStateInputs {
    double w0_plus = 0.0, w0_minus = 0.0;   // unmodulated rates
    double w1_plus = 0.0, w1_minus = 0.0;   // modulation, W(t) = W0 + W1 sin(omega_f t)
    double omega_f = 0.0;
    double x_bar_plus = 0.0, x_bar_minus = 0.0;
    double var_normal = 0.0;
    double dx_ddelta0 = 0.0;
    double g0 = 0.0, g1 = 0.0, omega_m = 1.0;
    double delta_omega = 1e-3;
    double kappa = 1.0;

    double w_bar() const { return w0_plus + w0_minus; }
};

/// Adaptive Simpson quadrature to a relative tolerance.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double rel_tol = 1e-8,
                               int max_depth = 40) {
    struct Rec {
        const std::function<double(double)>& f;
        double tol;
        double run(double a, double b, double fa, double fm, double fb, double whole, double eps, int depth) const {
            const double m = 0.5 * (a + b), lm = 0.5 * (a + m), rm = 0.5 * (m + b);
            const double flm = f(lm), frm = f(rm);
            const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            const double delta = left + right - whole;
            if (depth <= 0 || std::abs(delta) <= 15.0 * eps) return left + right + delta / 15.0;
            return run(a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
                   run(m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
        }
    };
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // Coarse estimate of the scale for the relative tolerance.
    double scale = 0.0;
    for (int k = 0; k <= 16; ++k) scale += std::abs(f(a + (b - a) * k / 16.0));
    scale = scale / 17.0 * (b - a);
    const Rec rec{f, rel_tol};
    return rec.run(a, b, fa, fm, fb, whole, rel_tol * std::max(scale, 1e-300), max_depth);
}

/// Periodic attractor of dp+/dt = W+(t) p- - W-(t) p+ evaluated from its
/// closed form as an integral over one period T,
///   p+(t) = [ int_{t-T}^t W+(s) exp(-int_s^t Wbar) ds ] / (1 - exp(-int_{t-T}^t Wbar)).
inline double periodic_probability(const TwoStateInputs& in, double t, double rel_tol = 1e-8) {
    const double om = in.omega_f;
    if (!(om > 0.0)) throw Error("twostate", "invalid-frequency", "omega_f must be > 0 for the periodic solution");
    const double T = 2.0 * std::numbers::pi / om;
    const double wb0 = in.w_bar(), wb1 = in.w1_plus + in.w1_minus;
    // int_s^t Wbar(u) du in closed form.
    auto integral = [&](double s) { return wb0 * (t - s) - wb1 / om * (std::cos(om * t) - std::cos(om * s)); };
    auto integrand = [&](double s) { return (in.w0_plus + in.w1_plus * std::sin(om * s)) * std::exp(-integral(s)); };
    const double num = adaptive_simpson(integrand, t - T, t, rel_tol);
    return num / (1.0 - std::exp(-wb0 * T));
}

struct HarmonicFit {
    double mean = 0.0, amplitude = 0.0, phase = 0.0;   // p = mean + A sin(omega t - phase)
};

struct RateEquationSolution {
    std::vector<double> t;
    std::vector<double> p_plus;       // RK4 integration of the rate equation
    std::vector<double> p_minus;
    std::vector<double> p_plus_quad;  // closed-form periodic solution at the same times
    HarmonicFit harmonic;             // first harmonic of the last full period (RK4)
    double max_abs_diff_last_period = 0.0;
};

/// Integrates the modulated rate equation from the unmodulated steady state
/// with RK4 on [0, horizon] and evaluates the periodic closed form at the
/// sample times of the last full period (every `quad_stride` steps).
inline RateEquationSolution solve_rate_equation(const TwoStateInputs& in, double horizon, double dt,
                                                int quad_stride = 10) {
    if (!(dt > 0.0) || !(horizon > dt)) throw Error("twostate", "invalid-grid", "need 0 < dt < horizon");
    if (!(in.w_bar() > 0.0)) throw Error("twostate", "invalid-rates", "W0+ + W0- must be > 0");
    const double om = in.omega_f;
    auto wp = [&](double t) { return in.w0_plus + in.w1_plus * std::sin(om * t); };
    auto wm = [&](double t) { return in.w0_minus + in.w1_minus * std::sin(om * t); };
    // Integrate the pair (p+, p-) so their sum is conserved by the scheme.
    auto rhs = [&](double t, double pp, double pm) {
        const double flow = wp(t) * pm - wm(t) * pp;
        return std::pair<double, double>(flow, -flow);
    };
    RateEquationSolution s;
    const long n = std::lround(horizon / dt);
    double pp = in.w0_plus / in.w_bar(), pm = 1.0 - pp;
    s.t.reserve(std::size_t(n + 1));
    s.t.push_back(0.0);
    s.p_plus.push_back(pp);
    s.p_minus.push_back(pm);
    for (long k = 0; k < n; ++k) {
        const double t = double(k) * dt;
        const auto k1 = rhs(t, pp, pm);
        const auto k2 = rhs(t + 0.5 * dt, pp + 0.5 * dt * k1.first, pm + 0.5 * dt * k1.second);
        const auto k3 = rhs(t + 0.5 * dt, pp + 0.5 * dt * k2.first, pm + 0.5 * dt * k2.second);
        const auto k4 = rhs(t + dt, pp + dt * k3.first, pm + dt * k3.second);
        pp += dt / 6.0 * (k1.first + 2.0 * k2.first + 2.0 * k3.first + k4.first);
        pm += dt / 6.0 * (k1.second + 2.0 * k2.second + 2.0 * k3.second + k4.second);
        s.t.push_back(double(k + 1) * dt);
        s.p_plus.push_back(pp);
        s.p_minus.push_back(pm);
    }
    s.p_plus_quad.assign(s.t.size(), std::nan(""));
    if (om > 0.0) {
        const double T = 2.0 * std::numbers::pi / om;
        const long per = std::lround(T / dt);
        if (per > 0 && per <= n) {
            const long start = n - per;
            double a = 0.0, b = 0.0, c = 0.0;
            for (long k = start; k < n; ++k) {
                // Rectangle rule over a full period; exact for the low harmonics.
                const double f0 = s.p_plus[std::size_t(k)], t0 = s.t[std::size_t(k)];
                a += f0 * std::sin(om * t0);
                b += f0 * std::cos(om * t0);
                c += f0;
            }
            const double norm = 2.0 / double(per);
            a *= norm;
            b *= norm;
            s.harmonic.mean = c / double(per);
            s.harmonic.amplitude = std::hypot(a, b);
            s.harmonic.phase = std::atan2(-b, a);
            for (long k = start; k <= n; k += std::max(1, quad_stride)) {
                const double q = periodic_probability(in, s.t[std::size_t(k)]);
                s.p_plus_quad[std::size_t(k)] = q;
                s.max_abs_diff_last_period = std::max(s.max_abs_diff_last_period, std::abs(q - s.p_plus[std::size_t(k)]));
            }
        }
    }
    return s;
}

struct ModulatedProbabilities {
    double p_ss = 0.0;
    double mod_amplitude = 0.0;   // coefficient of sin(omega t - phase)
    double phase = 0.0;
    bool slow_modulation_ok = true;   // |W1+ + W1-| <= 0.1 omega
};

/// First-harmonic response of the rate equation,
///   p+(t) ~ p_ss + A sin(omega t - phi),  phi = arctan(omega / Wbar),
///   A = (W1+ W0- - W1- W0+) / (Wbar sqrt(Wbar^2 + omega^2)).
inline ModulatedProbabilities modulated_probabilities(const TwoStateInputs& in) {
    const double wb = in.w_bar();
    if (!(wb > 0.0)) throw Error("twostate", "invalid-rates", "W0+ + W0- must be > 0");
    ModulatedProbabilities m;
    m.p_ss = in.w0_plus / wb;
    m.mod_amplitude = (in.w1_plus * in.w0_minus - in.w1_minus * in.w0_plus) / (wb * std::hypot(wb, in.omega_f));
    m.phase = std::atan2(in.omega_f, wb);
    m.slow_modulation_ok = std::abs(in.w1_plus + in.w1_minus) <= 0.1 * in.omega_f;
    return m;
}

struct TwoStatePrediction {
    double p_ss_plus = 0.0;
    double mod_amplitude = 0.0;
    double phase = 0.0;
    double i_omega = 0.0;          // photocurrent response amplitude at omega_f
    double i_omega_two_state = 0.0;  // sqrt(kappa)(X+ - X-) times the modulation amplitude
    std::vector<double> freqs;
    std::vector<double> s_noise;
    double s_noise_at_signal = 0.0;
    double s_signal_peak = 0.0;
    double gain = 0.0;
    double snr = 1.0;              // signal / noise + 1
    double snr_ratio = 0.0;        // signal / noise
    double snr_low_frequency = 1.0;
    std::vector<std::string> warnings;
};

inline double two_state_noise(const TwoStateInputs& in, double omega) {
    const double wb = in.w_bar();
    return 2.0 * in.kappa * in.var_normal * wb / (wb * wb + omega * omega) + 1.0;
}

/// Noise background, signal response, gain and SNR of the bistable
/// detector from the two-state model.
inline TwoStatePrediction predict_response(const TwoStateInputs& in, const std::vector<double>& freqs = {}) {
    const double wb = in.w_bar();
    if (!(in.w0_plus > 0.0) || !(in.w0_minus > 0.0))
        throw Error("twostate", "invalid-rates", "W0+ and W0- must be > 0");
    if (!(in.delta_omega > 0.0)) throw Error("twostate", "invalid-resolution", "delta_omega must be > 0");
    TwoStatePrediction p;
    const auto mp = modulated_probabilities(in);
    p.p_ss_plus = mp.p_ss;
    p.mod_amplitude = mp.mod_amplitude;
    p.phase = mp.phase;
    if (!mp.slow_modulation_ok) p.warnings.push_back("|W1+ + W1-| exceeds 0.1 omega_f; first-harmonic form approximate");
    if (std::abs(in.w1_plus) >= in.w0_plus || std::abs(in.w1_minus) >= in.w0_minus)
        p.warnings.push_back("|W1| >= W0: outside linear response");
    const double rk = std::sqrt(in.kappa);
    const double lorentz = wb / std::hypot(wb, in.omega_f);
    // Response per unit force, so the gain stays defined at g1 = 0.
    const double per_g1 = 2.0 * in.g0 / in.omega_m * rk * in.dx_ddelta0 * lorentz;
    p.i_omega = per_g1 * in.g1;
    p.i_omega_two_state = rk * (in.x_bar_plus - in.x_bar_minus) * mp.mod_amplitude;
    p.freqs = freqs;
    for (double w : freqs) p.s_noise.push_back(two_state_noise(in, w));
    p.s_noise_at_signal = two_state_noise(in, in.omega_f);
    p.s_signal_peak = std::numbers::pi * p.i_omega * p.i_omega / (2.0 * in.delta_omega);
    p.gain = in.kappa * per_g1 * per_g1;
    p.snr_ratio = p.s_signal_peak / p.s_noise_at_signal;
    p.snr = p.snr_ratio + 1.0;
    const double k = in.g1 * in.g0 / in.omega_m;
    p.snr_low_frequency = in.var_normal > 0.0
                              ? std::numbers::pi * wb / in.delta_omega * k * k * in.dx_ddelta0 * in.dx_ddelta0 /
                                        in.var_normal +
                                    1.0
                              : 1.0;
    return p;
}

} // namespace oms
