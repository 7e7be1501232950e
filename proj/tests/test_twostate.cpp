#include <catch_amalgamated.hpp>

#include <numbers>

#include "oms/twostate.hpp"

using namespace oms;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

TwoStateInputs reference_inputs() {
    TwoStateInputs in;
    in.w0_plus = 0.0275;
    in.w0_minus = 0.022;
    in.w1_plus = 0.002;
    in.w1_minus = -0.0015;
    in.omega_f = 0.1;
    in.x_bar_plus = 5.4;
    in.x_bar_minus = 0.92;
    in.var_normal = 3.0;
    in.dx_ddelta0 = 11.5;
    in.g0 = 1.0 / std::sqrt(2.0);
    in.g1 = 0.2;
    in.omega_m = 5.0;
    return in;
}

// Independent integration: midpoint rule with a fine step on p+ alone,
// started far from the attractor.
std::vector<double> midpoint_periodic(const TwoStateInputs& in, double t_end, double dt) {
    const double om = in.omega_f;
    auto f = [&](double t, double p) {
        const double wp = in.w0_plus + in.w1_plus * std::sin(om * t);
        const double wm = in.w0_minus + in.w1_minus * std::sin(om * t);
        return wp * (1.0 - p) - wm * p;
    };
    double p = 0.0;
    const long n = std::lround(t_end / dt);
    std::vector<double> out{p};
    for (long k = 0; k < n; ++k) {
        const double t = double(k) * dt;
        p += dt * f(t + 0.5 * dt, p + 0.5 * dt * f(t, p));
        out.push_back(p);
    }
    return out;
}

} // namespace

TEST_CASE("steady branch probabilities", "[twostate]") {
    const auto [pp, pm] = steady_probabilities(0.03, 0.01);
    CHECK_THAT(pp, WithinAbs(0.75, 1e-15));
    CHECK_THAT(pm, WithinAbs(0.25, 1e-15));
    CHECK(steady_probabilities(0.0, 1.0).first == 0.0);
    CHECK_THROWS_AS(steady_probabilities(0.0, 0.0), Error);
    CHECK_THROWS_AS(steady_probabilities(-1.0, 2.0), Error);
}

TEST_CASE("periodic closed form matches an independent integration", "[twostate]") {
    const TwoStateInputs in = reference_inputs();
    const double T = 2.0 * std::numbers::pi / in.omega_f, dt = 1e-3;
    // 40 periods is ~ 125 relaxation times, so the transient is gone.
    const auto p = midpoint_periodic(in, 40.0 * T, dt);
    for (double frac : {0.0, 0.25, 0.6, 0.9}) {
        const double t = 39.0 * T + frac * T;
        const double ref = p[std::size_t(std::lround(t / dt))];
        CHECK_THAT(periodic_probability(in, t), WithinAbs(ref, 1e-6));
    }
    TwoStateInputs bad = in;
    bad.omega_f = 0.0;
    CHECK_THROWS_AS(periodic_probability(bad, 1.0), Error);
}

TEST_CASE("RK4 solution agrees with the closed form", "[twostate]") {
    const TwoStateInputs in = reference_inputs();
    const double T = 2.0 * std::numbers::pi / in.omega_f;
    const auto s = solve_rate_equation(in, 30.0 * T, 0.01);
    CHECK(s.max_abs_diff_last_period < 1e-6);
    for (std::size_t k = 0; k < s.t.size(); ++k) CHECK_THAT(s.p_plus[k] + s.p_minus[k], WithinAbs(1.0, 1e-12));
    CHECK_THROWS_AS(solve_rate_equation(in, 0.001, 0.01), Error);
}

TEST_CASE("first-harmonic response matches the periodic solution", "[twostate]") {
    TwoStateInputs in = reference_inputs();
    for (double om : {0.01, 0.05, 0.1, 0.3}) {
        in.omega_f = om;
        const double T = 2.0 * std::numbers::pi / om;
        const auto s = solve_rate_equation(in, 20.0 * T + 300.0, T / 4000.0);
        const auto m = modulated_probabilities(in);
        REQUIRE(m.mod_amplitude > 0.0);
        INFO("omega " << om);
        CHECK_THAT(s.harmonic.amplitude, WithinRel(m.mod_amplitude, 0.01));
        CHECK_THAT(s.harmonic.phase, WithinAbs(m.phase, 0.01));
        CHECK_THAT(s.harmonic.mean, WithinRel(m.p_ss, 0.01));
    }
    // Unmodulated rates give no response.
    in.w1_plus = in.w1_minus = 0.0;
    CHECK(modulated_probabilities(in).mod_amplitude == 0.0);
}

TEST_CASE("slow-modulation flag", "[twostate]") {
    TwoStateInputs in = reference_inputs();
    CHECK(modulated_probabilities(in).slow_modulation_ok);
    in.w1_plus = 0.02;
    in.w1_minus = 0.0;
    CHECK_FALSE(modulated_probabilities(in).slow_modulation_ok);
    CHECK_FALSE(predict_response(in).warnings.empty());
}

TEST_CASE("two-state prediction", "[twostate]") {
    TwoStateInputs in = reference_inputs();
    const double wb = in.w_bar();
    const auto p = predict_response(in, {0.0, 0.05, 0.1});
    REQUIRE(p.s_noise.size() == 3);
    CHECK_THAT(p.s_noise[0], WithinRel(2.0 * in.var_normal / wb + 1.0, 1e-14));
    CHECK_THAT(p.s_noise[2], WithinRel(p.s_noise_at_signal, 1e-14));
    const double grad = 2.0 * in.g0 / in.omega_m * in.dx_ddelta0;
    const double lorentz2 = wb * wb / (wb * wb + in.omega_f * in.omega_f);
    CHECK_THAT(p.gain, WithinRel(grad * grad * lorentz2, 1e-12));
    CHECK_THAT(p.i_omega, WithinRel(in.g1 * grad * std::sqrt(lorentz2), 1e-12));
    CHECK_THAT(p.s_signal_peak, WithinRel(std::numbers::pi * p.i_omega * p.i_omega / (2.0 * in.delta_omega), 1e-12));
    CHECK_THAT(p.snr, WithinAbs(p.snr_ratio + 1.0, 1e-12));
    CHECK(p.warnings.empty());
    // Photocurrent gain is independent of the probe amplitude.
    in.g1 = 0.0;
    CHECK_THAT(predict_response(in).gain, WithinRel(p.gain, 1e-14));
}

TEST_CASE("rate and response pictures agree when the slope comes from the rates", "[twostate]") {
    TwoStateInputs in = reference_inputs();
    // W1 = (2 g0 g1 / omega_m) dW0/dDelta0 and dX/dDelta0 = (X+ - X-) dp/dDelta0.
    const double dwp = 0.2, dwm = -0.15, k = 2.0 * in.g0 * in.g1 / in.omega_m;
    in.w1_plus = k * dwp;
    in.w1_minus = k * dwm;
    const double wb = in.w_bar();
    const double dp = (in.w0_minus * dwp - in.w0_plus * dwm) / (wb * wb);
    in.dx_ddelta0 = (in.x_bar_plus - in.x_bar_minus) * dp;
    const auto p = predict_response(in);
    CHECK_THAT(p.i_omega_two_state, WithinRel(p.i_omega, 1e-12));
}

TEST_CASE("low-frequency SNR is the noise-dominated limit", "[twostate]") {
    TwoStateInputs in = reference_inputs();
    in.var_normal = 3000.0;   // telegraph noise swamps shot noise
    in.omega_f = 1e-6;
    const auto p = predict_response(in);
    CHECK_THAT(p.snr_low_frequency - 1.0, WithinRel(p.snr_ratio, 1e-3));
    in.w0_minus = 0.0;
    CHECK_THROWS_AS(predict_response(in), Error);
    in = reference_inputs();
    in.delta_omega = 0.0;
    CHECK_THROWS_AS(predict_response(in), Error);
}
