#include <catch_amalgamated.hpp>

#include <numbers>

#include "oms/linear.hpp"

using namespace oms;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("susceptibilities", "[linear]") {
    const SystemParams p;
    const auto s = susceptibilities(p, 0.0);
    CHECK(std::abs(s.chi_c - 2.0 / p.kappa) < 1e-15);
    CHECK(std::abs(s.chi_m - 1.0 / std::complex<double>(0.5 * p.gamma_m, p.omega_m)) < 1e-15);
    const auto r = susceptibilities(p, p.omega_m);
    CHECK_THAT(r.chi_m.real(), WithinRel(2.0 / p.gamma_m, 1e-14));
    CHECK_THAT(std::abs(r.chi_c), WithinRel(1.0 / std::hypot(0.5 * p.kappa, p.omega_m), 1e-14));
}

TEST_CASE("gain ceilings", "[linear]") {
    const SystemParams p;
    const auto g = linear_gain(p, 0.1);
    CHECK_THAT(g.gain_max, WithinAbs(4.9267, 1e-4));
    CHECK_THAT(g.gain_opt, WithinAbs(0.8, 1e-14));
    CHECK_THAT(g.n_bar, WithinAbs(9.0, 1e-12));
    CHECK_FALSE(g.valid);
    CHECK_THAT(g.g_enh, WithinRel(3.0 * p.g0, 1e-14));
    // Exact optimum -> 4 kappa / omega_m as gamma_m / omega_m -> 0.
    const double lorentz = 1.0 / (1.0 + std::pow(0.5 * p.gamma_m / p.omega_m, 2));
    CHECK_THAT(linear_gain(p, 1e-6).gain_opt_exact, WithinRel(g.gain_opt * lorentz, 1e-6));
    SystemParams q;
    q.epsilon = 0.5;
    CHECK(linear_gain(q, 0.1).valid);
}

TEST_CASE("low-frequency gain", "[linear]") {
    SystemParams p;
    p.epsilon = 0.5;
    const auto g = linear_gain(p, 1e-6);
    // |2 G kappa chi_c (chi_m - chi_m*)|^2 at w = 0 with G^2 = g0^2 n_bar.
    const double im = p.omega_m / (0.25 * p.gamma_m * p.gamma_m + p.omega_m * p.omega_m);
    const double ref = std::pow(2.0 * g.g_enh * p.kappa * (2.0 / p.kappa) * 2.0 * im, 2);
    // omega = 1e-6 is not zero; the mechanical pole makes the shift first order.
    CHECK_THAT(g.gain_lin, WithinRel(ref, 1e-5));
    CHECK_THAT(g.gain_low_freq, WithinRel(g.gain_lin, 0.01));
    // Gain grows with the intracavity photon number.
    double prev = 0.0;
    for (double eps : {0.1, 0.2, 0.4, 0.8}) {
        p.epsilon = eps;
        const double v = linear_gain(p, 0.1).gain_lin;
        CHECK(v > prev);
        prev = v;
    }
    SystemParams z;
    z.g0 = 0.0;
    CHECK(linear_gain(z, 0.1).gain_lin == 0.0);
    CHECK(linear_benchmark(z, 0.1, 0.2, 1e-3).warnings.size() == 1);
}

TEST_CASE("noise bracket and the standard quantum limit", "[linear]") {
    const SystemParams p;
    const auto n = linear_noise_snr(p, 0.0, 0.2, 1e-3, 0.8);
    CHECK_THAT(n.imprecision, WithinAbs(1.25, 1e-14));
    CHECK_THAT(n.back_action, WithinAbs(1.25, 1e-14));
    CHECK_THAT(n.thermal, WithinAbs(0.125, 1e-14));
    CHECK_THAT(n.bracket_low_freq, WithinAbs(2.625, 1e-14));
    CHECK_THAT(n.noise_referred, WithinAbs(n.bracket_low_freq, 1e-14));
    CHECK_THAT(n.noise_output, WithinRel(2.625 * 0.8, 1e-14));
    CHECK_THAT(n.snr_lin, WithinAbs(23.94, 0.01));
    CHECK_THAT(n.i_lin, WithinRel(std::sqrt(0.8) * 0.2, 1e-14));
    // Imprecision and back action balance at the optimal gain.
    auto bracket = [&](double g) { return linear_noise_snr(p, 0.0, 0.2, 1e-3, g).bracket_low_freq; };
    const double h = 1e-4;
    CHECK(std::abs(bracket(0.8 + h) - bracket(0.8 - h)) / (2.0 * h) < 1e-6);
    for (double g : {0.2, 0.5, 1.2, 4.9}) CHECK(bracket(g) > bracket(0.8));
    CHECK_THROWS_AS(linear_noise_snr(p, 0.0, 0.2, 1e-3, 0.0), Error);
    CHECK_THROWS_AS(linear_noise_snr(p, 0.0, 0.2, 0.0, 0.8), Error);
}

TEST_CASE("validity warnings", "[linear]") {
    SystemParams p;
    CHECK(linear_noise_snr(p, 0.1, 0.2, 1e-3, 0.8).warnings.empty());
    CHECK(linear_noise_snr(p, 4.0, 0.2, 1e-3, 0.8).warnings.size() == 2);
    p.n_th = 1.0;
    CHECK(linear_noise_snr(p, 0.1, 0.2, 1e-3, 0.8).warnings.size() == 1);
    const auto b = linear_benchmark(SystemParams{}, 0.1, 0.2, 1e-3);
    CHECK_FALSE(b.valid);
    CHECK(b.warnings.size() == 1);
    const auto fixed = linear_benchmark(SystemParams{}, 0.1, 0.2, 1e-3, 0.8);
    CHECK(fixed.warnings.empty());
    CHECK_THAT(fixed.snr_lin, WithinAbs(23.94, 0.01));
    CHECK_THAT(fixed.gain_max, WithinAbs(4.9267, 1e-4));
}
