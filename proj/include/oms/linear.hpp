#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "oms/error.hpp"
#include "oms/meanfield.hpp"
#include "oms/params.hpp"

namespace oms {

// Closed-form force detection with an optomechanical system driven on
// resonance well below bifurcation, read out in the phase quadrature.

struct Susceptibilities {
    std::complex<double> chi_c, chi_m;
};

inline Susceptibilities susceptibilities(const SystemParams& p, double omega) {
    const std::complex<double> I(0.0, 1.0);
    return {1.0 / (0.5 * p.kappa - I * omega), 1.0 / (0.5 * p.gamma_m + I * (p.omega_m - omega))};
}

struct LinearGain {
    double gain_lin = 0.0;        // at omega, from the susceptibilities
    double gain_low_freq = 0.0;   // (8 g0 / omega_m)^2 n_bar
    double gain_max = 0.0;        // 128 kappa / (3 sqrt 3 omega_m)
    double gain_opt = 0.0;        // 4 kappa / omega_m
    double gain_opt_exact = 0.0;  // 2 kappa |chi_m(w) - chi_m*(-w)|
    double n_bar = 0.0;
    double n_bif = 0.0;
    double g_enh = 0.0;
    bool valid = false;           // n_bar below the bifurcation occupation
};

inline LinearGain linear_gain(const SystemParams& p, double omega) {
    LinearGain r;
    const double k = p.kappa;
    r.n_bar = 4.0 * (p.epsilon / k) * (p.epsilon / k);
    r.g_enh = p.g0 * std::sqrt(r.n_bar);
    const auto s = susceptibilities(p, omega);
    r.gain_lin = std::norm(2.0 * r.g_enh * k * s.chi_c * (s.chi_m - std::conj(s.chi_m)));
    r.gain_low_freq = std::pow(8.0 * p.g0 / p.omega_m, 2) * r.n_bar;
    r.gain_max = 128.0 / (3.0 * std::sqrt(3.0)) * k / p.omega_m;
    r.gain_opt = 4.0 * k / p.omega_m;
    const auto s_neg = susceptibilities(p, -omega);
    r.gain_opt_exact = 2.0 * k * std::abs(s.chi_m - std::conj(s_neg.chi_m));
    if (p.g0 > 0.0) {
        r.n_bif = bifurcation_threshold(p).n_bif;
        r.valid = r.n_bar < r.n_bif;
    }
    return r;
}

struct LinearNoise {
    double imprecision = 0.0;     // 1 / G
    double back_action = 0.0;     // G (w_m^2 - w^2)^2 / (16 k^2 w_m^2)
    double thermal = 0.0;         // (n_th + 1/2)(g_m / k)(w^2 + w_m^2)/(2 w_m^2)
    double noise_referred = 0.0;  // sum of the three, input referred
    double noise_output = 0.0;    // noise_referred * G
    double bracket_low_freq = 0.0;   // 1/G + G w_m^2/16k^2 + g_m/4k
    double snr_lin = 0.0;
    double i_lin = 0.0;           // sqrt(G) g1 / sqrt(k)
    std::vector<std::string> warnings;
};

/// Input-referred noise at gain G and the SNR of a linear detector
/// operating at that gain. Near the mechanical resonance the noise
/// expression does not hold; |w - w_m| < 5 gamma_m is flagged.
inline LinearNoise linear_noise_snr(const SystemParams& p, double omega, double g1, double delta_omega,
                                    double gain) {
    if (!(gain > 0.0)) throw Error("linear", "invalid-gain", "gain must be > 0");
    if (!(delta_omega > 0.0)) throw Error("linear", "invalid-resolution", "delta_omega must be > 0");
    LinearNoise r;
    const double k = p.kappa, wm = p.omega_m, w2 = omega * omega;
    r.imprecision = 1.0 / gain;
    r.back_action = gain * (wm * wm - w2) * (wm * wm - w2) / (16.0 * k * k * wm * wm);
    r.thermal = (p.n_th + 0.5) * (p.gamma_m / k) * (w2 + wm * wm) / (2.0 * wm * wm);
    r.noise_referred = r.imprecision + r.back_action + r.thermal;
    r.noise_output = r.noise_referred * gain;
    r.bracket_low_freq = 1.0 / gain + gain * wm * wm / (16.0 * k * k) + p.gamma_m / (4.0 * k);
    r.snr_lin = std::numbers::pi * g1 * g1 / (2.0 * delta_omega * k) / r.bracket_low_freq;
    r.i_lin = std::sqrt(gain) * g1 / std::sqrt(k);
    if (std::abs(omega - wm) < 5.0 * p.gamma_m)
        r.warnings.push_back("omega within 5 gamma_m of the mechanical resonance: noise expression not valid");
    if (p.n_th != 0.0) r.warnings.push_back("snr_lin uses the zero-temperature low-frequency form");
    if (std::abs(omega) > 0.1 * std::min(k, wm))
        r.warnings.push_back("snr_lin assumes omega << kappa, omega_m");
    return r;
}

struct LinearBenchmark {
    std::complex<double> chi_c, chi_m;
    double g_enh = 0.0, n_bar = 0.0;
    double gain_lin = 0.0, gain_max = 0.0, gain_opt = 0.0;
    double noise_referred = 0.0, snr_lin = 0.0, i_lin = 0.0;
    double delta_eff = 0.0;   // resonant drive
    double i_bar = 0.0;       // phase quadrature of a = eps / (k/2) on resonance
    double di_bar_ddelta = 0.0;
    bool valid = false;
    std::vector<std::string> warnings;
};

/// Benchmark at gain `gain`; gain <= 0 selects the detector's own
/// gain_lin(omega) at the configured drive.
inline LinearBenchmark linear_benchmark(const SystemParams& p, double omega, double g1, double delta_omega,
                                        double gain = 0.0) {
    LinearBenchmark b;
    const auto s = susceptibilities(p, omega);
    const auto lg = linear_gain(p, omega);
    b.chi_c = s.chi_c;
    b.chi_m = s.chi_m;
    b.g_enh = lg.g_enh;
    b.n_bar = lg.n_bar;
    b.gain_lin = gain > 0.0 ? gain : lg.gain_lin;
    b.gain_max = lg.gain_max;
    b.gain_opt = lg.gain_opt;
    b.valid = lg.valid;
    b.di_bar_ddelta = 8.0 * p.epsilon / (p.kappa * p.kappa);
    if (!(b.gain_lin > 0.0)) {
        b.warnings.push_back("zero gain: no transduction");
        return b;
    }
    const auto n = linear_noise_snr(p, omega, g1, delta_omega, b.gain_lin);
    b.noise_referred = n.noise_referred;
    b.snr_lin = n.snr_lin;
    b.i_lin = n.i_lin;
    b.warnings = n.warnings;
    if (gain <= 0.0 && !lg.valid) b.warnings.push_back("n_bar above n_bif: the linear regime does not apply");
    return b;
}

} // namespace oms
