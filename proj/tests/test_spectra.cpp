#include <catch_amalgamated.hpp>

#include <numbers>
#include <random>

#include "oms/spectra.hpp"

using namespace oms;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double pi = std::numbers::pi;

// Shot noise with unit two-sided density: I = dW / dt.
std::vector<double> white(long n, double dt, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(dt));
    std::vector<double> x(static_cast<std::size_t>(n));
    for (auto& v : x) v = g(gen);
    return x;
}

// Symmetric two-level signal +-h with switching rate w_bar / 2 each way.
std::vector<double> telegraph(long n, double dt, double w_bar, double h, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> x(static_cast<std::size_t>(n));
    double s = h;
    const double flip = 1.0 - std::exp(-0.5 * w_bar * dt);
    for (auto& v : x) {
        if (u(gen) < flip) s = -s;
        v = s;
    }
    return x;
}

SpectrumEstimate accumulate(const std::vector<double>& x, long seg, double dt, double omega_max = 2.0) {
    SpectrumAccumulator acc(seg, dt, omega_max);
    for (double v : x) acc.push(v);
    return acc.estimate();
}

} // namespace

TEST_CASE("segment grid is exact and FFT friendly", "[spectra]") {
    for (auto [dw, dt] : {std::pair{1e-3, 1e-3}, std::pair{1e-3, 2e-3}, std::pair{0.01, 0.003}}) {
        const auto g = segment_grid(dw, dt);
        CHECK(detail::is_smooth7(g.samples));
        CHECK_THAT(double(g.samples) * g.dt, WithinRel(2.0 * pi / dw, 1e-14));
        CHECK_THAT(g.dt, WithinRel(dt, 5e-3));
    }
    CHECK_THROWS_AS(segment_grid(0.0, 1e-3), Error);
}

TEST_CASE("shot noise is flat at one", "[spectra]") {
    const double dt = 0.01;
    const long seg = 1000;
    const auto s = accumulate(white(seg * 100, dt, 1), seg, dt, 100.0);
    REQUIRE(s.n_segments == 100);
    CHECK_THAT(s.delta_omega, WithinRel(2.0 * pi / 10.0, 1e-14));
    double mean = 0.0, se = 0.0;
    for (std::size_t j = 0; j < s.s_out.size(); ++j) {
        mean += s.s_out[j];
        se += s.standard_error(j);
    }
    mean /= double(s.s_out.size());
    se /= double(s.s_out.size());
    CHECK_THAT(mean, WithinAbs(1.0, 5.0 / std::sqrt(100.0 * double(s.s_out.size()))));
    // Periodogram bins are exponential, so the error of the mean is S / sqrt(n).
    CHECK_THAT(se, WithinRel(0.1, 0.05));
}

TEST_CASE("Parseval: two-sided spectrum integrates to the mean square", "[spectra]") {
    const double dt = 0.02;
    const long seg = 999;   // odd, no Nyquist bin
    auto x = white(seg * 3, dt, 2);
    for (auto& v : x) v += 0.7;
    const auto s = accumulate(x, seg, dt, std::numeric_limits<double>::infinity());
    REQUIRE(long(s.s_out.size()) == (seg - 1) / 2);
    double total = s.dc;
    for (double v : s.s_out) total += 2.0 * v;
    CHECK_THAT(total * s.delta_omega / (2.0 * pi), WithinRel(s.variance + s.mean * s.mean, 1e-10));
}

TEST_CASE("on-grid tone has peak A^2 T / 4", "[spectra]") {
    const double dt = 0.01, amp = 0.3;
    for (long seg : {2000L, 4000L}) {
        const double T = double(seg) * dt;
        const double w = 5.0 * 2.0 * pi / T;
        std::vector<double> x;
        for (long k = 0; k < seg * 4; ++k) x.push_back(amp * std::sin(w * double(k) * dt));
        const auto s = accumulate(x, seg, dt);
        const auto bin = s.bin_of(w);
        REQUIRE(bin);
        CHECK(*bin == 4);
        CHECK_THAT(s.s_out[*bin], WithinRel(amp * amp * T / 4.0, 1e-10));
        CHECK(s.s_out[*bin + 1] < 1e-20);
    }
}

TEST_CASE("telegraph noise is a Lorentzian of width W", "[spectra]") {
    const double dt = 0.05, w_bar = 0.5, h = 1.0;
    const long seg = 2000;
    auto x = telegraph(seg * 400, dt, w_bar, h, 3);
    const auto shot = white(seg * 400, dt, 4);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += shot[k];
    const auto s = accumulate(x, seg, dt, 10.0);
    const auto fit = fit_noise(s);
    // Autocorrelation h^2 exp(-W |tau|) gives 2 h^2 W / (W^2 + w^2).
    CHECK_THAT(fit.width, WithinRel(w_bar, 0.1));
    CHECK_THAT(fit.amplitude, WithinRel(2.0 * h * h, 0.1));
    CHECK_THAT(fit.floor, WithinAbs(1.0, 0.05));
    CHECK_THAT(fit.sum_rule(), WithinRel(h * h, 0.1));
    CHECK_THAT(excess_power(s, fit), WithinRel(h * h, 0.1));
    CHECK(fit.chi2_reduced < 1.5);
    CHECK(fit.converged);
    for (std::size_t j = 0; j < s.freqs.size(); j += 20)
        CHECK(std::abs(s.s_out[j] - fit(s.freqs[j])) < 5.0 * s.standard_error(j) + 1e-12);
}

TEST_CASE("tone on a Lorentzian background is recovered", "[spectra]") {
    const double dt = 0.05, w_bar = 0.5, h = 1.0;
    const long seg = 2000;
    const double T = double(seg) * dt, w_f = 20.0 * 2.0 * pi / T;
    const double amp = 0.25;
    auto x = telegraph(seg * 200, dt, w_bar, h, 5);
    const auto shot = white(seg * 200, dt, 6);
    auto null = x;
    for (std::size_t k = 0; k < x.size(); ++k) {
        null[k] += shot[k];
        x[k] += shot[k] + amp * std::sin(w_f * double(k) * dt);
    }
    const auto m = extract_peak(accumulate(x, seg, dt, 10.0), w_f);
    // Peak height pi I^2 / (2 delta_omega) with delta_omega = 2 pi / T.
    CHECK_THAT(m.i_omega, WithinRel(amp, 0.1));
    CHECK(m.z > 10.0);
    CHECK_THAT(measured_gain(m, 0.5), WithinRel(amp * amp / 0.25, 0.2));
    CHECK_THAT(m.snr_measured, WithinRel(m.s_out / m.s_noise, 1e-14));
    const auto n = extract_peak(accumulate(null, seg, dt, 10.0), w_f);
    CHECK(std::abs(n.z) < 3.0);
    CHECK_THROWS_AS(measured_gain(m, 0.0), Error);
    CHECK_THROWS_AS(extract_peak(accumulate(null, seg, dt, 10.0), 1e3), Error);
}

TEST_CASE("guard band covers harmonics of the signal", "[spectra]") {
    NoiseFitOptions o;
    o.omega_f = 0.1;
    const double dw = 1e-3;
    CHECK(detail::in_guard_band(0.1, dw, o));
    CHECK(detail::in_guard_band(0.203, dw, o));
    CHECK_FALSE(detail::in_guard_band(0.204, dw, o));
    CHECK_FALSE(detail::in_guard_band(0.05, dw, o));
    o.omega_f = 0.0;
    CHECK_FALSE(detail::in_guard_band(0.1, dw, o));
}

TEST_CASE("Welch averaging of segment groups", "[spectra]") {
    const double dt = 0.01;
    const long seg = 500;
    const auto x = white(seg * 30, dt, 7);
    const auto all = accumulate(x, seg, dt);
    const std::vector<double> a(x.begin(), x.begin() + seg * 10), b(x.begin() + seg * 10, x.end());
    const auto avg = welch_average({accumulate(a, seg, dt), accumulate(b, seg, dt)});
    CHECK(avg.n_segments == 30);
    for (std::size_t j = 0; j < all.s_out.size(); ++j) CHECK_THAT(avg.s_out[j], WithinRel(all.s_out[j], 1e-12));
    CHECK_THAT(avg.variance, WithinRel(all.variance, 1e-10));
    CHECK_THROWS_AS(welch_average({accumulate(a, seg, dt), accumulate(b, seg / 2, dt)}), Error);
    CHECK_THROWS_AS(welch_average({}), Error);
}

TEST_CASE("spectrum of a stored record", "[spectra]") {
    const SystemParams p = [] {
        SystemParams q;
        q.epsilon = 0.0;
        q.g0 = 0.0;
        return q;
    }();
    const auto rec = simulate_trajectory(p, {}, HilbertDims{2, 2}, 2.0 * pi * 21.0, 2.0 * pi / 1000.0, 3);
    const auto s = record_spectrum(rec, 1.0, 2.0 * pi, 100.0);
    CHECK(s.n_segments == 20);
    CHECK(s.segment_samples == 1000);
    CHECK_THROWS_AS(record_spectrum(rec, 0.77, 0.0), Error);
}

TEST_CASE("simulated shot-noise spectrum in both segmentation modes", "[spectra]") {
    SystemParams p;
    p.epsilon = 0.0;
    p.g0 = 0.0;
    for (auto mode : {Segmentation::single_trajectory, Segmentation::independent_seeds}) {
        SpectrumRun run;
        run.dims = {2, 2};
        run.delta_omega = 0.1;
        run.dt_target = 0.005;
        run.n_segments = 20;
        run.burn_in = 1.0;
        run.omega_max = 20.0;
        run.mode = mode;
        const auto sim = simulate_spectrum(p, {}, run);
        const auto& s = sim.spectrum;
        CHECK(s.n_segments == 20);
        CHECK_THAT(s.delta_omega, WithinRel(0.1, 1e-12));
        double mean = 0.0;
        for (double v : s.s_out) mean += v;
        mean /= double(s.s_out.size());
        CHECK_THAT(mean, WithinAbs(1.0, 5.0 / std::sqrt(20.0 * double(s.s_out.size()))));
    }
}
