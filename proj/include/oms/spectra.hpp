#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <fftw3.h>

#include "oms/error.hpp"
#include "oms/params.hpp"
#include "oms/trajectory.hpp"

namespace oms {

/// Lorentzian plus floor, S(w) = amplitude * width / (width^2 + w^2) + floor.
struct NoiseFit {
    double amplitude = 0.0;
    double width = 0.0;
    double floor = 1.0;
    double chi2_reduced = 0.0;   // with weights 1 / (model^2 / n_segments)
    long n_points = 0;
    bool converged = false;

    double operator()(double w) const { return amplitude * width / (width * width + w * w) + floor; }
    // Two-sided integral of the Lorentzian part over d omega / 2 pi.
    double sum_rule() const { return 0.5 * amplitude; }
};

struct SpectrumEstimate {
    std::vector<double> freqs;     // j * delta_omega, j = 1 .. n_bins
    std::vector<double> s_out;
    std::vector<double> s_sq;      // bin-wise mean of squares, for error bars
    double delta_omega = 0.0;
    double dt = 0.0;
    long segment_samples = 0;
    long n_segments = 0;
    double dc = 0.0;               // mean of the zero-frequency bin
    double mean = 0.0;             // sample mean of the photocurrent
    double variance = 0.0;         // sample variance of the photocurrent
    std::optional<NoiseFit> noise_fit;

    double segment_duration() const { return double(segment_samples) * dt; }
    // Standard error of s_out in bin j from the scatter across segments.
    double standard_error(std::size_t j) const {
        if (n_segments < 2) return s_out[j];
        const double v = std::max(0.0, s_sq[j] - s_out[j] * s_out[j]);
        return std::sqrt(v / double(n_segments - 1));
    }
    // Bin index whose frequency lies within half a bin of w.
    std::optional<std::size_t> bin_of(double w) const {
        const double r = w / delta_omega;
        const long j = std::lround(r);
        if (std::abs(r - double(j)) > 0.5 || j < 1 || j > long(freqs.size())) return std::nullopt;
        return std::size_t(j - 1);
    }
};

/// Segment length and step for a target resolution. The sample count is the
/// 7-smooth integer nearest to 2 pi / (delta_omega dt_target) so the FFT
/// stays fast; dt is then adjusted so that N dt = 2 pi / delta_omega exactly.
struct SegmentGrid {
    long samples = 0;
    double dt = 0.0;
    double duration = 0.0;
};

namespace detail {

inline bool is_smooth7(long n) {
    for (long f : {2L, 3L, 5L, 7L})
        while (n % f == 0) n /= f;
    return n == 1;
}

} // namespace detail

inline SegmentGrid segment_grid(double delta_omega, double dt_target) {
    if (!(delta_omega > 0.0) || !(dt_target > 0.0))
        throw Error("spectra", "invalid-grid", "delta_omega and dt must be > 0");
    SegmentGrid g;
    g.duration = 2.0 * std::numbers::pi / delta_omega;
    const long n0 = std::max(2L, std::lround(g.duration / dt_target));
    long n = n0;
    for (long k = 0; k < n0; ++k) {
        if (detail::is_smooth7(n0 + k)) { n = n0 + k; break; }
        if (n0 - k >= 2 && detail::is_smooth7(n0 - k)) { n = n0 - k; break; }
    }
    g.samples = n;
    g.dt = g.duration / double(n);
    return g;
}

/// Real-to-complex FFT plan with its own aligned buffers.
class RealFft {
public:
    explicit RealFft(long n) : n_(n) {
        in_ = fftw_alloc_real(std::size_t(n));
        out_ = fftw_alloc_complex(std::size_t(n / 2 + 1));
        if (!in_ || !out_) throw Error("spectra", "allocation", "FFT buffers");
        plan_ = fftw_plan_dft_r2c_1d(int(n), in_, out_, FFTW_ESTIMATE);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;
    ~RealFft() {
        fftw_destroy_plan(plan_);
        fftw_free(in_);
        fftw_free(out_);
    }
    double* input() { return in_; }
    // |F_j|^2 for j = 0 .. n/2
    double power(long j) const { return out_[j][0] * out_[j][0] + out_[j][1] * out_[j][1]; }
    void execute() { fftw_execute(plan_); }
    long size() const { return n_; }

private:
    long n_;
    double* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan plan_ = nullptr;
};

/// Averages rectangular-window periodograms of consecutive segments pushed
/// one sample at a time. S_j = |T^-1/2 sum_k e^{i w_j t_k} I_k dt|^2.
class SpectrumAccumulator {
public:
    SpectrumAccumulator(long segment_samples, double dt, double omega_max = 2.0)
        : n_(segment_samples), dt_(dt), fft_(segment_samples) {
        if (segment_samples < 2) throw Error("spectra", "too-short", "need at least 2 samples per segment");
        if (!(dt > 0.0)) throw Error("spectra", "invalid-grid", "dt must be > 0");
        dw_ = 2.0 * std::numbers::pi / (double(n_) * dt_);
        long bins = n_ / 2;
        if (std::isfinite(omega_max)) bins = std::min(bins, long(std::floor(omega_max / dw_ + 1e-9)));
        sum_.assign(std::size_t(std::max(0L, bins)), 0.0);
        sum_sq_.assign(sum_.size(), 0.0);
    }

    void push(double x) {
        fft_.input()[fill_++] = x;
        if (fill_ == n_) flush();
    }

    long segments() const { return segments_; }
    long pending() const { return fill_; }

    SpectrumEstimate estimate() const {
        if (segments_ == 0) throw Error("spectra", "too-short", "no complete segment");
        SpectrumEstimate e;
        e.delta_omega = dw_;
        e.dt = dt_;
        e.segment_samples = n_;
        e.n_segments = segments_;
        const double inv = 1.0 / double(segments_);
        e.freqs.resize(sum_.size());
        e.s_out.resize(sum_.size());
        e.s_sq.resize(sum_.size());
        for (std::size_t j = 0; j < sum_.size(); ++j) {
            e.freqs[j] = double(j + 1) * dw_;
            e.s_out[j] = sum_[j] * inv;
            e.s_sq[j] = sum_sq_[j] * inv;
        }
        e.dc = dc_ * inv;
        const double cnt = double(segments_) * double(n_);
        e.mean = x_sum_ / cnt;
        e.variance = std::max(0.0, x_sq_ / cnt - e.mean * e.mean);
        return e;
    }

private:
    void flush() {
        for (long k = 0; k < n_; ++k) {
            x_sum_ += fft_.input()[k];
            x_sq_ += fft_.input()[k] * fft_.input()[k];
        }
        fft_.execute();
        const double norm = dt_ / double(n_);
        dc_ += norm * fft_.power(0);
        for (std::size_t j = 0; j < sum_.size(); ++j) {
            const double s = norm * fft_.power(long(j) + 1);
            sum_[j] += s;
            sum_sq_[j] += s * s;
        }
        ++segments_;
        fill_ = 0;
    }

    long n_;
    double dt_, dw_ = 0.0;
    RealFft fft_;
    long fill_ = 0, segments_ = 0;
    std::vector<double> sum_, sum_sq_;
    double dc_ = 0.0, x_sum_ = 0.0, x_sq_ = 0.0;
};

/// Single-segment periodogram of the whole sample series.
inline SpectrumEstimate periodogram(const std::vector<double>& samples, double dt, double omega_max = 2.0) {
    if (samples.size() < 2) throw Error("spectra", "too-short", "need at least 2 samples");
    SpectrumAccumulator acc(long(samples.size()), dt, omega_max);
    for (double x : samples) acc.push(x);
    return acc.estimate();
}

/// Bin-wise mean over segments sharing dt, length, and frequency range.
inline SpectrumEstimate welch_average(const std::vector<SpectrumEstimate>& parts) {
    if (parts.empty()) throw Error("spectra", "heterogeneous-segments", "nothing to average");
    const SpectrumEstimate& first = parts.front();
    SpectrumEstimate out = first;
    out.noise_fit.reset();
    if (parts.size() == 1) return out;
    long total = 0;
    std::fill(out.s_out.begin(), out.s_out.end(), 0.0);
    std::fill(out.s_sq.begin(), out.s_sq.end(), 0.0);
    out.dc = out.mean = 0.0;
    double second = 0.0;
    for (const auto& p : parts) {
        if (p.segment_samples != first.segment_samples || p.freqs.size() != first.freqs.size() ||
            std::abs(p.dt - first.dt) > 1e-12 * first.dt)
            throw Error("spectra", "heterogeneous-segments", "segments differ in dt, length, or frequency range");
        const double w = double(p.n_segments);
        for (std::size_t j = 0; j < out.s_out.size(); ++j) {
            out.s_out[j] += w * p.s_out[j];
            out.s_sq[j] += w * p.s_sq[j];
        }
        out.dc += w * p.dc;
        out.mean += w * p.mean;
        second += w * (p.variance + p.mean * p.mean);
        total += p.n_segments;
    }
    const double inv = 1.0 / double(total);
    for (std::size_t j = 0; j < out.s_out.size(); ++j) {
        out.s_out[j] *= inv;
        out.s_sq[j] *= inv;
    }
    out.dc *= inv;
    out.mean *= inv;
    out.variance = std::max(0.0, second * inv - out.mean * out.mean);
    out.n_segments = total;
    return out;
}

struct NoiseFitOptions {
    double omega_f = 0.0;       // signal frequency to guard; 0 for none
    int guard_bins = 3;         // excluded on each side of omega_f and its harmonics
    double omega_min = 0.0;     // bins below are left out (DC is never used)
    double omega_max = std::numeric_limits<double>::infinity();
    int irls_iterations = 4;
};

namespace detail {

// Weighted least squares for (amplitude, floor) at fixed width.
inline double fit_linear_part(const std::vector<double>& w, const std::vector<double>& s,
                              const std::vector<double>& wt, double width, double& amp, double& floor) {
    double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double l = width / (width * width + w[i] * w[i]);
        a11 += wt[i] * l * l;
        a12 += wt[i] * l;
        a22 += wt[i];
        b1 += wt[i] * l * s[i];
        b2 += wt[i] * s[i];
    }
    const double det = a11 * a22 - a12 * a12;
    if (!(std::abs(det) > 0.0)) {
        amp = 0.0;
        floor = b2 / a22;
    } else {
        amp = (b1 * a22 - b2 * a12) / det;
        floor = (a11 * b2 - a12 * b1) / det;
    }
    double chi = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double r = s[i] - (amp * width / (width * width + w[i] * w[i]) + floor);
        chi += wt[i] * r * r;
    }
    return chi;
}

inline bool in_guard_band(double w, double delta_omega, const NoiseFitOptions& o) {
    if (!(o.omega_f > 0.0)) return false;
    const double h = std::round(w / o.omega_f);
    if (h < 1.0) return false;
    return std::abs(w - h * o.omega_f) <= (double(o.guard_bins) + 0.5) * delta_omega;
}

} // namespace detail

/// Fits the Lorentzian-plus-floor background. The width is found by a
/// golden-section search in log width with the amplitude and floor solved
/// linearly; weights are refreshed from the model (periodogram scatter is
/// proportional to its mean).
inline NoiseFit fit_noise(const SpectrumEstimate& spec, const NoiseFitOptions& o = {}) {
    std::vector<double> w, s;
    for (std::size_t j = 0; j < spec.freqs.size(); ++j) {
        const double f = spec.freqs[j];
        if (f < o.omega_min || f > o.omega_max || detail::in_guard_band(f, spec.delta_omega, o)) continue;
        w.push_back(f);
        s.push_back(spec.s_out[j]);
    }
    NoiseFit fit;
    fit.n_points = long(w.size());
    if (w.size() < 4) throw ConvergenceError("spectra", "too few bins for the noise fit", 0.0);
    std::vector<double> wt(w.size(), 1.0);
    const double lo0 = std::log(0.5 * spec.delta_omega), hi0 = std::log(std::max(10.0, w.back()));
    double width = 0.0, amp = 0.0, floor = 1.0, chi = 0.0;
    for (int it = 0; it < std::max(1, o.irls_iterations); ++it) {
        auto cost = [&](double lw) {
            double a, f;
            return detail::fit_linear_part(w, s, wt, std::exp(lw), a, f);
        };
        // Coarse scan first since the cost can have several local minima.
        const int n_scan = 60;
        double best = lo0, best_c = std::numeric_limits<double>::infinity();
        for (int k = 0; k <= n_scan; ++k) {
            const double lw = lo0 + (hi0 - lo0) * k / n_scan;
            const double c = cost(lw);
            if (c < best_c) { best_c = c; best = lw; }
        }
        const double step = (hi0 - lo0) / n_scan;
        double a = best - step, b = best + step;
        const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
        double x1 = b - gr * (b - a), x2 = a + gr * (b - a), f1 = cost(x1), f2 = cost(x2);
        for (int k = 0; k < 80 && b - a > 1e-10; ++k) {
            if (f1 < f2) { b = x2; x2 = x1; f2 = f1; x1 = b - gr * (b - a); f1 = cost(x1); }
            else { a = x1; x1 = x2; f1 = f2; x2 = a + gr * (b - a); f2 = cost(x2); }
        }
        width = std::exp(0.5 * (a + b));
        chi = detail::fit_linear_part(w, s, wt, width, amp, floor);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double m = amp * width / (width * width + w[i] * w[i]) + floor;
            wt[i] = m > 0.0 ? 1.0 / (m * m) : 0.0;
        }
    }
    fit.amplitude = amp;
    fit.width = width;
    fit.floor = floor;
    chi = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double m = fit(w[i]);
        chi += (s[i] - m) * (s[i] - m) / (m * m);
    }
    fit.chi2_reduced = chi * double(std::max(1L, spec.n_segments)) / double(w.size() - 3);
    fit.converged = std::isfinite(chi) && width > 0.0 && fit.floor > 0.0;
    if (!fit.converged)
        throw ConvergenceError("spectra", "noise fit did not converge", fit.chi2_reduced);
    return fit;
}

/// Two-sided integral of S - 1 over d omega / 2 pi from the estimated bins.
/// The DC bin carries the mean and is replaced by the fitted background.
inline double excess_power(const SpectrumEstimate& spec, const NoiseFit& fit, const NoiseFitOptions& guard = {}) {
    double sum = fit(0.0) - 1.0;
    for (std::size_t j = 0; j < spec.freqs.size(); ++j) {
        const double v = detail::in_guard_band(spec.freqs[j], spec.delta_omega, guard) ? fit(spec.freqs[j])
                                                                                        : spec.s_out[j];
        sum += 2.0 * (v - 1.0);
    }
    return sum * spec.delta_omega / (2.0 * std::numbers::pi);
}

struct PeakMeasurement {
    double omega_f = 0.0;
    std::size_t bin = 0;
    double s_out = 0.0;       // averaged spectrum at the signal bin
    double s_noise = 0.0;     // fitted background there
    double s_signal = 0.0;
    double snr_measured = 0.0;
    double s_signal_err = 0.0;   // background / sqrt(n_segments)
    double z = 0.0;              // s_signal / s_signal_err
    double i_omega = 0.0;        // modulation amplitude from the peak height, 0 if negative
    NoiseFit noise_fit;
};

inline PeakMeasurement extract_peak(const SpectrumEstimate& spec, double omega_f, NoiseFitOptions o = {}) {
    const auto bin = spec.bin_of(omega_f);
    if (!bin) throw Error("spectra", "off-grid", "omega_f is not within half a bin of the frequency grid");
    o.omega_f = spec.freqs[*bin];
    PeakMeasurement m;
    m.omega_f = o.omega_f;
    m.bin = *bin;
    m.noise_fit = fit_noise(spec, o);
    m.s_out = spec.s_out[*bin];
    m.s_noise = m.noise_fit(o.omega_f);
    m.s_signal = m.s_out - m.s_noise;
    m.snr_measured = m.s_out / m.s_noise;
    m.s_signal_err = m.s_noise / std::sqrt(double(std::max(1L, spec.n_segments)));
    m.z = m.s_signal / m.s_signal_err;
    m.i_omega = m.s_signal > 0.0 ? std::sqrt(2.0 * spec.delta_omega * m.s_signal / std::numbers::pi) : 0.0;
    return m;
}

/// Power gain kappa (I / g1)^2 with I from the peak height.
inline double measured_gain(const PeakMeasurement& m, double g1, double kappa = 1.0) {
    if (!(g1 > 0.0)) throw Error("spectra", "invalid-force", "g1 must be > 0");
    return kappa * m.i_omega * m.i_omega / (g1 * g1);
}

enum class Segmentation { single_trajectory, independent_seeds };

struct SpectrumRun {
    HilbertDims dims{25, 12};
    double delta_omega = 1e-3;
    double dt_target = 1e-3;
    long n_segments = 100;
    double burn_in = 100.0;
    double omega_max = 2.0;
    Segmentation mode = Segmentation::single_trajectory;
    std::uint64_t seed = 1;
    TrajectoryOptions traj = [] {
        TrajectoryOptions t;
        t.backend = Backend::sse;
        t.keep_samples = false;
        return t;
    }();
    // Sees every photocurrent sample, burn-in included (single-trajectory
    // mode only), e.g. to detect switches in the same run.
    std::function<void(long, double)> observer;
};

struct SpectrumSimulation {
    SpectrumEstimate spectrum;
    double dt = 0.0;
    double leakage_max = 0.0;
    double leakage_smoothed_max = 0.0;
    bool leakage_flagged = false;
};

/// Simulates the photocurrent and averages its spectrum. In
/// single-trajectory mode one run after the burn-in is cut into
/// consecutive segments; otherwise segment k comes from seed + k.
inline SpectrumSimulation simulate_spectrum(const SystemParams& p, const ForceParams& force, const SpectrumRun& run) {
    if (run.n_segments < 1) throw Error("spectra", "too-short", "n_segments must be >= 1");
    const SegmentGrid g = segment_grid(run.delta_omega, run.dt_target);
    SpectrumSimulation out;
    out.dt = g.dt;
    SpectrumAccumulator acc(g.samples, g.dt, run.omega_max);
    const long burn = std::lround(run.burn_in / g.dt);
    TrajectoryOptions topt = run.traj;
    topt.keep_samples = false;
    auto take = [&](const TrajectoryRecord& r) {
        out.leakage_max = std::max(out.leakage_max, r.leakage_max);
        out.leakage_smoothed_max = std::max(out.leakage_smoothed_max, r.leakage_smoothed_max);
        out.leakage_flagged = out.leakage_flagged || r.leakage_flagged;
    };
    auto sink = [&](long k, double i_c, double) {
        if (run.observer && run.mode == Segmentation::single_trajectory) run.observer(k, i_c);
        if (k >= burn) acc.push(i_c);
    };
    if (run.mode == Segmentation::single_trajectory) {
        const double duration = double(burn + g.samples * run.n_segments) * g.dt;
        take(simulate_trajectory_stream(p, force, run.dims, duration, g.dt, run.seed, topt, sink));
    } else {
        const double duration = double(burn + g.samples) * g.dt;
        for (long s = 0; s < run.n_segments; ++s)
            take(simulate_trajectory_stream(p, force, run.dims, duration, g.dt, run.seed + std::uint64_t(s), topt,
                                            sink));
    }
    out.spectrum = acc.estimate();
    return out;
}

/// Spectrum of a stored record, cut into segments of the requested
/// resolution after dropping `burn_in`. The record's dt must give an
/// integer segment length.
inline SpectrumEstimate record_spectrum(const TrajectoryRecord& rec, double delta_omega, double burn_in,
                                        double omega_max = 2.0) {
    const double n_real = 2.0 * std::numbers::pi / (delta_omega * rec.dt);
    const long n = std::lround(n_real);
    if (std::abs(n_real - double(n)) > 1e-6 * n_real)
        throw Error("spectra", "off-grid", "record dt does not divide the segment duration");
    SpectrumAccumulator acc(n, rec.dt, omega_max);
    const long burn = std::lround(burn_in / rec.dt);
    for (std::size_t k = std::size_t(std::max(0L, burn)); k < rec.i_c.size(); ++k) acc.push(rec.i_c[k]);
    return acc.estimate();
}

} // namespace oms
