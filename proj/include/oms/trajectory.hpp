#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "oms/error.hpp"
#include "oms/hilbert.hpp"
#include "oms/liouvillian.hpp"
#include "oms/meanfield.hpp"
#include "oms/params.hpp"
#include "oms/rng.hpp"

namespace oms {

/// Conditional state representation. `sme` integrates the density matrix
/// conditioned on the photocurrent only. `sse` integrates a pure state that
/// also unravels the mechanical baths by unrecorded state diffusion;
/// averaging that out gives the SME, so the photocurrent has the same law
/// at a fraction of the cost. x_cond is then the pure-state mean.
enum class Backend { sme, sse };

/// `split` propagates the block-diagonal Hamiltonian exactly and takes an
/// Euler-Maruyama step for the rest; `euler` is plain Euler-Maruyama.
enum class Scheme { split, euler };

inline std::string to_string(Backend b) { return b == Backend::sme ? "sme" : "sse"; }
inline std::string to_string(Scheme s) { return s == Scheme::split ? "split" : "euler"; }

struct TrajectoryOptions {
    Backend backend = Backend::sme;
    Scheme scheme = Scheme::split;
    // Each Wiener increment is the sum of `substeps` finer ones, so a run at
    // (dt, substeps = 2) and one at (dt / 2, substeps = 1) share a path.
    int substeps = 1;
    bool keep_samples = true;
    bool keep_x = true;
    bool keep_final = false;   // store the state after the last step
    double leakage_flag = 1e-3;
    double leakage_error = 1e-2;
    // Leakage is smoothed over this time before the error test, so a brief
    // excursion of a pure SSE state does not abort a run.
    double leakage_window = 10.0;
    // Initial state; by default the lower mean-field branch as a coherent
    // product state.
    std::optional<QuantumState> initial_rho;
    std::optional<DenseVec> initial_psi;
};

struct TrajectoryRecord {
    SystemParams params;
    ForceParams force;
    HilbertDims dims;
    double dt = 0.0;
    double duration = 0.0;
    std::uint64_t seed = 0;
    std::string backend, scheme;
    std::vector<double> i_c;      // sqrt(kappa) <X>_c + dW_k / dt
    std::vector<double> x_cond;   // <X>_c at the start of each step
    long n_samples = 0;
    double leakage_max = 0.0;        // largest instantaneous top-level population
    double leakage_smoothed_max = 0.0;
    double leakage_smoothed_optical = 0.0;
    double leakage_smoothed_mechanical = 0.0;
    bool leakage_flagged = false;
    double dw_mean = 0.0;            // sample moments of the optical increments
    double dw_var = 0.0;
    double trace_deviation_max = 0.0;  // max |Tr - 1| before renormalization
    DenseMat final_rho;   // sme, with keep_final
    DenseVec final_psi;   // sse, with keep_final
};

using SampleSink = std::function<void(long k, double i_c, double x_cond)>;

inline double default_trajectory_dt() { return 1e-3; }

namespace detail {

inline void check_trajectory_args(const SystemParams& p, const ForceParams& f, const HilbertDims& dims,
                                  double duration, double dt) {
    p.validate();
    f.validate();
    dims.validate();
    if (!(dt > 0.0)) throw Error("trajectory", "step-size", "dt must be > 0");
    if (!(duration > 0.0)) throw Error("trajectory", "invalid-duration", "duration must be > 0");
}

} // namespace detail

/// Integrates one conditional trajectory and streams photocurrent samples
/// to `sink`; returns the record metadata (and the samples when
/// `keep_samples` is set).
inline TrajectoryRecord simulate_trajectory_stream(const SystemParams& params, const ForceParams& force,
                                                   const HilbertDims& dims, double duration, double dt,
                                                   std::uint64_t seed, const TrajectoryOptions& opt,
                                                   const SampleSink& sink) {
    detail::check_trajectory_args(params, force, dims, duration, dt);
    TrajectoryRecord rec;
    rec.params = params;
    rec.force = force;
    rec.dims = dims;
    rec.dt = dt;
    rec.seed = seed;
    rec.backend = to_string(opt.backend);
    rec.scheme = to_string(opt.scheme);
    const long n = std::lround(duration / dt);
    rec.n_samples = n;
    rec.duration = double(n) * dt;
    if (opt.keep_samples) {
        rec.i_c.reserve(std::size_t(n));
        if (opt.keep_x) rec.x_cond.reserve(std::size_t(n));
    }

    const Liouvillian L(dims, params);
    const bool split = opt.scheme == Scheme::split;
    std::optional<CoherentPropagator> u0;
    if (split) u0.emplace(dims, params, dt);
    const WienerSource wiener(seed, opt.substeps);
    const double rk = std::sqrt(params.kappa);
    const int d = dims.size();
    const auto lower = solve_branches(params).front();

    double smooth_c = 0.0, smooth_m = 0.0;
    const double alpha = std::min(1.0, dt / std::max(opt.leakage_window, dt));
    double dw_sum = 0.0, dw_sq = 0.0;
    auto monitor = [&](const Leakage& l, long k) {
        const double v = l.max();
        rec.leakage_max = std::max(rec.leakage_max, v);
        smooth_c = k == 0 ? l.optical : smooth_c + alpha * (l.optical - smooth_c);
        smooth_m = k == 0 ? l.mechanical : smooth_m + alpha * (l.mechanical - smooth_m);
        rec.leakage_smoothed_optical = std::max(rec.leakage_smoothed_optical, smooth_c);
        rec.leakage_smoothed_mechanical = std::max(rec.leakage_smoothed_mechanical, smooth_m);
        const double smooth = std::max(smooth_c, smooth_m);
        rec.leakage_smoothed_max = std::max(rec.leakage_smoothed_max, smooth);
        if (v > opt.leakage_flag) rec.leakage_flagged = true;
        if (smooth > opt.leakage_error)
            throw Error("trajectory", "truncation",
                        std::string(smooth_c >= smooth_m ? "optical" : "mechanical") +
                            " top Fock level population " + std::to_string(smooth) + " at t = " +
                            std::to_string(double(k) * dt) + " exceeds " + std::to_string(opt.leakage_error) +
                            "; increase n_cav / n_mech");
    };
    auto emit = [&](long k, double x, double dw) {
        const double i = rk * x + dw / dt;
        dw_sum += dw;
        dw_sq += dw * dw;
        if (opt.keep_samples) {
            rec.i_c.push_back(i);
            if (opt.keep_x) rec.x_cond.push_back(x);
        }
        if (sink) sink(k, i, x);
    };
    auto collapse = [&](double v, long k) {
        if (!(v >= 1e-6) || !std::isfinite(v))
            throw Error("trajectory", "integration-failure",
                        "state norm collapsed to " + std::to_string(v) + " at t = " + std::to_string(double(k) * dt));
    };

    if (opt.backend == Backend::sme) {
        DenseMat rho = opt.initial_rho ? opt.initial_rho->rho : QuantumState::coherent(dims, lower.a_bar, lower.b_bar).rho;
        if (rho.rows() != d) throw Error("trajectory", "shape", "initial state does not match dims");
        DenseMat next(d, d), scratch(split ? d : 0, split ? d : 0);
        for (long k = 0; k < n; ++k) {
            const double dw = wiener.increment(0, std::uint64_t(k), dt);
            const double f = force.value(double(k) * dt);
            const auto info = L.sme_step(rho.data(), next.data(), dt, dw, f, !split);
            collapse(info.raw_trace, k);
            rec.trace_deviation_max = std::max(rec.trace_deviation_max, std::abs(info.raw_trace - 1.0));
            if (split) u0->conjugate(next.data(), scratch.data());
            rho.swap(next);
            monitor(leakage_from_diagonal(dims, rho.data()), k);
            emit(k, info.x, dw);
        }
        if (opt.keep_final) rec.final_rho = rho;
    } else {
        DenseVec psi = opt.initial_psi ? *opt.initial_psi : QuantumState::coherent_vector(dims, lower.a_bar, lower.b_bar);
        if (psi.size() != d) throw Error("trajectory", "shape", "initial state does not match dims");
        DenseVec next(d);
        const bool thermal = params.n_th > 0.0;
        for (long k = 0; k < n; ++k) {
            const double dw = wiener.increment(0, std::uint64_t(k), dt);
            const cplx xi1 = cplx(wiener.increment(1, std::uint64_t(k), dt),
                                  wiener.increment(2, std::uint64_t(k), dt)) * std::numbers::sqrt2 * 0.5;
            const cplx xi2 = thermal ? cplx(wiener.increment(3, std::uint64_t(k), dt),
                                            wiener.increment(4, std::uint64_t(k), dt)) * std::numbers::sqrt2 * 0.5
                                     : cplx(0.0);
            const double f = force.value(double(k) * dt);
            const auto info = L.sse_step(psi.data(), next.data(), dt, dw, xi1, xi2, f, !split);
            collapse(info.norm, k);
            rec.trace_deviation_max = std::max(rec.trace_deviation_max, std::abs(info.norm * info.norm - 1.0));
            if (split) u0->apply(next.data());
            psi.swap(next);
            monitor(leakage_from_vector(dims, psi.data()), k);
            emit(k, info.x, dw);
        }
        if (opt.keep_final) rec.final_psi = psi;
    }
    if (n > 0) {
        rec.dw_mean = dw_sum / double(n);
        rec.dw_var = dw_sq / double(n) - rec.dw_mean * rec.dw_mean;
    }
    return rec;
}

inline TrajectoryRecord simulate_trajectory(const SystemParams& params, const ForceParams& force,
                                            const HilbertDims& dims, double duration, double dt, std::uint64_t seed,
                                            const TrajectoryOptions& opt = {}) {
    TrajectoryOptions o = opt;
    o.keep_samples = true;
    return simulate_trajectory_stream(params, force, dims, duration, dt, seed, o, {});
}

/// Single-pole low-pass filter y_{k+1} = y_k + (dt / tau_f)(I_k - y_k)
/// from y_0 = `initial`; each call returns y_{k+1}. Group delay at low
/// frequency is tau_f.
class LowpassFilter {
public:
    LowpassFilter(double tau_f, double dt, double initial = 0.0) : alpha_(dt / tau_f), y_(initial) {
        if (!(tau_f > dt)) throw Error("trajectory", "invalid-filter", "tau_f must exceed dt");
    }

    double operator()(double x) { return y_ += alpha_ * (x - y_); }
    double value() const { return y_; }

private:
    double alpha_;
    double y_;
};

inline std::vector<double> lowpass_filter(const std::vector<double>& samples, double dt, double tau_f) {
    LowpassFilter f(tau_f, dt);
    std::vector<double> out;
    out.reserve(samples.size());
    for (double x : samples) out.push_back(f(x));
    return out;
}

inline std::vector<double> lowpass_filter(const TrajectoryRecord& rec, double tau_f) {
    return lowpass_filter(rec.i_c, rec.dt, tau_f);
}

struct Histogram {
    double lo = 0.0, hi = 0.0, width = 0.0;
    std::vector<double> centers;
    std::vector<double> density;   // sums to 1 / width
    std::vector<long> counts;
    long total = 0;

    /// Local maxima of the density after a (2h+1)-bin moving average.
    std::vector<double> peaks(int h = 2, double min_fraction = 0.05) const {
        const int n = int(density.size());
        std::vector<double> s(std::size_t(n), 0.0);
        for (int i = 0; i < n; ++i) {
            int c = 0;
            for (int o = -h; o <= h; ++o)
                if (i + o >= 0 && i + o < n) {
                    s[std::size_t(i)] += density[std::size_t(i + o)];
                    ++c;
                }
            s[std::size_t(i)] /= c;
        }
        const double top = n ? *std::max_element(s.begin(), s.end()) : 0.0;
        std::vector<double> out;
        for (int i = 0; i < n; ++i) {
            const double v = s[std::size_t(i)];
            if (v < min_fraction * top) continue;
            bool is_max = true;
            for (int o = -h - 1; o <= h + 1 && is_max; ++o) {
                if (o == 0 || i + o < 0 || i + o >= n) continue;
                if (s[std::size_t(i + o)] > v || (o < 0 && s[std::size_t(i + o)] == v)) is_max = false;
            }
            if (is_max) out.push_back(centers[std::size_t(i)]);
        }
        return out;
    }
};

/// Streaming fixed-range histogram.
class HistogramAccumulator {
public:
    HistogramAccumulator(double lo, double hi, int n_bins) : lo_(lo), hi_(hi), counts_(std::size_t(std::max(1, n_bins)), 0) {
        if (!(hi > lo) || n_bins < 1) throw Error("trajectory", "invalid-histogram", "need hi > lo and n_bins >= 1");
    }

    void add(double x) {
        ++total_;
        if (!(x >= lo_) || !(x < hi_)) return;
        const auto b = std::size_t((x - lo_) / (hi_ - lo_) * double(counts_.size()));
        ++counts_[std::min(b, counts_.size() - 1)];
    }

    Histogram result() const {
        Histogram h;
        h.lo = lo_;
        h.hi = hi_;
        h.width = (hi_ - lo_) / double(counts_.size());
        h.total = total_;
        for (std::size_t b = 0; b < counts_.size(); ++b) {
            h.centers.push_back(lo_ + (double(b) + 0.5) * h.width);
            h.counts.push_back(counts_[b]);
            h.density.push_back(total_ ? double(counts_[b]) / (double(total_) * h.width) : 0.0);
        }
        return h;
    }

private:
    double lo_, hi_;
    std::vector<long> counts_;
    long total_ = 0;
};

/// Normalized histogram over the sample range (density integrates to 1).
inline Histogram histogram_photocurrent(const std::vector<double>& filtered, int n_bins) {
    if (filtered.empty()) throw Error("trajectory", "empty-series", "cannot histogram an empty series");
    if (n_bins < 1) throw Error("trajectory", "invalid-histogram", "n_bins must be >= 1");
    auto [mn, mx] = std::minmax_element(filtered.begin(), filtered.end());
    double lo = *mn, hi = *mx;
    if (hi <= lo) hi = lo + 1.0;
    hi = std::nextafter(hi, INFINITY);
    HistogramAccumulator acc(lo, hi, n_bins);
    for (double x : filtered) acc.add(x);
    return acc.result();
}

} // namespace oms
