#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "oms/error.hpp"
#include "oms/hilbert.hpp"
#include "oms/meanfield.hpp"
#include "oms/params.hpp"
#include "oms/trajectory.hpp"

namespace oms {

struct SwitchEvent {
    double time = 0.0;
    int state = 0;   // branch entered: +1 upper, -1 lower
};

struct SwitchEvents {
    std::vector<SwitchEvent> events;
    std::vector<double> tau_plus;    // completed residences in the upper branch
    std::vector<double> tau_minus;
    int initial_state = 0;           // 0 while the signal never left the band
    double time_upper = 0.0;         // classified time in each branch
    double time_lower = 0.0;
    long merged = 0;                 // event pairs removed by the dead time
};

/// Hysteresis state machine on a filtered signal: the branch becomes upper
/// only above level_hi and lower only below level_lo. An event closer than
/// dead_time to the previous one undoes that event instead (a back-and-forth
/// flicker), which keeps labels strictly alternating.
class SchmittDetector {
public:
    SchmittDetector(double level_lo, double level_hi, double dead_time, double dt, double t0 = 0.0)
        : lo_(level_lo), hi_(level_hi), dead_(dead_time), dt_(dt), t0_(t0) {
        if (!(level_lo < level_hi)) throw Error("switching", "invalid-levels", "level_lo must be below level_hi");
        if (!(dead_time >= 0.0)) throw Error("switching", "invalid-dead-time", "dead_time must be >= 0");
    }

    void add(double y) {
        const double t = t0_ + double(k_) * dt_;
        ++k_;
        int target = state_;
        if (y > hi_) target = 1;
        else if (y < lo_) target = -1;
        if (state_ == 0) {
            state_ = target;
            out_.initial_state = target;
        } else if (target != state_) {
            if (!out_.events.empty() && t - out_.events.back().time < dead_) {
                out_.events.pop_back();
                ++out_.merged;
            } else {
                out_.events.push_back({t, target});
            }
            state_ = target;
        }
        if (state_ == 1) out_.time_upper += dt_;
        else if (state_ == -1) out_.time_lower += dt_;
    }

    int state() const { return state_; }

    SwitchEvents result() const {
        SwitchEvents r = out_;
        for (std::size_t e = 1; e < r.events.size(); ++e) {
            const double tau = r.events[e].time - r.events[e - 1].time;
            (r.events[e - 1].state == 1 ? r.tau_plus : r.tau_minus).push_back(tau);
        }
        return r;
    }

private:
    double lo_, hi_, dead_, dt_, t0_;
    long k_ = 0;
    int state_ = 0;
    SwitchEvents out_;
};

inline SwitchEvents detect_switches(const std::vector<double>& filtered, double dt, double level_lo, double level_hi,
                                    double dead_time) {
    SchmittDetector det(level_lo, level_hi, dead_time, dt);
    for (double y : filtered) det.add(y);
    return det.result();
}

struct RateEstimate {
    double w = 0.0;
    double w_err = 0.0;
    long n = 0;               // residences used (tau >= exclude_below)
    double exclude_below = 0.0;
    double mean_tau = 0.0;
};

struct ResidenceHistogram {
    std::vector<double> bin_center;
    std::vector<long> count;
    std::vector<double> poisson_err;
    double bin_width = 0.0;
};

inline ResidenceHistogram residence_histogram(const std::vector<double>& tau, double bin_width) {
    ResidenceHistogram h;
    h.bin_width = bin_width;
    if (tau.empty() || !(bin_width > 0.0)) return h;
    const double top = *std::max_element(tau.begin(), tau.end());
    const auto nb = std::size_t(std::floor(top / bin_width)) + 1;
    h.count.assign(nb, 0);
    for (double t : tau) ++h.count[std::min(nb - 1, std::size_t(t / bin_width))];
    for (std::size_t b = 0; b < nb; ++b) {
        h.bin_center.push_back((double(b) + 0.5) * bin_width);
        h.poisson_err.push_back(std::sqrt(double(h.count[b])));
    }
    return h;
}

/// Exponential maximum-likelihood rate of residences at or above
/// exclude_below (the first histogram bin is dropped); for a truncated
/// exponential the MLE solves mean(tau) = exclude_below + 1 / W.
inline RateEstimate estimate_rate(const std::vector<double>& tau, double exclude_below = 0.0, long min_events = 1) {
    RateEstimate r;
    r.exclude_below = exclude_below;
    double sum = 0.0;
    for (double t : tau)
        if (t >= exclude_below) {
            sum += t;
            ++r.n;
        }
    if (r.n < std::max(1L, min_events))
        throw Error("switching", "insufficient-statistics",
                    "only " + std::to_string(r.n) + " residences (of " + std::to_string(tau.size()) +
                        ") at or above the exclusion cut; need " + std::to_string(std::max(1L, min_events)));
    r.mean_tau = sum / double(r.n);
    const double excess = r.mean_tau - exclude_below;
    if (!(excess > 0.0))
        throw Error("switching", "insufficient-statistics", "residence times do not exceed the exclusion cut");
    r.w = 1.0 / excess;
    r.w_err = r.w / std::sqrt(double(r.n));
    return r;
}

/// Asymptotic Kolmogorov distribution tail Q(lambda) = P(K > lambda), with
/// the small-sample correction lambda = (sqrt(n) + 0.12 + 0.11/sqrt(n)) D.
inline double kolmogorov_pvalue(double d_stat, long n) {
    if (n <= 0) return 1.0;
    const double sn = std::sqrt(double(n));
    const double lambda = (sn + 0.12 + 0.11 / sn) * d_stat;
    if (lambda < 0.2) return 1.0;
    double sum = 0.0, sign = 1.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
        sum += term;
        if (std::abs(term) < 1e-16) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
    long n = 0;
};

/// One-sample Kolmogorov-Smirnov test of the residences at or above the cut
/// against the shifted exponential with the fitted rate.
inline KsResult ks_exponential(const std::vector<double>& tau, double exclude_below, double rate) {
    std::vector<double> x;
    for (double t : tau)
        if (t >= exclude_below) x.push_back(t - exclude_below);
    std::sort(x.begin(), x.end());
    KsResult r;
    r.n = long(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = 1.0 - std::exp(-rate * x[i]);
        r.statistic = std::max({r.statistic, double(i + 1) / double(x.size()) - f, f - double(i) / double(x.size())});
    }
    r.p_value = kolmogorov_pvalue(r.statistic, r.n);
    return r;
}

struct SwitchingStatistics {
    std::vector<double> tau_plus, tau_minus;
    RateEstimate w_plus;    // into the upper branch, from tau_minus
    RateEstimate w_minus;   // into the lower branch, from tau_plus
    double w_bar = 0.0;
    double p_ss_plus = 0.0, p_ss_minus = 0.0;
    double p_ss_plus_err = 0.0;
    double time_fraction_plus = 0.0;
    double dead_time = 0.0;
    long n_events = 0;
};

inline SwitchingStatistics switching_statistics(const SwitchEvents& ev, double exclude_below, double dead_time,
                                                long min_events = 20) {
    SwitchingStatistics s;
    s.tau_plus = ev.tau_plus;
    s.tau_minus = ev.tau_minus;
    s.dead_time = dead_time;
    s.n_events = long(ev.events.size());
    s.w_plus = estimate_rate(ev.tau_minus, exclude_below, min_events);
    s.w_minus = estimate_rate(ev.tau_plus, exclude_below, min_events);
    s.w_bar = s.w_plus.w + s.w_minus.w;
    s.p_ss_plus = s.w_plus.w / s.w_bar;
    s.p_ss_minus = 1.0 - s.p_ss_plus;
    // First-order propagation of the two independent rate errors.
    const double dp_dwp = s.w_minus.w / (s.w_bar * s.w_bar), dp_dwm = -s.w_plus.w / (s.w_bar * s.w_bar);
    s.p_ss_plus_err = std::hypot(dp_dwp * s.w_plus.w_err, dp_dwm * s.w_minus.w_err);
    const double tot = ev.time_upper + ev.time_lower;
    s.time_fraction_plus = tot > 0.0 ? ev.time_upper / tot : 0.0;
    return s;
}

/// Settings of the simulate-filter-detect pipeline.
struct SwitchingRun {
    HilbertDims dims{25, 12};
    double dt = 1e-3;
    double duration = 5000.0;
    double burn_in = 50.0;        // discarded before detection starts
    double tau_f = 5.0;
    double threshold_lo = 0.3;    // fractions of the branch separation
    double threshold_hi = 0.7;
    double dead_time = 10.0;      // default 2 tau_f
    double exclude_below = -1.0;  // < 0: use dead_time
    long min_events = 20;
    std::uint64_t seed = 1;
    TrajectoryOptions traj;

    double exclusion() const { return exclude_below >= 0.0 ? exclude_below : dead_time; }
};

/// Photocurrent thresholds sqrt(kappa) [X- + f (X+ - X-)] from the stable
/// mean-field branches.
inline std::pair<double, double> switching_levels(const SystemParams& p, double f_lo, double f_hi) {
    const auto br = solve_branches(p);
    if (br.size() != 3)
        throw Error("switching", "not-bistable",
                    "no bistability at delta0 = " + std::to_string(p.delta0) + "; thresholds undefined");
    const double xm = br.front().x_bar, xp = br.back().x_bar, rk = std::sqrt(p.kappa);
    return {rk * (xm + f_lo * (xp - xm)), rk * (xm + f_hi * (xp - xm))};
}

struct SwitchingMeasurement {
    SwitchEvents events;
    SwitchingStatistics stats;
    bool stats_ok = false;
    std::string stats_error;
    TrajectoryRecord record;   // metadata; samples are not kept
    double level_lo = 0.0, level_hi = 0.0;
};

inline SwitchingMeasurement measure_switching(const SystemParams& p, const ForceParams& force, const SwitchingRun& run) {
    SwitchingMeasurement m;
    std::tie(m.level_lo, m.level_hi) = switching_levels(p, run.threshold_lo, run.threshold_hi);
    LowpassFilter filter(run.tau_f, run.dt);
    const long burn = std::lround(run.burn_in / run.dt);
    SchmittDetector det(m.level_lo, m.level_hi, run.dead_time, run.dt, double(burn) * run.dt);
    TrajectoryOptions o = run.traj;
    o.keep_samples = false;
    m.record = simulate_trajectory_stream(p, force, run.dims, run.burn_in + run.duration, run.dt, run.seed, o,
                                          [&](long k, double i, double) {
                                              const double y = filter(i);
                                              if (k >= burn) det.add(y);
                                          });
    m.events = det.result();
    try {
        m.stats = switching_statistics(m.events, run.exclusion(), run.dead_time, run.min_events);
        m.stats_ok = true;
    } catch (const Error& e) {
        m.stats_error = e.what();
        m.stats.tau_plus = m.events.tau_plus;
        m.stats.tau_minus = m.events.tau_minus;
        m.stats.n_events = long(m.events.events.size());
    }
    return m;
}

struct RateRow {
    double delta0 = 0.0;
    bool ok = false;
    std::string error;
    double w_plus = 0.0, w_plus_err = 0.0, w_minus = 0.0, w_minus_err = 0.0;
    long n_events = 0;
};

inline std::vector<RateRow> rates_vs_detuning(const SystemParams& p, const std::vector<double>& delta0_grid,
                                              const SwitchingRun& run) {
    std::vector<RateRow> rows;
    for (double d : delta0_grid) {
        SystemParams q = p;
        q.delta0 = d;
        RateRow row;
        row.delta0 = d;
        try {
            const auto m = measure_switching(q, {}, run);
            row.n_events = m.stats.n_events;
            if (!m.stats_ok) throw Error("switching", "insufficient-statistics", m.stats_error);
            row.w_plus = m.stats.w_plus.w;
            row.w_plus_err = m.stats.w_plus.w_err;
            row.w_minus = m.stats.w_minus.w;
            row.w_minus_err = m.stats.w_minus.w_err;
            row.ok = true;
        } catch (const Error& e) {
            row.error = std::string(e.module()) + "/" + e.code() + ": " + e.what();
        }
        rows.push_back(row);
    }
    return rows;
}

struct RateModulation {
    double w1_plus = 0.0, w1_minus = 0.0;
    double w1_plus_err = 0.0, w1_minus_err = 0.0;
    double dw_plus_ddelta = 0.0, dw_minus_ddelta = 0.0;
    double delta_step = 0.0;
};

/// W^1 = (2 g0 g1 / omega_m) dW^0/dDelta0 from two measured rate tables.
inline RateModulation rate_modulation_from_rows(const SystemParams& p, const ForceParams& force, const RateRow& lo,
                                                const RateRow& hi) {
    if (!lo.ok || !hi.ok) throw Error("switching", "insufficient-statistics", "rate sweep point failed");
    RateModulation r;
    const double h2 = hi.delta0 - lo.delta0;
    r.delta_step = 0.5 * h2;
    const double k = 2.0 * p.g0 * force.g1 / p.omega_m;
    r.dw_plus_ddelta = (hi.w_plus - lo.w_plus) / h2;
    r.dw_minus_ddelta = (hi.w_minus - lo.w_minus) / h2;
    r.w1_plus = k * r.dw_plus_ddelta;
    r.w1_minus = k * r.dw_minus_ddelta;
    r.w1_plus_err = std::abs(k) * std::hypot(hi.w_plus_err, lo.w_plus_err) / h2;
    r.w1_minus_err = std::abs(k) * std::hypot(hi.w_minus_err, lo.w_minus_err) / h2;
    return r;
}

inline RateModulation rate_modulation(const SystemParams& p, const ForceParams& force, const SwitchingRun& run,
                                      double delta_step = 0.025) {
    if (!(delta_step > 0.0)) throw Error("switching", "invalid-step", "delta_step must be > 0");
    if (force.g1 == 0.0) {
        RateModulation r;
        r.delta_step = delta_step;
        return r;
    }
    const auto rows = rates_vs_detuning(p, {p.delta0 - delta_step, p.delta0 + delta_step}, run);
    return rate_modulation_from_rows(p, force, rows[0], rows[1]);
}

} // namespace oms
