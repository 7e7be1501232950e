#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "oms/error.hpp"
#include "oms/hilbert.hpp"
#include "oms/io.hpp"
#include "oms/params.hpp"
#include "oms/spectra.hpp"
#include "oms/switching.hpp"
#include "oms/trajectory.hpp"

namespace oms {

inline constexpr const char* version_string = "1.0.0";

/// Everything a CLI run needs. Rates are in units of kappa.
struct RunConfig {
    SystemParams params;
    ForceParams force;
    HilbertDims dims{25, 12};
    double dt = 1e-3;        // target; trajectory runs use the segment-grid step
    double duration = 5000.0;
    double burn_in = 100.0;
    double tau_f = 5.0;
    double threshold_lo = 0.3;
    double threshold_hi = 0.7;
    double dead_time = 10.0;
    double exclude_below = -1.0;
    long min_events = 20;
    std::uint64_t seed = 1;
    long n_segments = 100;
    double delta_omega = 1e-3;
    long substeps = 1;
    long decimate = 100;
    std::string output_dir = "oms_out";
    std::string profile = "paper";
    std::string backend = "sse";
    std::string scheme = "split";
    std::string segmentation = "single";
    std::string steady_method = "krylov";

    Backend backend_enum() const { return backend == "sme" ? Backend::sme : Backend::sse; }
    Scheme scheme_enum() const { return scheme == "euler" ? Scheme::euler : Scheme::split; }

    /// Step actually used: the target adjusted so that a spectral segment
    /// of duration 2 pi / delta_omega holds an integer number of samples.
    SegmentGrid grid() const { return segment_grid(delta_omega, dt); }

    TrajectoryOptions trajectory_options() const {
        TrajectoryOptions t;
        t.backend = backend_enum();
        t.scheme = scheme_enum();
        t.substeps = int(substeps);
        return t;
    }

    SwitchingRun switching_run() const {
        SwitchingRun r;
        r.dims = dims;
        r.dt = grid().dt;
        r.duration = duration;
        r.burn_in = burn_in;
        r.tau_f = tau_f;
        r.threshold_lo = threshold_lo;
        r.threshold_hi = threshold_hi;
        r.dead_time = dead_time;
        r.exclude_below = exclude_below;
        r.min_events = min_events;
        r.seed = seed;
        r.traj = trajectory_options();
        r.traj.keep_samples = false;
        return r;
    }

    SpectrumRun spectrum_run() const {
        SpectrumRun r;
        r.dims = dims;
        r.delta_omega = delta_omega;
        r.dt_target = dt;
        r.n_segments = n_segments;
        r.burn_in = burn_in;
        r.mode = segmentation == "independent" ? Segmentation::independent_seeds : Segmentation::single_trajectory;
        r.seed = seed;
        r.traj = trajectory_options();
        r.traj.keep_samples = false;
        return r;
    }

    void validate() const;
};

namespace detail {

using FieldRef = std::variant<double*, long*, int*, std::uint64_t*, std::string*>;

inline std::map<std::string, FieldRef> config_fields(RunConfig& c) {
    return {
        {"delta0", &c.params.delta0},     {"omega_m", &c.params.omega_m},   {"gamma_m", &c.params.gamma_m},
        {"g0", &c.params.g0},             {"epsilon", &c.params.epsilon},   {"n_th", &c.params.n_th},
        {"kappa", &c.params.kappa},       {"g1", &c.force.g1},              {"omega_f", &c.force.omega_f},
        {"n_cav", &c.dims.n_cav},         {"n_mech", &c.dims.n_mech},       {"dt", &c.dt},
        {"duration", &c.duration},        {"burn_in", &c.burn_in},          {"tau_f", &c.tau_f},
        {"threshold_lo", &c.threshold_lo}, {"threshold_hi", &c.threshold_hi}, {"dead_time", &c.dead_time},
        {"exclude_below", &c.exclude_below}, {"min_events", &c.min_events}, {"seed", &c.seed},
        {"n_segments", &c.n_segments},    {"delta_omega", &c.delta_omega},  {"substeps", &c.substeps},
        {"decimate", &c.decimate},        {"output_dir", &c.output_dir},    {"profile", &c.profile},
        {"backend", &c.backend},          {"scheme", &c.scheme},            {"segmentation", &c.segmentation},
        {"steady_method", &c.steady_method},
    };
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline void assign_field(const FieldRef& ref, const std::string& key, const std::string& text) {
    auto invalid = [&] { throw Error("cli", "invalid-value", "invalid value '" + text + "' for key " + key); };
    try {
        std::visit(
            [&](auto* p) {
                using T = std::remove_pointer_t<decltype(p)>;
                std::size_t used = 0;
                if constexpr (std::is_same_v<T, std::string>) {
                    *p = text;
                    used = text.size();
                } else if constexpr (std::is_same_v<T, double>) {
                    *p = std::stod(text, &used);
                } else if constexpr (std::is_same_v<T, std::uint64_t>) {
                    if (!text.empty() && text[0] == '-') invalid();
                    *p = std::stoull(text, &used);
                } else {
                    const long v = std::stol(text, &used);
                    *p = T(v);
                }
                if (used != text.size()) invalid();
            },
            ref);
    } catch (const std::logic_error&) {
        invalid();
    }
}

inline std::string field_text(const FieldRef& ref) {
    return std::visit(
        [](auto* p) -> std::string {
            using T = std::remove_pointer_t<decltype(p)>;
            if constexpr (std::is_same_v<T, std::string>) return *p;
            else if constexpr (std::is_same_v<T, double>) {
                char b[40];
                std::snprintf(b, sizeof b, "%.17g", *p);
                return b;
            } else return std::to_string(*p);
        },
        ref);
}

inline void apply_profile(RunConfig& c, const std::string& profile) {
    if (profile == "paper") {
        c.dims = {25, 12};
        c.dt = 1e-3;
    } else if (profile == "fast") {
        c.dims = {20, 24};
        c.dt = 2e-3;
    } else {
        throw Error("cli", "invalid-value", "profile must be paper or fast, got '" + profile + "'");
    }
    c.profile = profile;
}

} // namespace detail

inline void RunConfig::validate() const {
    try {
        params.validate();
        force.validate();
        dims.validate();
    } catch (const Error& e) {
        throw Error("cli", "invalid-value", e.what());
    }
    auto bad = [](const std::string& m) { throw Error("cli", "invalid-value", m); };
    if (params.kappa != 1.0) throw Error("cli", "conflicting-units", "rates are in units of kappa; kappa must be 1");
    if (!(dt > 0.0) || dt > 1e-2) bad("dt must be in (0, 1e-2]");
    if (!(duration > 0.0)) bad("duration must be > 0");
    if (!(burn_in >= 0.0)) bad("burn_in must be >= 0");
    if (!(tau_f > dt)) bad("tau_f must exceed dt");
    if (!(threshold_lo < threshold_hi)) bad("threshold_lo must be below threshold_hi");
    if (!(dead_time >= 0.0)) bad("dead_time must be >= 0");
    if (n_segments < 1) bad("n_segments must be >= 1");
    if (!(delta_omega > 0.0)) bad("delta_omega must be > 0");
    if (substeps < 1) bad("substeps must be >= 1");
    if (decimate < 1) bad("decimate must be >= 1");
    if (backend != "sse" && backend != "sme") bad("backend must be sse or sme");
    if (scheme != "split" && scheme != "euler") bad("scheme must be split or euler");
    if (segmentation != "single" && segmentation != "independent") bad("segmentation must be single or independent");
    if (steady_method != "krylov" && steady_method != "direct" && steady_method != "propagate")
        bad("steady_method must be krylov, direct or propagate");
    const SegmentGrid g = grid();
    if (std::abs(delta_omega * g.duration - 2.0 * std::numbers::pi) > 1e-12)
        bad("segment duration inconsistent with delta_omega");
}

/// Flat `key = value` text with `#` comments.
inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error("cli", "invalid-value", "line " + std::to_string(lineno) + ": expected key = value");
        out[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
    }
    return out;
}

/// Resolution order: profile defaults, then file values, then flags. The
/// profile itself may come from either source.
inline RunConfig resolve_config(const std::map<std::string, std::string>& file_values,
                                const std::map<std::string, std::string>& flag_values) {
    RunConfig c;
    std::string profile = "paper";
    if (auto it = file_values.find("profile"); it != file_values.end()) profile = it->second;
    if (auto it = flag_values.find("profile"); it != flag_values.end()) profile = it->second;
    detail::apply_profile(c, profile);
    auto fields = detail::config_fields(c);
    for (const auto* src : {&file_values, &flag_values})
        for (const auto& [k, v] : *src) {
            auto it = fields.find(k);
            if (it == fields.end()) throw Error("cli", "unknown-key", "unknown configuration key: " + k);
            if (k != "profile") detail::assign_field(it->second, k, v);
        }
    c.validate();
    return c;
}

inline RunConfig parse_config(const std::string& path, const std::map<std::string, std::string>& flags = {}) {
    std::map<std::string, std::string> file_values;
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw Error("cli", "missing-config", "cannot open config file " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        file_values = parse_key_values(ss.str());
    }
    return resolve_config(file_values, flags);
}

/// Canonical key-sorted text; reading it back reproduces the config.
inline std::string manifest_text(const RunConfig& cfg, const std::string& subcommand = "") {
    RunConfig c = cfg;
    double dt_eff = c.grid().dt;
    std::string out = "# oms " + std::string(version_string);
    if (!subcommand.empty()) out += " " + subcommand;
    out += "\n# effective dt " + detail::field_text(&dt_eff) + "\n";
    for (const auto& [k, ref] : detail::config_fields(c)) out += k + " = " + detail::field_text(ref) + "\n";
    return out;
}

/// start:stop:step, inclusive of stop up to rounding.
inline std::vector<double> parse_sweep(const std::string& spec) {
    const auto a = spec.find(':');
    const auto b = a == std::string::npos ? a : spec.find(':', a + 1);
    if (b == std::string::npos) throw Error("cli", "invalid-value", "sweep must be start:stop:step");
    double start, stop, step;
    try {
        start = std::stod(spec.substr(0, a));
        stop = std::stod(spec.substr(a + 1, b - a - 1));
        step = std::stod(spec.substr(b + 1));
    } catch (const std::logic_error&) {
        throw Error("cli", "invalid-value", "sweep must be start:stop:step");
    }
    if (!(step > 0.0) || stop < start) throw Error("cli", "invalid-value", "sweep needs step > 0 and stop >= start");
    const long n = long(std::floor((stop - start) / step + 1e-9)) + 1;
    if (n > 10000000) throw Error("cli", "invalid-value", "sweep too long");
    std::vector<double> v(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) v[std::size_t(i)] = start + double(i) * step;
    return v;
}

} // namespace oms
