// oms: command-line front end. Every subcommand resolves a RunConfig
// (profile, then --config file, then flags), writes a manifest into
// output_dir and prints a JSON summary on stdout. Failures print
// {"module", "code", "message"} on stderr and exit nonzero.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "oms/oms.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace oms;

namespace {

int thread_cap() {
    if (const char* env = std::getenv("OMS_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n) on up to OMS_THREADS workers. Results depend
// only on i, so the output does not change with the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(n, std::size_t(thread_cap()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first;
    std::mutex m;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(m);
                    if (!first) first = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first) std::rethrow_exception(first);
}

std::string dashed(std::string key) {
    for (auto& c : key)
        if (c == '_') c = '-';
    return key;
}

struct Invocation {
    std::string config_path;
    std::map<std::string, std::string> flags;
    std::vector<std::string> extra;   // subcommand options, echoed into the manifest

    RunConfig resolve() const { return parse_config(config_path, flags); }
};

void add_config_flags(CLI::App* sub, Invocation& inv) {
    sub->add_option("--config", inv.config_path, "key = value configuration file");
    RunConfig dummy;
    for (const auto& [key, ref] : detail::config_fields(dummy)) {
        (void)ref;
        const std::string k = key;
        sub->add_option_function<std::string>(
            "--" + dashed(k), [&inv, k](const std::string& v) { inv.flags[k] = v; }, k)
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
}

fs::path prepare_output(const RunConfig& cfg, const std::string& sub, const Invocation& inv) {
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    std::string text = manifest_text(cfg, sub);
    for (const auto& e : inv.extra) text += "# option " + e + "\n";
    write_atomic(dir / "manifest.txt", text);
    return dir;
}

void emit(const fs::path& dir, const std::string& name, const json& j) {
    const std::string s = j.dump(2) + "\n";
    write_atomic(dir / name, s);
    std::cout << s;
}

json params_json(const SystemParams& p) {
    return {{"delta0", p.delta0}, {"omega_m", p.omega_m}, {"gamma_m", p.gamma_m}, {"g0", p.g0},
            {"epsilon", p.epsilon}, {"n_th", p.n_th},     {"kappa", p.kappa}};
}

SteadyStateOptions steady_options(const RunConfig& cfg) {
    SteadyStateOptions o;
    if (cfg.steady_method == "direct") o.method = SteadyStateMethod::direct;
    else if (cfg.steady_method == "propagate") o.method = SteadyStateMethod::propagate;
    return o;
}

json fit_json(const NoiseFit& f) {
    return {{"amplitude", f.amplitude}, {"width", f.width},   {"floor", f.floor},
            {"chi2_reduced", f.chi2_reduced}, {"n_points", f.n_points}, {"sum_rule", f.sum_rule()}};
}

// ---- meanfield ------------------------------------------------------------

int run_meanfield(const Invocation& inv, const std::string& sweep) {
    const RunConfig cfg = inv.resolve();
    const fs::path dir = prepare_output(cfg, "meanfield", inv);
    const auto grid = parse_sweep(sweep);
    const auto sw = branch_sweep(cfg.params, grid);
    std::string csv = "delta0,branch,n_phot,x_bar,a_re,a_im,b_re,b_im,stable\n";
    for (const auto& row : sw.rows)
        for (std::size_t b = 0; b < row.solutions.size(); ++b) {
            const auto& s = row.solutions[b];
            csv += format_double(row.delta0) + "," + std::to_string(b) + "," + format_double(s.n_phot) + "," +
                   format_double(s.x_bar) + "," + format_double(s.a_bar.real()) + "," + format_double(s.a_bar.imag()) +
                   "," + format_double(s.b_bar.real()) + "," + format_double(s.b_bar.imag()) + "," +
                   (s.stable ? "1" : "0") + "\n";
        }
    write_atomic(dir / "meanfield.csv", csv);
    json j{{"params", params_json(cfg.params)}, {"points", sw.rows.size()}, {"bistable", sw.bistable}};
    if (sw.bistable) j["window"] = {sw.window_lo, sw.window_hi};
    if (cfg.params.g0 > 0.0) {
        const auto b = bifurcation_threshold(cfg.params);
        j["epsilon_bif"] = b.epsilon_bif;
        j["n_bif"] = b.n_bif;
        j["epsilon_fold_with_gamma"] = fold_threshold(cfg.params, true);
    }
    emit(dir, "meanfield.json", j);
    return 0;
}

// ---- steady ---------------------------------------------------------------

int run_steady(const Invocation& inv, bool derivative) {
    const RunConfig cfg = inv.resolve();
    const fs::path dir = prepare_output(cfg, "steady", inv);
    const auto o = steady_options(cfg);
    auto m = steady_state(cfg.params, cfg.dims, o);
    if (derivative) {
        m.delta_step = 0.01;
        m.dx_ddelta0 = detuning_derivative(cfg.params, cfg.dims, m.delta_step, o);
    }
    json j{{"params", params_json(cfg.params)},
           {"n_cav", cfg.dims.n_cav},
           {"n_mech", cfg.dims.n_mech},
           {"x_mean", m.x_mean},
           {"var_normal", m.var_normal},
           {"n_phot_mean", m.n_phot_mean},
           {"n_mech_mean", m.n_mech_mean},
           {"dx_ddelta0", m.dx_ddelta0 ? json(*m.dx_ddelta0) : json(nullptr)},
           {"delta_step", m.delta_step},
           {"leakage", m.leakage},
           {"residual", m.residual},
           {"method", m.method}};
    json br = json::array();
    for (const auto& s : solve_branches(cfg.params)) br.push_back({{"x_bar", s.x_bar}, {"stable", s.stable}});
    j["meanfield_branches"] = br;
    if (m.leakage > 1e-3) j["warnings"] = {"top Fock level population above 1e-3"};
    emit(dir, "steady.json", j);
    return 0;
}

// ---- trajectory -----------------------------------------------------------

int run_trajectory(const Invocation& inv) {
    const RunConfig cfg = inv.resolve();
    const fs::path dir = prepare_output(cfg, "trajectory", inv);
    const double dt = cfg.grid().dt;
    const auto rec = simulate_trajectory(cfg.params, cfg.force, cfg.dims, cfg.duration, dt, cfg.seed,
                                         cfg.trajectory_options());
    write_record(dir / "record.bin", rec);
    write_atomic(dir / "trajectory.csv", decimated_csv(rec, cfg.tau_f, cfg.decimate));
    json j{{"record", (dir / "record.bin").string()},
           {"n_samples", rec.n_samples},
           {"dt", rec.dt},
           {"duration", rec.duration},
           {"seed", rec.seed},
           {"backend", rec.backend},
           {"scheme", rec.scheme},
           {"leakage_max", rec.leakage_max},
           {"leakage_smoothed_max", rec.leakage_smoothed_max},
           {"leakage_flagged", rec.leakage_flagged},
           {"dw_mean", rec.dw_mean},
           {"dw_var", rec.dw_var},
           {"trace_deviation_max", rec.trace_deviation_max}};
    if (rec.leakage_flagged) j["warnings"] = {"top Fock level population exceeded 1e-3"};
    emit(dir, "trajectory.json", j);
    return 0;
}

// ---- rates ----------------------------------------------------------------

struct RatePoint {
    double delta0 = 0.0;
    SwitchingMeasurement m;
    KsResult ks_plus, ks_minus;
    std::string error;
};

RatePoint measure_point(const RunConfig& cfg, double delta0) {
    RatePoint r;
    r.delta0 = delta0;
    SystemParams p = cfg.params;
    p.delta0 = delta0;
    const SwitchingRun run = cfg.switching_run();
    try {
        r.m = measure_switching(p, {}, run);
        if (r.m.stats_ok) {
            r.ks_plus = ks_exponential(r.m.stats.tau_plus, run.exclusion(), r.m.stats.w_minus.w);
            r.ks_minus = ks_exponential(r.m.stats.tau_minus, run.exclusion(), r.m.stats.w_plus.w);
        } else {
            r.error = "switching/insufficient-statistics: " + r.m.stats_error;
        }
    } catch (const Error& e) {
        r.error = e.module() + "/" + e.code() + ": " + e.what();
    }
    return r;
}

json rate_json(const RatePoint& r) {
    const auto& s = r.m.stats;
    json j{{"delta0", r.delta0}, {"ok", r.error.empty()}, {"n_events", s.n_events}};
    if (!r.error.empty()) {
        j["error"] = r.error;
        return j;
    }
    j["w_plus"] = s.w_plus.w;
    j["w_plus_err"] = s.w_plus.w_err;
    j["w_minus"] = s.w_minus.w;
    j["w_minus_err"] = s.w_minus.w_err;
    j["w_bar"] = s.w_bar;
    j["p_ss_plus"] = s.p_ss_plus;
    j["p_ss_plus_err"] = s.p_ss_plus_err;
    j["time_fraction_plus"] = s.time_fraction_plus;
    j["exclude_below"] = s.w_plus.exclude_below;
    j["ks_p_plus"] = r.ks_plus.p_value;
    j["ks_p_minus"] = r.ks_minus.p_value;
    j["merged"] = r.m.events.merged;
    j["level_lo"] = r.m.level_lo;
    j["level_hi"] = r.m.level_hi;
    j["leakage_smoothed_max"] = r.m.record.leakage_smoothed_max;
    return j;
}

std::vector<RatePoint> measure_points(const RunConfig& cfg, const std::vector<double>& grid) {
    std::vector<RatePoint> pts(grid.size());
    parallel_for(grid.size(), [&](std::size_t i) { pts[i] = measure_point(cfg, grid[i]); });
    return pts;
}

int run_rates(const Invocation& inv, const std::string& sweep) {
    const RunConfig cfg = inv.resolve();
    const fs::path dir = prepare_output(cfg, "rates", inv);
    const auto grid = sweep.empty() ? std::vector<double>{cfg.params.delta0} : parse_sweep(sweep);
    const auto pts = measure_points(cfg, grid);
    std::string csv = "delta0,ok,n_events,w_plus,w_plus_err,w_minus,w_minus_err,w_bar,p_ss_plus,ks_p_plus,ks_p_minus\n";
    json rows = json::array();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto& r = pts[i];
        const auto& s = r.m.stats;
        const bool ok = r.error.empty();
        auto f = [&](double v) { return ok ? format_double(v) : std::string("nan"); };
        csv += format_double(r.delta0) + "," + (ok ? "1" : "0") + "," + std::to_string(s.n_events) + "," +
               f(s.w_plus.w) + "," + f(s.w_plus.w_err) + "," + f(s.w_minus.w) + "," + f(s.w_minus.w_err) + "," +
               f(s.w_bar) + "," + f(s.p_ss_plus) + "," + f(r.ks_plus.p_value) + "," + f(r.ks_minus.p_value) + "\n";
        std::string tau = "branch,tau\n";
        for (double t : s.tau_plus) tau += "+," + format_double(t) + "\n";
        for (double t : s.tau_minus) tau += "-," + format_double(t) + "\n";
        write_atomic(dir / ("residences_" + std::to_string(i) + ".csv"), tau);
        rows.push_back(rate_json(r));
    }
    write_atomic(dir / "rates.csv", csv);
    emit(dir, "rates.json", {{"params", params_json(cfg.params)}, {"rows", rows}});
    return 0;
}

// ---- spectrum -------------------------------------------------------------

json spectrum_json(const SpectrumEstimate& s, const RunConfig& cfg, std::string& csv) {
    NoiseFitOptions o;
    if (cfg.force.active()) o.omega_f = cfg.force.omega_f;
    json j{{"delta_omega", s.delta_omega}, {"dt", s.dt},           {"segment_samples", s.segment_samples},
           {"n_segments", s.n_segments},   {"mean", s.mean},       {"variance", s.variance},
           {"dc", s.dc}};
    std::optional<NoiseFit> fit;
    try {
        if (cfg.force.active()) {
            const auto pk = extract_peak(s, cfg.force.omega_f);
            fit = pk.noise_fit;
            j["peak"] = {{"omega_f", pk.omega_f},         {"s_out", pk.s_out},   {"s_noise", pk.s_noise},
                         {"s_signal", pk.s_signal},       {"s_signal_err", pk.s_signal_err},
                         {"z", pk.z},                     {"i_omega", pk.i_omega},
                         {"gain_measured", measured_gain(pk, cfg.force.g1, cfg.params.kappa)},
                         {"snr_measured", pk.snr_measured}};
        } else {
            fit = fit_noise(s, o);
        }
        j["noise_fit"] = fit_json(*fit);
        j["excess_power"] = excess_power(s, *fit, o);
    } catch (const ConvergenceError& e) {
        j["noise_fit"] = nullptr;
        j["warnings"] = {std::string("noise fit failed: ") + e.what()};
    }
    csv = "omega,s_out,s_err,s_fit\n";
    for (std::size_t k = 0; k < s.freqs.size(); ++k)
        csv += format_double(s.freqs[k]) + "," + format_double(s.s_out[k]) + "," + format_double(s.standard_error(k)) +
               "," + (fit ? format_double((*fit)(s.freqs[k])) : std::string("nan")) + "\n";
    return j;
}

int run_spectrum(const Invocation& inv, const std::string& record) {
    const RunConfig cfg = inv.resolve();
    const fs::path dir = prepare_output(cfg, "spectrum", inv);
    SpectrumEstimate s;
    json extra;
    if (!record.empty()) {
        const auto rec = read_record(record);
        s = record_spectrum(rec, cfg.delta_omega, cfg.burn_in);
        extra = {{"source", record}};
    } else {
        const auto sim = simulate_spectrum(cfg.params, cfg.force, cfg.spectrum_run());
        s = sim.spectrum;
        extra = {{"source", "simulation"},
                 {"leakage_max", sim.leakage_max},
                 {"leakage_smoothed_max", sim.leakage_smoothed_max},
                 {"leakage_flagged", sim.leakage_flagged}};
    }
    std::string csv;
    json j = spectrum_json(s, cfg, csv);
    for (auto& [k, v] : extra.items()) j[k] = v;
    write_atomic(dir / "spectrum.csv", csv);
    emit(dir, "spectrum.json", j);
    return 0;
}

// ---- predict / compare ----------------------------------------------------

struct ModelInputs {
    TwoStateInputs in;
    double x_qme = 0.0;
    json source;
};

// Rates come from flags when given, otherwise from a switching run at the
// configured point; the response slope and variance come from the QME.
ModelInputs model_inputs(const RunConfig& cfg, double w_plus, double w_minus, double w1_plus, double w1_minus) {
    ModelInputs r;
    auto& in = r.in;
    if (w_plus > 0.0 && w_minus > 0.0) {
        in.w0_plus = w_plus;
        in.w0_minus = w_minus;
        r.source["rates"] = "flags";
    } else {
        const auto pt = measure_point(cfg, cfg.params.delta0);
        if (!pt.error.empty()) throw Error("switching", "insufficient-statistics", pt.error);
        in.w0_plus = pt.m.stats.w_plus.w;
        in.w0_minus = pt.m.stats.w_minus.w;
        r.source["rates"] = rate_json(pt);
    }
    in.w1_plus = w1_plus;
    in.w1_minus = w1_minus;
    const auto o = steady_options(cfg);
    const auto m = steady_state(cfg.params, cfg.dims, o);
    r.x_qme = m.x_mean;
    in.var_normal = m.var_normal;
    in.dx_ddelta0 = detuning_derivative(cfg.params, cfg.dims, 0.01, o);
    const auto br = solve_branches(cfg.params);
    in.x_bar_minus = br.front().x_bar;
    in.x_bar_plus = br.back().x_bar;
    in.omega_f = cfg.force.omega_f;
    in.g0 = cfg.params.g0;
    in.g1 = cfg.force.g1;
    in.omega_m = cfg.params.omega_m;
    in.delta_omega = cfg.delta_omega;
    in.kappa = cfg.params.kappa;
    return r;
}

int run_predict(const Invocation& inv, double wp, double wm, double w1p, double w1m) {
    const RunConfig cfg = inv.resolve();
    const fs::path dir = prepare_output(cfg, "predict", inv);
    const auto mi = model_inputs(cfg, wp, wm, w1p, w1m);
    const auto& in = mi.in;
    std::vector<double> freqs;
    for (int k = 1; k <= 400; ++k) freqs.push_back(k * 5e-3);
    const auto p = predict_response(in, freqs);
    std::string csv = "omega,s_noise\n";
    for (std::size_t k = 0; k < freqs.size(); ++k) csv += format_double(freqs[k]) + "," + format_double(p.s_noise[k]) + "\n";
    write_atomic(dir / "predict.csv", csv);
    json j{{"w0_plus", in.w0_plus},
           {"w0_minus", in.w0_minus},
           {"w_bar", in.w_bar()},
           {"w1_plus", in.w1_plus},
           {"w1_minus", in.w1_minus},
           {"x_bar_plus", in.x_bar_plus},
           {"x_bar_minus", in.x_bar_minus},
           {"var_normal", in.var_normal},
           {"dx_ddelta0", in.dx_ddelta0},
           {"p_ss_plus", p.p_ss_plus},
           {"x_two_state", p.p_ss_plus * in.x_bar_plus + (1.0 - p.p_ss_plus) * in.x_bar_minus},
           {"x_qme", mi.x_qme},
           {"mod_amplitude", p.mod_amplitude},
           {"phase", p.phase},
           {"i_omega", p.i_omega},
           {"i_omega_two_state", p.i_omega_two_state},
           {"s_noise_at_signal", p.s_noise_at_signal},
           {"s_signal_peak", p.s_signal_peak},
           {"gain", p.gain},
           {"snr", p.snr},
           {"snr_low_frequency", p.snr_low_frequency},
           {"warnings", p.warnings},
           {"source", mi.source}};
    emit(dir, "predict.json", j);
    return 0;
}

json linear_json(const RunConfig& cfg, double gain) {
    const auto b = linear_benchmark(cfg.params, cfg.force.omega_f, cfg.force.g1, cfg.delta_omega, gain);
    const auto lg = linear_gain(cfg.params, cfg.force.omega_f);
    json j{{"omega_f", cfg.force.omega_f},
           {"g1", cfg.force.g1},
           {"chi_c", {b.chi_c.real(), b.chi_c.imag()}},
           {"chi_m", {b.chi_m.real(), b.chi_m.imag()}},
           {"n_bar", b.n_bar},
           {"g_enh", b.g_enh},
           {"gain", b.gain_lin},
           {"gain_lin", lg.gain_lin},
           {"gain_low_freq", lg.gain_low_freq},
           {"gain_max", b.gain_max},
           {"gain_opt", b.gain_opt},
           {"gain_opt_exact", lg.gain_opt_exact},
           {"valid", b.valid},
           {"noise_referred", b.noise_referred},
           {"snr_lin", b.snr_lin},
           {"i_lin", b.i_lin}};
    if (b.gain_lin > 0.0) {
        const auto n = linear_noise_snr(cfg.params, cfg.force.omega_f, cfg.force.g1, cfg.delta_omega, b.gain_lin);
        j["imprecision"] = n.imprecision;
        j["back_action"] = n.back_action;
        j["thermal"] = n.thermal;
        j["bracket_low_freq"] = n.bracket_low_freq;
    }
    j["warnings"] = b.warnings;
    return j;
}

int run_linear(const Invocation& inv, double gain) {
    const RunConfig cfg = inv.resolve();
    const fs::path dir = prepare_output(cfg, "linear", inv);
    emit(dir, "linear.json", linear_json(cfg, gain));
    return 0;
}

std::vector<double> parse_list(const std::string& s) {
    if (s.find(':') != std::string::npos) return parse_sweep(s);
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw Error("cli", "invalid-value", "bad frequency list entry '" + item + "'");
        }
    }
    if (out.empty()) throw Error("cli", "invalid-value", "empty frequency list");
    return out;
}

int run_compare(const Invocation& inv, const std::string& omega_list, double wp, double wm) {
    RunConfig cfg = inv.resolve();
    if (!cfg.force.active()) throw Error("cli", "invalid-value", "compare needs g1 > 0 and omega_f > 0");
    const fs::path dir = prepare_output(cfg, "compare", inv);
    const auto omegas = omega_list.empty() ? std::vector<double>{cfg.force.omega_f} : parse_list(omega_list);
    std::optional<ModelInputs> model;
    std::string model_error;
    try {
        model = model_inputs(cfg, wp, wm, 0.0, 0.0);
    } catch (const Error& e) {
        model_error = e.module() + "/" + e.code() + ": " + e.what();
    }
    struct Row {
        double omega = 0.0, gain_measured = 0.0, snr_measured = 0.0, z = 0.0;
    };
    std::vector<Row> rows(omegas.size());
    parallel_for(omegas.size(), [&](std::size_t i) {
        RunConfig c = cfg;
        c.force.omega_f = omegas[i];
        const auto sim = simulate_spectrum(c.params, c.force, c.spectrum_run());
        const auto pk = extract_peak(sim.spectrum, omegas[i]);
        rows[i] = {omegas[i], measured_gain(pk, c.force.g1, c.params.kappa), pk.snr_measured, pk.z};
    });
    const double gain_max = linear_gain(cfg.params, cfg.force.omega_f).gain_max;
    std::string csv = "omega_f,gain_measured,gain_predicted,gain_max,snr_measured,snr_predicted,snr_lin_matched\n";
    json out = json::array();
    for (const auto& r : rows) {
        double gp = std::nan(""), sp = std::nan(""), sl = std::nan("");
        if (model) {
            TwoStateInputs in = model->in;
            in.omega_f = r.omega;
            const auto p = predict_response(in);
            gp = p.gain;
            sp = p.snr;
        }
        // Linear detector at the measured gain, same probe and resolution.
        if (r.gain_measured > 0.0)
            sl = linear_noise_snr(cfg.params, r.omega, cfg.force.g1, cfg.delta_omega, r.gain_measured).snr_lin;
        csv += format_double(r.omega) + "," + format_double(r.gain_measured) + "," + format_double(gp) + "," +
               format_double(gain_max) + "," + format_double(r.snr_measured) + "," + format_double(sp) + "," +
               format_double(sl) + "\n";
        out.push_back({{"omega_f", r.omega},
                       {"gain_measured", r.gain_measured},
                       {"gain_predicted", gp},
                       {"gain_max", gain_max},
                       {"snr_measured", r.snr_measured},
                       {"snr_predicted", sp},
                       {"snr_lin_matched", sl},
                       {"z", r.z}});
    }
    write_atomic(dir / "compare.csv", csv);
    json j{{"g1", cfg.force.g1}, {"rows", out}};
    if (!model_error.empty()) j["warnings"] = {"no two-state prediction: " + model_error};
    emit(dir, "compare.json", j);
    return 0;
}

void print_error(const std::string& module, const std::string& code, const std::string& msg) {
    std::cerr << json{{"module", module}, {"code", code}, {"message", msg}}.dump() << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bistable optomechanical force detection: simulation and analysis"};
    app.set_version_flag("--version", std::string(version_string));
    app.require_subcommand(1);

    Invocation inv;
    std::string sweep = "-2:-0.5:0.01", rate_sweep, record, omega_list;
    bool no_derivative = false;
    double wp = 0.0, wm = 0.0, w1p = 0.0, w1m = 0.0, gain = 0.0;

    auto* mf = app.add_subcommand("meanfield", "branch sweep CSV");
    mf->add_option("--sweep", sweep, "delta0 start:stop:step");
    auto* st = app.add_subcommand("steady", "steady-state moments JSON");
    st->add_flag("--no-derivative", no_derivative, "skip d<X>/dDelta0");
    auto* tr = app.add_subcommand("trajectory", "binary record and decimated CSV");
    auto* rt = app.add_subcommand("rates", "switching rate table");
    rt->add_option("--sweep", rate_sweep, "delta0 start:stop:step");
    auto* sp = app.add_subcommand("spectrum", "averaged photocurrent spectrum");
    sp->add_option("--record", record, "analyse a stored trajectory record instead of simulating");
    auto* pr = app.add_subcommand("predict", "two-state model prediction");
    auto* ln = app.add_subcommand("linear", "linear-detector benchmark");
    ln->add_option("--gain", gain, "evaluate at this gain (default: the detector's own)");
    auto* cp = app.add_subcommand("compare", "measured vs predicted gain and SNR table");
    cp->add_option("--omega-list", omega_list, "comma list or start:stop:step of signal frequencies");
    for (auto* s : {pr, cp}) {
        s->add_option("--w-plus", wp, "use this W+ instead of measuring");
        s->add_option("--w-minus", wm, "use this W- instead of measuring");
    }
    pr->add_option("--w1-plus", w1p, "rate modulation amplitude W1+");
    pr->add_option("--w1-minus", w1m, "rate modulation amplitude W1-");
    for (auto* s : {mf, st, tr, rt, sp, pr, ln, cp}) add_config_flags(s, inv);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("cli", "usage", e.what());
        return 2;
    }

    for (const auto* s : app.get_subcommands())
        for (const auto* o : s->get_options())
            if (o->count() > 0 && o->get_name() != "--config" && !o->get_name().empty()) {
                const std::string key = o->get_name().substr(2);
                bool is_config = false;
                for (const auto& kv : inv.flags) is_config |= dashed(kv.first) == key;
                if (!is_config && key != "help") inv.extra.push_back(key + " = " + o->as<std::string>());
            }

    try {
        if (mf->parsed()) return run_meanfield(inv, sweep);
        if (st->parsed()) return run_steady(inv, !no_derivative);
        if (tr->parsed()) return run_trajectory(inv);
        if (rt->parsed()) return run_rates(inv, rate_sweep);
        if (sp->parsed()) return run_spectrum(inv, record);
        if (pr->parsed()) return run_predict(inv, wp, wm, w1p, w1m);
        if (ln->parsed()) return run_linear(inv, gain);
        if (cp->parsed()) return run_compare(inv, omega_list, wp, wm);
    } catch (const Error& e) {
        print_error(e.module(), e.code(), e.what());
        return 1;
    } catch (const fs::filesystem_error& e) {
        print_error("io", "filesystem", e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error("cli", "internal", e.what());
        return 1;
    }
    return 1;
}
