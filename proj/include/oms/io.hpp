#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "oms/error.hpp"
#include "oms/trajectory.hpp"

namespace oms {

// Record layout (native little-endian):
//   "OMS1" | u32 version | f64 delta0 omega_m gamma_m g0 epsilon n_th kappa g1 omega_f
//   | i32 n_cav n_mech | u64 seed | f64 dt | u64 count | f64 i_c[count]
inline constexpr std::uint32_t record_version = 1;

/// Writes `contents` next to `path` and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp" + std::to_string(::getpid());
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("io", "write-failed", "cannot open " + tmp.string());
        f.write(contents.data(), std::streamsize(contents.size()));
        if (!f) throw Error("io", "write-failed", "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

namespace detail {

template <class T>
void put(std::string& out, T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.append(b, sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& what) {
    T v;
    char b[sizeof(T)];
    if (!in.read(b, sizeof(T))) throw Error("io", "truncated-record", "record ends inside " + what);
    std::memcpy(&v, b, sizeof(T));
    return v;
}

} // namespace detail

inline std::string encode_record(const TrajectoryRecord& r) {
    std::string out = "OMS1";
    out.reserve(128 + r.i_c.size() * 8);
    detail::put(out, record_version);
    const SystemParams& p = r.params;
    for (double v : {p.delta0, p.omega_m, p.gamma_m, p.g0, p.epsilon, p.n_th, p.kappa, r.force.g1, r.force.omega_f})
        detail::put(out, v);
    detail::put(out, std::int32_t(r.dims.n_cav));
    detail::put(out, std::int32_t(r.dims.n_mech));
    detail::put(out, std::uint64_t(r.seed));
    detail::put(out, r.dt);
    detail::put(out, std::uint64_t(r.i_c.size()));
    out.append(reinterpret_cast<const char*>(r.i_c.data()), r.i_c.size() * sizeof(double));
    return out;
}

inline void write_record(const std::filesystem::path& path, const TrajectoryRecord& r) {
    write_atomic(path, encode_record(r));
}

/// Reads the header and photocurrent samples; x_cond is not stored.
inline TrajectoryRecord read_record(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "missing-record", "cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "OMS1", 4) != 0)
        throw Error("io", "bad-magic", path.string() + " is not a trajectory record");
    const auto version = detail::get<std::uint32_t>(in, "header");
    if (version != record_version)
        throw Error("io", "bad-version", "unsupported record version " + std::to_string(version));
    TrajectoryRecord r;
    SystemParams& p = r.params;
    for (double* v : {&p.delta0, &p.omega_m, &p.gamma_m, &p.g0, &p.epsilon, &p.n_th, &p.kappa, &r.force.g1,
                      &r.force.omega_f})
        *v = detail::get<double>(in, "header");
    r.dims.n_cav = detail::get<std::int32_t>(in, "header");
    r.dims.n_mech = detail::get<std::int32_t>(in, "header");
    r.seed = detail::get<std::uint64_t>(in, "header");
    r.dt = detail::get<double>(in, "header");
    const auto n = detail::get<std::uint64_t>(in, "header");
    r.i_c.resize(n);
    if (!in.read(reinterpret_cast<char*>(r.i_c.data()), std::streamsize(n * sizeof(double))))
        throw Error("io", "truncated-record", "record has fewer samples than its header states");
    r.n_samples = long(n);
    r.duration = double(n) * r.dt;
    return r;
}

inline std::string format_double(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.12g", v);
    return b;
}

/// Decimated CSV: t, filtered photocurrent, conditional <X>.
inline std::string decimated_csv(const TrajectoryRecord& r, double tau_f, long stride) {
    if (stride < 1) throw Error("io", "invalid-stride", "decimate must be >= 1");
    const auto filt = lowpass_filter(r.i_c, r.dt, tau_f);
    std::string out = "t,i_c_filtered,x_cond\n";
    for (std::size_t k = 0; k < filt.size(); k += std::size_t(stride)) {
        out += format_double(double(k) * r.dt) + "," + format_double(filt[k]) + ",";
        out += (k < r.x_cond.size() ? format_double(r.x_cond[k]) : std::string("nan")) + "\n";
    }
    return out;
}

} // namespace oms
