#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "oms/error.hpp"
#include "oms/params.hpp"

namespace oms {

struct MeanFieldSolution {
    std::complex<double> a_bar;
    std::complex<double> b_bar;
    double n_phot = 0.0;
    double x_bar = 0.0;
    bool stable = true;
};

struct BifurcationInfo {
    double epsilon_bif = 0.0;
    double n_bif = 0.0;
};

/// Effective Kerr coefficient after eliminating the mechanical amplitude.
inline double kerr_coefficient(const SystemParams& p) {
    return 2.0 * p.g0 * p.g0 * p.omega_m / (p.omega_m * p.omega_m + 0.25 * p.gamma_m * p.gamma_m);
}

namespace detail {

// Real roots of c3 n^3 + c2 n^2 + c1 n + c0, ascending.
inline std::vector<double> real_cubic_roots(double c3, double c2, double c1, double c0) {
    std::vector<double> roots;
    if (c3 == 0.0) {
        if (c2 == 0.0) {
            if (c1 != 0.0) roots.push_back(-c0 / c1);
            return roots;
        }
        const double disc = c1 * c1 - 4.0 * c2 * c0;
        if (disc >= 0.0) {
            const double q = -0.5 * (c1 + std::copysign(std::sqrt(disc), c1));
            roots.push_back(q / c2);
            if (q != 0.0) roots.push_back(c0 / q);
        }
        std::sort(roots.begin(), roots.end());
        return roots;
    }
    const double a = c2 / c3, b = c1 / c3, c = c0 / c3;
    // Depressed cubic t^3 + p t + q with n = t - a/3.
    const double p = b - a * a / 3.0;
    const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    const double disc = q * q / 4.0 + p * p * p / 27.0;
    const double shift = -a / 3.0;
    if (disc > 0.0) {
        const double s = std::sqrt(disc);
        roots.push_back(std::cbrt(-q / 2.0 + s) + std::cbrt(-q / 2.0 - s) + shift);
    } else {
        const double m = 2.0 * std::sqrt(-p / 3.0);
        const double arg = m > 0.0 ? std::clamp(3.0 * q / (p * m), -1.0, 1.0) : 0.0;
        const double theta = std::acos(arg) / 3.0;
        for (int k = 0; k < 3; ++k) roots.push_back(m * std::cos(theta - 2.0 * std::numbers::pi * k / 3.0) + shift);
    }
    // One Newton polish per root.
    for (double& r : roots) {
        const double f = ((c3 * r + c2) * r + c1) * r + c0;
        const double df = (3.0 * c3 * r + 2.0 * c2) * r + c1;
        if (df != 0.0) r -= f / df;
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

} // namespace detail

/// Residuals of the two stationary mean-field equations,
///   0 = -(kappa/2 - i Delta0) a + i g0 a (b + b*) + eps
///   0 = -(i omega_m + gamma_m/2) b + i g0 |a|^2.
inline std::pair<double, double> meanfield_residuals(const SystemParams& p, std::complex<double> a,
                                                     std::complex<double> b) {
    const std::complex<double> I(0.0, 1.0);
    const auto r1 = -(0.5 * p.kappa - I * p.delta0) * a + I * p.g0 * a * (2.0 * b.real()) + p.epsilon;
    const auto r2 = -(I * p.omega_m + 0.5 * p.gamma_m) * b + I * p.g0 * std::norm(a);
    return {std::abs(r1), std::abs(r2)};
}

/// Stationary semiclassical solutions sorted by photon number. With b
/// eliminated, n = |a|^2 solves
///   chi^2 n^3 + 2 Delta0 chi n^2 + (kappa^2/4 + Delta0^2) n - eps^2 = 0.
/// When three roots exist the outer two are the stable branches.
inline std::vector<MeanFieldSolution> solve_branches(const SystemParams& p) {
    p.validate();
    const double chi = kerr_coefficient(p);
    const double d = p.delta0;
    std::vector<double> ns;
    if (p.epsilon == 0.0) {
        ns.push_back(0.0);
    } else {
        for (double n : detail::real_cubic_roots(chi * chi, 2.0 * d * chi, 0.25 * p.kappa * p.kappa + d * d,
                                                 -p.epsilon * p.epsilon))
            if (n > 0.0) ns.push_back(n);
    }
    // Merge numerically coincident roots at the fold.
    std::vector<double> uniq;
    for (double n : ns)
        if (uniq.empty() || std::abs(n - uniq.back()) > 1e-12 * std::max(1.0, n)) uniq.push_back(n);
    const std::complex<double> I(0.0, 1.0);
    std::vector<MeanFieldSolution> out;
    for (std::size_t k = 0; k < uniq.size(); ++k) {
        const double n = uniq[k];
        MeanFieldSolution s;
        s.n_phot = n;
        s.a_bar = p.epsilon / (0.5 * p.kappa - I * (d + chi * n));
        s.b_bar = I * p.g0 * n / (I * p.omega_m + 0.5 * p.gamma_m);
        s.x_bar = 2.0 * s.a_bar.real();
        s.stable = uniq.size() != 3 || k != 1;
        out.push_back(s);
    }
    return out;
}

/// Closed-form bistability threshold and the critical cavity occupation
/// 4 (eps_bif / kappa)^2 of a resonantly driven empty cavity.
inline BifurcationInfo bifurcation_threshold(const SystemParams& p) {
    if (!(p.g0 > 0.0)) throw Error("meanfield", "no-bifurcation", "g0 = 0: the cavity is linear and never bistable");
    BifurcationInfo b;
    b.epsilon_bif = std::pow(3.0, 0.25) * std::sqrt(std::pow(p.kappa, 3) * p.omega_m / 18.0) / p.g0;
    b.n_bif = 2.0 * p.kappa * p.omega_m / (3.0 * std::sqrt(3.0) * p.g0 * p.g0);
    return b;
}

/// Numerical cusp of the stationary cubic: the smallest drive at which the
/// photon-number response eps^2(n) = n[(kappa/2)^2 + (Delta0 + chi n)^2]
/// develops a fold for some detuning. Solved by Newton iteration on the
/// conditions g'(n) = g''(n) = 0 using finite differences of g only, so it
/// shares no algebra with the closed form. `include_gamma = false` uses the
/// undamped coefficient chi = 2 g0^2 / omega_m the closed form assumes.
inline double fold_threshold(const SystemParams& p, bool include_gamma = true) {
    if (!(p.g0 > 0.0)) throw Error("meanfield", "no-bifurcation", "g0 = 0: the cavity is linear and never bistable");
    const double chi = include_gamma ? kerr_coefficient(p) : 2.0 * p.g0 * p.g0 / p.omega_m;
    const double k2 = 0.25 * p.kappa * p.kappa;
    auto g = [&](double n, double d) { return n * (k2 + (d + chi * n) * (d + chi * n)); };
    auto residual = [&](double n, double d) {
        const double h = 1e-4 * std::max(1.0, n);
        const double gp = (g(n + h, d) - g(n - h, d)) / (2.0 * h);
        const double gpp = (g(n + h, d) - 2.0 * g(n, d) + g(n - h, d)) / (h * h);
        return Eigen::Vector2d(gp, gpp);
    };
    // Start at the resonant drive scale.
    double n = p.kappa / chi, d = -p.kappa;
    for (int it = 0; it < 100; ++it) {
        const Eigen::Vector2d f = residual(n, d);
        if (f.norm() < 1e-13) break;
        const double hn = 1e-6 * std::max(1.0, n), hd = 1e-6;
        Eigen::Matrix2d j;
        j.col(0) = (residual(n + hn, d) - residual(n - hn, d)) / (2.0 * hn);
        j.col(1) = (residual(n, d + hd) - residual(n, d - hd)) / (2.0 * hd);
        const Eigen::Vector2d step = j.fullPivLu().solve(f);
        n -= step(0);
        d -= step(1);
        if (!(n > 0.0)) n = 1e-3;
    }
    const Eigen::Vector2d f = residual(n, d);
    if (!(f.norm() < 1e-7))
        throw ConvergenceError("meanfield", "fold condition did not converge", f.norm());
    return std::sqrt(g(n, d));
}

/// Eigenvalues of the linearized mean-field flow around a solution, in the
/// real coordinates (Re a, Im a, Re b, Im b). Diagnostic only.
inline Eigen::Vector4cd jacobian_eigenvalues(const SystemParams& p, const MeanFieldSolution& s) {
    const std::complex<double> I(0.0, 1.0);
    auto flow = [&](const Eigen::Vector4d& v) {
        const std::complex<double> a(v(0), v(1)), b(v(2), v(3));
        const auto da = -(0.5 * p.kappa - I * p.delta0) * a + I * p.g0 * a * (2.0 * b.real()) + p.epsilon;
        const auto db = -(I * p.omega_m + 0.5 * p.gamma_m) * b + I * p.g0 * std::norm(a);
        return Eigen::Vector4d(da.real(), da.imag(), db.real(), db.imag());
    };
    const Eigen::Vector4d x0(s.a_bar.real(), s.a_bar.imag(), s.b_bar.real(), s.b_bar.imag());
    Eigen::Matrix4d j;
    for (int k = 0; k < 4; ++k) {
        Eigen::Vector4d e = Eigen::Vector4d::Zero();
        const double h = 1e-6 * std::max(1.0, std::abs(x0(k)));
        e(k) = h;
        j.col(k) = (flow(x0 + e) - flow(x0 - e)) / (2.0 * h);
    }
    return Eigen::EigenSolver<Eigen::Matrix4d>(j).eigenvalues();
}

inline bool jacobian_stable(const SystemParams& p, const MeanFieldSolution& s) {
    return jacobian_eigenvalues(p, s).real().maxCoeff() < 0.0;
}

struct BranchRow {
    double delta0 = 0.0;
    std::vector<MeanFieldSolution> solutions;
};

struct BranchSweep {
    std::vector<BranchRow> rows;
    bool bistable = false;
    double window_lo = 0.0, window_hi = 0.0;   // extent of grid points with three roots
};

inline BranchSweep branch_sweep(const SystemParams& p, const std::vector<double>& delta0_grid) {
    if (delta0_grid.empty()) throw Error("meanfield", "empty-grid", "detuning grid is empty");
    BranchSweep sw;
    for (double d : delta0_grid) {
        SystemParams q = p;
        q.delta0 = d;
        BranchRow row{d, solve_branches(q)};
        if (row.solutions.size() == 3) {
            if (!sw.bistable) sw.window_lo = sw.window_hi = d;
            sw.bistable = true;
            sw.window_lo = std::min(sw.window_lo, d);
            sw.window_hi = std::max(sw.window_hi, d);
        }
        sw.rows.push_back(std::move(row));
    }
    return sw;
}

/// Exact edges of the bistable detuning window: the detunings where the
/// middle and an outer root merge. Returns false below threshold.
inline bool bistable_window(const SystemParams& p, double& lo, double& hi) {
    const double chi = kerr_coefficient(p);
    if (chi <= 0.0 || p.epsilon <= 0.0) return false;
    // At a fold, g(n) = eps^2 and g'(n) = 0 where g'(n) is quadratic in
    // u = Delta0 + chi n: (kappa/2)^2 + u^2 + 2 chi n u = 0.
    // Parametrize by n: u = -chi n +- sqrt(chi^2 n^2 - kappa^2/4).
    // Scan n for g(n) = eps^2 on each sign and keep the detunings.
    const double k2 = 0.25 * p.kappa * p.kappa;
    const double n0 = 0.5 * p.kappa / chi;
    std::vector<double> ds;
    for (int sign : {-1, 1}) {
        auto eps2 = [&](double n) {
            const double u = -chi * n + sign * std::sqrt(std::max(0.0, chi * chi * n * n - k2));
            return n * (k2 + u * u) - p.epsilon * p.epsilon;
        };
        auto detuning = [&](double n) {
            const double u = -chi * n + sign * std::sqrt(std::max(0.0, chi * chi * n * n - k2));
            return u - chi * n;
        };
        double prev_n = n0, prev = eps2(n0);
        for (int k = 1; k <= 4000; ++k) {
            const double n = n0 * std::pow(1.0 + 1e-2, k);
            const double v = eps2(n);
            if ((prev < 0.0) != (v < 0.0)) {
                double a = prev_n, b = n;
                for (int it = 0; it < 200; ++it) {
                    const double m = 0.5 * (a + b);
                    if ((eps2(a) < 0.0) == (eps2(m) < 0.0)) a = m; else b = m;
                }
                ds.push_back(detuning(0.5 * (a + b)));
            }
            prev = v;
            prev_n = n;
        }
    }
    if (ds.size() < 2) return false;
    std::sort(ds.begin(), ds.end());
    lo = ds.front();
    hi = ds.back();
    return hi > lo;
}

} // namespace oms
