#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/UmfPackSupport>
#include <unsupported/Eigen/IterativeSolvers>

#include "oms/error.hpp"
#include "oms/hilbert.hpp"
#include "oms/liouvillian.hpp"
#include "oms/meanfield.hpp"
#include "oms/params.hpp"

namespace oms {

/// Trace norm of a Hermitian matrix (sum of absolute eigenvalues).
inline double trace_norm_hermitian(const DenseMat& m) {
    Eigen::SelfAdjointEigenSolver<DenseMat> es(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().sum();
}

/// Largest step the fixed-step QME integrator accepts by default.
inline double default_qme_dt(const SystemParams& p) { return 1e-2 * std::min(1.0, 1.0 / p.omega_m); }

/// Fourth-order Runge-Kutta integration of the unconditional master
/// equation. A periodic force is evaluated at the RK stage times.
inline QuantumState propagate_qme(const QuantumState& state0, const SystemParams& params, double t_final,
                                  double dt, const ForceParams& force = {}, double t0 = 0.0) {
    if (!(dt > 0.0) || !(t_final >= 0.0))
        throw Error("master", "step-size", "dt must be > 0 and t_final >= 0");
    force.validate();
    const Liouvillian L(state0.dims, params);
    const int d = state0.dims.size();
    DenseMat rho = state0.rho, k1(d, d), k2(d, d), k3(d, d), k4(d, d), tmp(d, d);
    const long steps = std::lround(std::ceil(t_final / dt - 1e-9));
    const double h = steps > 0 ? t_final / double(steps) : 0.0;
    const double tr0 = rho.trace().real();
    double t = t0;
    for (long k = 0; k < steps; ++k) {
        L.apply(rho.data(), k1.data(), force.value(t));
        tmp = rho + 0.5 * h * k1;
        L.apply(tmp.data(), k2.data(), force.value(t + 0.5 * h));
        tmp = rho + 0.5 * h * k2;
        L.apply(tmp.data(), k3.data(), force.value(t + 0.5 * h));
        tmp = rho + h * k3;
        L.apply(tmp.data(), k4.data(), force.value(t + h));
        rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t = t0 + double(k + 1) * h;
        if ((k & 1023) == 1023 || k + 1 == steps) {
            const double drift = std::abs(rho.trace().real() - tr0);
            if (!std::isfinite(drift) || drift > 1e-6)
                throw Error("master", "step-size",
                            "trace drift " + std::to_string(drift) + " exceeds 1e-6; reduce dt");
        }
    }
    return QuantumState(std::move(rho), state0.dims);
}

/// Sparse superoperator acting on the column-major vectorization of rho,
/// using vec(A rho B) = (B^T kron A) vec(rho).
inline Eigen::SparseMatrix<cplx> superoperator(const HilbertDims& dims, const SystemParams& p) {
    const OperatorSet ops = build_operators(dims);
    const cplx I(0.0, 1.0);
    const SparseOp q = ops.b + ops.b_dag;
    SparseOp h = SparseOp(-p.delta0 * ops.n_cav_op) + SparseOp(p.omega_m * ops.n_mech_op);
    h += SparseOp(-I * p.epsilon * (ops.a - ops.a_dag));
    h += SparseOp(-p.g0 * (ops.n_cav_op * q));
    const SparseOp& id = ops.identity;
    auto tr = [](const SparseOp& m) { return SparseOp(m.transpose()); };
    auto conj = [](const SparseOp& m) { return SparseOp(m.conjugate()); };
    Eigen::SparseMatrix<cplx> s = -I * (detail::kron(id, h) - detail::kron(tr(h), id));
    auto add_dissipator = [&](const SparseOp& c, double rate) {
        if (rate == 0.0) return;
        const SparseOp cd = SparseOp(c.adjoint());
        const SparseOp cdc = cd * c;
        s += rate * (detail::kron(conj(c), c) - 0.5 * detail::kron(id, cdc) - 0.5 * detail::kron(tr(cdc), id));
    };
    add_dissipator(ops.a, p.kappa);
    add_dissipator(ops.b, (p.n_th + 1.0) * p.gamma_m);
    add_dissipator(ops.b_dag, p.n_th * p.gamma_m);
    s.makeCompressed();
    return s;
}

struct SteadyStateMoments {
    double x_mean = 0.0;
    double var_normal = 0.0;     // <X^2> - <X>^2 - 1
    double n_phot_mean = 0.0;
    double n_mech_mean = 0.0;
    std::optional<double> dx_ddelta0;
    double delta_step = 0.0;     // finite-difference step used for dx_ddelta0
    double leakage = 0.0;
    double residual = 0.0;       // trace norm of L[rho_ss]
    std::string method;
};

enum class SteadyStateMethod { krylov, direct, propagate };

struct SteadyStateOptions {
    SteadyStateMethod method = SteadyStateMethod::krylov;
    double tolerance = 1e-8;     // on the trace norm of L[rho]
    double time_budget = 2000.0; // propagation only
    double dt = 0.0;             // propagation only; 0 selects default_qme_dt
};

inline SteadyStateMoments moments_of(const QuantumState& s) {
    const OperatorSet ops = build_operators(s.dims);
    SteadyStateMoments m;
    m.x_mean = expectation(s, ops.X).real();
    const SparseOp x2 = ops.X * ops.X;
    m.var_normal = expectation(s, x2).real() - m.x_mean * m.x_mean - 1.0;
    m.n_phot_mean = expectation(s, ops.n_cav_op).real();
    m.n_mech_mean = expectation(s, ops.n_mech_op).real();
    m.leakage = leakage(s).max();
    return m;
}

namespace detail {

// Generator with its first row (the (0,0) component of d rho/dt, redundant
// by trace preservation) replaced by the normalization Tr rho = 1.
template <class Index>
Eigen::SparseMatrix<cplx, Eigen::ColMajor, Index> normalized_generator(const HilbertDims& dims,
                                                                        const SystemParams& p) {
    const Eigen::SparseMatrix<cplx, Eigen::RowMajor> rows(superoperator(dims, p));
    const int d = dims.size();
    const long n = long(d) * d;
    std::vector<Eigen::Triplet<cplx, Index>> t;
    t.reserve(std::size_t(rows.nonZeros() + d));
    for (int k = 1; k < rows.outerSize(); ++k)
        for (Eigen::SparseMatrix<cplx, Eigen::RowMajor>::InnerIterator it(rows, k); it; ++it)
            t.emplace_back(Index(it.row()), Index(it.col()), it.value());
    for (int r = 0; r < d; ++r) t.emplace_back(0, Index(r) * d + r, 1.0);
    Eigen::SparseMatrix<cplx, Eigen::ColMajor, Index> a(n, n);
    a.setFromTriplets(t.begin(), t.end());
    a.makeCompressed();
    return a;
}

inline QuantumState density_from_vector(Eigen::VectorXcd& v, const HilbertDims& dims) {
    const int d = dims.size();
    DenseMat rho = Eigen::Map<DenseMat>(v.data(), d, d);
    rho = 0.5 * (rho + rho.adjoint()).eval();
    rho /= rho.trace().real();
    return QuantumState(std::move(rho), dims);
}

inline QuantumState steady_direct(const HilbertDims& dims, const SystemParams& p) {
    // 64-bit indices: the LU factors outgrow the 32-bit UMFPACK workspace
    // quickly. Memory still grows steeply; past about (20, 10) use krylov.
    using LongSparse = Eigen::SparseMatrix<cplx, Eigen::ColMajor, SuiteSparse_long>;
    const LongSparse a = normalized_generator<SuiteSparse_long>(dims, p);
    Eigen::UmfPackLU<LongSparse> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success)
        throw ConvergenceError("master", "sparse LU factorization of the generator failed", 0.0);
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(a.rows());
    rhs(0) = 1.0;
    Eigen::VectorXcd v = lu.solve(rhs);
    const Eigen::VectorXcd r = rhs - a * v;
    v += lu.solve(r);
    return density_from_vector(v, dims);
}

// Restarted GMRES on the normalized generator, preconditioned by an
// incomplete LU factorization with threshold dropping.
inline QuantumState steady_krylov(const HilbertDims& dims, const SystemParams& p) {
    using Sparse = Eigen::SparseMatrix<cplx>;
    const Sparse a = normalized_generator<int>(dims, p);
    Eigen::GMRES<Sparse, Eigen::IncompleteLUT<cplx>> solver;
    solver.preconditioner().setDroptol(1e-3);
    solver.preconditioner().setFillfactor(10);
    solver.set_restart(200);
    solver.setMaxIterations(4000);
    solver.setTolerance(1e-13);
    solver.compute(a);
    if (solver.info() != Eigen::Success)
        throw ConvergenceError("master", "incomplete LU preconditioner failed", 0.0);
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(a.rows());
    rhs(0) = 1.0;
    Eigen::VectorXcd v = solver.solve(rhs);
    return density_from_vector(v, dims);
}

inline QuantumState steady_propagate(const HilbertDims& dims, const SystemParams& p, const SteadyStateOptions& o,
                                     double& residual) {
    const Liouvillian L(dims, p);
    const double dt = o.dt > 0.0 ? o.dt : default_qme_dt(p);
    // Start from the lower mean-field branch as a coherent product state.
    const auto branches = solve_branches(p);
    QuantumState s = QuantumState::coherent(dims, branches.front().a_bar, branches.front().b_bar);
    const double chunk = 10.0;
    double t = 0.0;
    DenseMat dr(dims.size(), dims.size());
    residual = 0.0;
    while (true) {
        L.apply(s.rho.data(), dr.data());
        residual = trace_norm_hermitian(dr);
        if (residual < o.tolerance) return s;
        if (t >= o.time_budget)
            throw ConvergenceError("master",
                                   "steady state not reached within the time budget (residual " +
                                       std::to_string(residual) + ")",
                                   residual);
        s = propagate_qme(s, p, chunk, dt);
        t += chunk;
    }
}

} // namespace detail

inline SteadyStateMoments steady_state(const SystemParams& p, const HilbertDims& dims,
                                       const SteadyStateOptions& o = {}, QuantumState* state_out = nullptr) {
    p.validate();
    dims.validate();
    QuantumState s;
    double residual = 0.0;
    std::string method;
    if (o.method != SteadyStateMethod::propagate) {
        s = o.method == SteadyStateMethod::direct ? detail::steady_direct(dims, p) : detail::steady_krylov(dims, p);
        DenseMat dr(dims.size(), dims.size());
        Liouvillian(dims, p).apply(s.rho.data(), dr.data());
        residual = trace_norm_hermitian(dr);
        if (!(residual < o.tolerance))
            throw ConvergenceError("master", "steady-state solve residual " + std::to_string(residual) +
                                                 " above tolerance",
                                   residual);
        method = o.method == SteadyStateMethod::direct ? "sparse-lu" : "gmres-ilut";
    } else {
        s = detail::steady_propagate(dims, p, o, residual);
        method = "propagation";
    }
    SteadyStateMoments m = moments_of(s);
    m.residual = residual;
    m.method = method;
    if (state_out) *state_out = std::move(s);
    return m;
}

/// Central difference of <X>_ss over Delta0 +- delta_step.
inline double detuning_derivative(const SystemParams& p, const HilbertDims& dims, double delta_step = 0.01,
                                  const SteadyStateOptions& o = {}) {
    if (!(delta_step > 0.0)) throw Error("master", "invalid-step", "delta_step must be > 0");
    SystemParams up = p, dn = p;
    up.delta0 += delta_step;
    dn.delta0 -= delta_step;
    return (steady_state(up, dims, o).x_mean - steady_state(dn, dims, o).x_mean) / (2.0 * delta_step);
}

} // namespace oms
