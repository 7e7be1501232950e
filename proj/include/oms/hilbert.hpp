#pragma once

#include <complex>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "oms/error.hpp"

namespace oms {

using cplx = std::complex<double>;
using SparseOp = Eigen::SparseMatrix<cplx>;
using DenseMat = Eigen::MatrixXcd;
using DenseVec = Eigen::VectorXcd;

/// Truncation of the optical and mechanical Fock spaces. The composite basis
/// index is `i * n_mech + j` for optical level i and mechanical level j, which
/// matches the Kronecker ordering (optical) x (mechanical).
struct HilbertDims {
    int n_cav = 25;
    int n_mech = 12;

    int size() const { return n_cav * n_mech; }
    int index(int i, int j) const { return i * n_mech + j; }
    int optical(int r) const { return r / n_mech; }
    int mechanical(int r) const { return r % n_mech; }

    void validate() const {
        if (n_cav < 2 || n_mech < 2)
            throw Error("hilbert", "invalid-dims",
                        "Fock truncation must keep at least 2 levels per mode (got " +
                            std::to_string(n_cav) + ", " + std::to_string(n_mech) + ")");
    }

    bool operator==(const HilbertDims&) const = default;
};

struct OperatorSet {
    HilbertDims dims;
    SparseOp a, a_dag, b, b_dag;
    SparseOp X;          // a + a_dag
    SparseOp n_cav_op;   // a_dag a
    SparseOp n_mech_op;  // b_dag b
    SparseOp identity;
};

namespace detail {

inline SparseOp ladder(int n) {
    SparseOp m(n, n);
    std::vector<Eigen::Triplet<cplx>> t;
    for (int k = 1; k < n; ++k) t.emplace_back(k - 1, k, std::sqrt(double(k)));
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

inline SparseOp sparse_identity(int n) {
    SparseOp m(n, n);
    m.setIdentity();
    return m;
}

inline SparseOp kron(const SparseOp& x, const SparseOp& y) {
    SparseOp out(x.rows() * y.rows(), x.cols() * y.cols());
    std::vector<Eigen::Triplet<cplx>> t;
    t.reserve(std::size_t(x.nonZeros() * y.nonZeros()));
    for (int kx = 0; kx < x.outerSize(); ++kx)
        for (SparseOp::InnerIterator ix(x, kx); ix; ++ix)
            for (int ky = 0; ky < y.outerSize(); ++ky)
                for (SparseOp::InnerIterator iy(y, ky); iy; ++iy)
                    t.emplace_back(int(ix.row() * y.rows() + iy.row()),
                                   int(ix.col() * y.cols() + iy.col()), ix.value() * iy.value());
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

} // namespace detail

inline OperatorSet build_operators(const HilbertDims& dims) {
    dims.validate();
    const SparseOp id_c = detail::sparse_identity(dims.n_cav);
    const SparseOp id_m = detail::sparse_identity(dims.n_mech);
    OperatorSet ops;
    ops.dims = dims;
    ops.a = detail::kron(detail::ladder(dims.n_cav), id_m);
    ops.b = detail::kron(id_c, detail::ladder(dims.n_mech));
    ops.a_dag = SparseOp(ops.a.adjoint());
    ops.b_dag = SparseOp(ops.b.adjoint());
    ops.X = ops.a + ops.a_dag;
    ops.n_cav_op = ops.a_dag * ops.a;
    ops.n_mech_op = ops.b_dag * ops.b;
    ops.identity = detail::sparse_identity(dims.size());
    return ops;
}

/// Density matrix on the truncated two-mode space.
struct QuantumState {
    DenseMat rho;
    HilbertDims dims;

    QuantumState() = default;
    QuantumState(DenseMat r, HilbertDims d) : rho(std::move(r)), dims(d) {
        if (rho.rows() != dims.size() || rho.cols() != dims.size())
            throw Error("hilbert", "shape", "density matrix does not match Hilbert dims");
    }

    double trace() const { return rho.trace().real(); }

    double hermiticity_error() const { return (rho - rho.adjoint()).cwiseAbs().maxCoeff(); }

    /// Smallest eigenvalue; used as a positivity diagnostic, never enforced.
    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<DenseMat> es(0.5 * (rho + rho.adjoint()), Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }

    static QuantumState pure(const DenseVec& psi, const HilbertDims& dims) {
        const DenseVec v = psi / psi.norm();
        return QuantumState(v * v.adjoint(), dims);
    }

    static QuantumState fock(const HilbertDims& dims, int n_opt, int n_mec) {
        dims.validate();
        if (n_opt < 0 || n_opt >= dims.n_cav || n_mec < 0 || n_mec >= dims.n_mech)
            throw Error("hilbert", "shape", "Fock level outside truncation");
        DenseVec psi = DenseVec::Zero(dims.size());
        psi(dims.index(n_opt, n_mec)) = 1.0;
        return pure(psi, dims);
    }

    static QuantumState vacuum(const HilbertDims& dims) { return fock(dims, 0, 0); }

    /// Product of optical and mechanical coherent states (renormalized after
    /// truncation).
    static QuantumState coherent(const HilbertDims& dims, cplx alpha, cplx beta = 0.0) {
        return pure(coherent_vector(dims, alpha, beta), dims);
    }

    static DenseVec coherent_vector(const HilbertDims& dims, cplx alpha, cplx beta = 0.0) {
        dims.validate();
        auto amplitudes = [](int n, cplx z) {
            std::vector<cplx> c(static_cast<std::size_t>(n));
            c[0] = std::exp(-0.5 * std::norm(z));
            for (int k = 1; k < n; ++k) c[std::size_t(k)] = c[std::size_t(k - 1)] * z / std::sqrt(double(k));
            return c;
        };
        const auto ca = amplitudes(dims.n_cav, alpha);
        const auto cb = amplitudes(dims.n_mech, beta);
        DenseVec psi(dims.size());
        for (int i = 0; i < dims.n_cav; ++i)
            for (int j = 0; j < dims.n_mech; ++j)
                psi(dims.index(i, j)) = ca[std::size_t(i)] * cb[std::size_t(j)];
        return psi / psi.norm();
    }
};

/// Tr[op rho].
inline cplx expectation(const QuantumState& state, const SparseOp& op) {
    if (op.rows() != state.rho.rows() || op.cols() != state.rho.cols())
        throw Error("hilbert", "shape", "operator and state dimensions differ");
    cplx acc = 0.0;
    for (int k = 0; k < op.outerSize(); ++k)
        for (SparseOp::InnerIterator it(op, k); it; ++it) acc += it.value() * state.rho(it.col(), it.row());
    return acc;
}

/// Population of the highest optical and mechanical Fock levels.
struct Leakage {
    double optical = 0.0;
    double mechanical = 0.0;
    double max() const { return std::max(optical, mechanical); }
};

/// Diagonal populations in a column-major density matrix buffer.
inline Leakage leakage_from_diagonal(const HilbertDims& dims, const cplx* rho) {
    const int d = dims.size();
    Leakage l;
    for (int j = 0; j < dims.n_mech; ++j) {
        const int r = dims.index(dims.n_cav - 1, j);
        l.optical += rho[std::size_t(r) * d + r].real();
    }
    for (int i = 0; i < dims.n_cav; ++i) {
        const int r = dims.index(i, dims.n_mech - 1);
        l.mechanical += rho[std::size_t(r) * d + r].real();
    }
    return l;
}

inline Leakage leakage(const QuantumState& s) { return leakage_from_diagonal(s.dims, s.rho.data()); }

inline Leakage leakage_from_vector(const HilbertDims& dims, const cplx* psi) {
    Leakage l;
    for (int j = 0; j < dims.n_mech; ++j) l.optical += std::norm(psi[dims.index(dims.n_cav - 1, j)]);
    for (int i = 0; i < dims.n_cav; ++i) l.mechanical += std::norm(psi[dims.index(i, dims.n_mech - 1)]);
    return l;
}

} // namespace oms
