#pragma once

// Straightforward operator-algebra evaluation of the master-equation
// generator, used only as an independent oracle for the stencil kernel.

#include "oms/hilbert.hpp"
#include "oms/params.hpp"

namespace oms::testing {

inline DenseMat dissipator(const SparseOp& c, const DenseMat& rho) {
    const SparseOp cd = SparseOp(c.adjoint());
    const SparseOp cdc = cd * c;
    DenseMat crho = c * rho;
    return DenseMat(crho * DenseMat(cd)) - 0.5 * (DenseMat(cdc * rho) + DenseMat(rho * DenseMat(cdc)));
}

inline SparseOp hamiltonian(const OperatorSet& ops, const SystemParams& p, double force) {
    const cplx I(0.0, 1.0);
    SparseOp h = SparseOp(-p.delta0 * ops.n_cav_op) + SparseOp(p.omega_m * ops.n_mech_op);
    h += SparseOp(-I * p.epsilon * (ops.a - ops.a_dag));
    const SparseOp q = ops.b + ops.b_dag;
    h += SparseOp(-p.g0 * (ops.n_cav_op * q));
    h += SparseOp(-force * q);
    return h;
}

inline DenseMat reference_liouvillian(const OperatorSet& ops, const SystemParams& p, const DenseMat& rho,
                                      double force = 0.0) {
    const cplx I(0.0, 1.0);
    const SparseOp h = hamiltonian(ops, p, force);
    DenseMat out = -I * (DenseMat(h * rho) - DenseMat(rho * DenseMat(h)));
    out += p.kappa * dissipator(ops.a, rho);
    out += (p.n_th + 1.0) * p.gamma_m * dissipator(ops.b, rho);
    if (p.n_th > 0.0) out += p.n_th * p.gamma_m * dissipator(ops.b_dag, rho);
    return out;
}

inline DenseMat reference_innovation(const OperatorSet& ops, const SystemParams& p, const DenseMat& rho) {
    const DenseMat arho = ops.a * rho;
    const cplx x = (ops.X * rho).trace();
    return std::sqrt(p.kappa) * (arho + arho.adjoint() - x.real() * rho);
}

} // namespace oms::testing
