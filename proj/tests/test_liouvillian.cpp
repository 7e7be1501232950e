#include <catch_amalgamated.hpp>

#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "oms/liouvillian.hpp"
#include "support/reference.hpp"

using namespace oms;
using oms::testing::reference_innovation;
using oms::testing::reference_liouvillian;

namespace {

DenseMat random_density(const HilbertDims& dims, unsigned seed) {
    std::mt19937 gen(seed);
    std::normal_distribution<double> n;
    DenseMat g(dims.size(), dims.size());
    for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) g(i, j) = cplx(n(gen), n(gen));
    DenseMat rho = g * g.adjoint();
    return rho / rho.trace().real();
}

DenseVec random_vector(const HilbertDims& dims, unsigned seed) {
    std::mt19937 gen(seed);
    std::normal_distribution<double> n;
    DenseVec v(dims.size());
    for (int i = 0; i < v.size(); ++i) v(i) = cplx(n(gen), n(gen));
    return v / v.norm();
}

SystemParams odd_params() {
    SystemParams p;
    p.delta0 = -0.7;
    p.omega_m = 3.1;
    p.gamma_m = 0.4;
    p.g0 = 0.35;
    p.epsilon = 0.9;
    p.n_th = 0.3;
    p.kappa = 1.3;
    return p;
}

} // namespace

TEST_CASE("generator kernel matches the operator-algebra oracle", "[liouvillian]") {
    const HilbertDims dims{6, 4};
    const auto ops = build_operators(dims);
    for (const SystemParams& p : {SystemParams{}, odd_params()}) {
        const Liouvillian L(dims, p);
        const DenseMat rho = random_density(dims, 3);
        for (double force : {0.0, 0.17}) {
            const DenseMat ref = reference_liouvillian(ops, p, rho, force);
            CHECK((L.apply(rho, force) - ref).cwiseAbs().maxCoeff() < 1e-12);
        }
        // The kernel is linear and also correct for non-Hermitian input.
        DenseMat m = random_density(dims, 4);
        m(0, 1) += cplx(0.3, 0.2);
        CHECK((L.apply(m) - reference_liouvillian(ops, p, m)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("generator is trace preserving and Hermiticity preserving", "[liouvillian]") {
    const HilbertDims dims{5, 4};
    const Liouvillian L(dims, odd_params());
    const DenseMat rho = random_density(dims, 11);
    const DenseMat d = L.apply(rho, 0.2);
    CHECK(std::abs(d.trace()) < 1e-12);
    CHECK((d - d.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("SME step equals the normalized Euler-Maruyama update", "[liouvillian]") {
    const HilbertDims dims{6, 3};
    const auto ops = build_operators(dims);
    const SystemParams p = odd_params();
    const Liouvillian L(dims, p);
    const DenseMat rho = random_density(dims, 5);
    const double dt = 1e-3, dw = 0.021, force = -0.05;
    DenseMat out(dims.size(), dims.size());
    const auto info = L.sme_step(rho.data(), out.data(), dt, dw, force);
    DenseMat ref = rho + reference_liouvillian(ops, p, rho, force) * dt + reference_innovation(ops, p, rho) * dw;
    CHECK_THAT(info.raw_trace, Catch::Matchers::WithinAbs(ref.trace().real(), 1e-13));
    ref = 0.5 * (ref + ref.adjoint()).eval();
    ref /= ref.trace().real();
    CHECK((out - ref).cwiseAbs().maxCoeff() < 1e-13);
    CHECK_THAT(info.x, Catch::Matchers::WithinAbs((DenseMat(ops.X) * rho).trace().real(), 1e-13));
}

TEST_CASE("split step leaves out exactly the block-diagonal Hamiltonian", "[liouvillian]") {
    const HilbertDims dims{5, 4};
    const auto ops = build_operators(dims);
    const SystemParams p = odd_params();
    const Liouvillian L(dims, p);
    const DenseMat rho = random_density(dims, 8);
    const double dt = 2e-3, dw = -0.03;
    const cplx I(0.0, 1.0);
    const SparseOp h0 = SparseOp(-p.delta0 * ops.n_cav_op) + SparseOp(p.omega_m * ops.n_mech_op) +
                        SparseOp(-p.g0 * (ops.n_cav_op * (ops.b + ops.b_dag)));
    const DenseMat coherent_part = -I * (DenseMat(h0 * rho) - rho * DenseMat(h0));
    DenseMat ref = rho + (reference_liouvillian(ops, p, rho) - coherent_part) * dt + reference_innovation(ops, p, rho) * dw;
    ref = 0.5 * (ref + ref.adjoint()).eval();
    ref /= ref.trace().real();
    DenseMat out(dims.size(), dims.size());
    L.sme_step(rho.data(), out.data(), dt, dw, 0.0, false);
    CHECK((out - ref).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("coherent propagator equals the dense matrix exponential", "[liouvillian]") {
    const HilbertDims dims{7, 5};
    const auto ops = build_operators(dims);
    const SystemParams p = odd_params();
    const double dt = 0.013;
    const cplx I(0.0, 1.0);
    const DenseMat h0 = DenseMat(SparseOp(-p.delta0 * ops.n_cav_op) + SparseOp(p.omega_m * ops.n_mech_op) +
                                 SparseOp(-p.g0 * (ops.n_cav_op * (ops.b + ops.b_dag))));
    const DenseMat u_ref = (DenseMat(-I * dt * h0)).exp();
    const CoherentPropagator u(dims, p, dt);
    CHECK((u.block_diagonal() - u_ref).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((u.block_diagonal() * u.block_diagonal().adjoint() - DenseMat::Identity(dims.size(), dims.size()))
              .cwiseAbs()
              .maxCoeff() < 1e-12);

    DenseVec psi = random_vector(dims, 2);
    const DenseVec psi_ref = u_ref * psi;
    u.apply(psi.data());
    CHECK((psi - psi_ref).cwiseAbs().maxCoeff() < 1e-12);

    DenseMat rho = random_density(dims, 6), scratch(dims.size(), dims.size());
    const DenseMat rho_ref = u_ref * rho * u_ref.adjoint();
    u.conjugate(rho.data(), scratch.data());
    CHECK((rho - rho_ref).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("SSE step equals the normalized state-diffusion update", "[liouvillian]") {
    const HilbertDims dims{6, 4};
    const auto ops = build_operators(dims);
    const SystemParams p = odd_params();
    const Liouvillian L(dims, p);
    const DenseVec psi = random_vector(dims, 9);
    const double dt = 1e-3, dw0 = 0.02, force = 0.07;
    const cplx xi1(0.011, -0.004), xi2(-0.006, 0.013);
    const cplx I(0.0, 1.0);
    const SparseOp h = oms::testing::hamiltonian(ops, p, force);
    const SparseOp c0 = std::sqrt(p.kappa) * ops.a;
    const SparseOp c1 = std::sqrt(p.gamma_m * (p.n_th + 1.0)) * ops.b;
    const SparseOp c2 = std::sqrt(p.gamma_m * p.n_th) * ops.b_dag;
    auto mean = [&](const SparseOp& c) { return cplx(psi.dot(c * psi)); };
    const double m0 = 2.0 * mean(c0).real();
    const cplx b1 = mean(c1), b2 = mean(c2);
    const SparseOp decay = SparseOp(SparseOp(c0.adjoint()) * c0) + SparseOp(SparseOp(c1.adjoint()) * c1) +
                           SparseOp(SparseOp(c2.adjoint()) * c2);
    DenseVec ref = psi + DenseVec(-I * dt * (h * psi)) - 0.5 * dt * DenseVec(decay * psi);
    ref += (0.5 * m0 * dt + dw0) * DenseVec(c0 * psi);
    ref += (std::conj(b1) * dt + xi1) * DenseVec(c1 * psi);
    ref += (std::conj(b2) * dt + xi2) * DenseVec(c2 * psi);
    ref += (-m0 * m0 * dt / 8.0 - 0.5 * m0 * dw0 - 0.5 * (std::norm(b1) + std::norm(b2)) * dt - b1 * xi1 - b2 * xi2) *
           psi;
    ref /= ref.norm();
    DenseVec out(dims.size());
    const auto info = L.sse_step(psi.data(), out.data(), dt, dw0, xi1, xi2, force);
    CHECK((out - ref).cwiseAbs().maxCoeff() < 1e-13);
    CHECK_THAT(info.x, Catch::Matchers::WithinAbs(m0 / std::sqrt(p.kappa), 1e-13));
}
