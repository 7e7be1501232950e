#include <catch_amalgamated.hpp>

#include "oms/hilbert.hpp"
#include "oms/rng.hpp"

using namespace oms;
using Catch::Matchers::WithinAbs;

TEST_CASE("ladder operators have sqrt(k) matrix elements", "[hilbert]") {
    const HilbertDims dims{6, 4};
    const auto ops = build_operators(dims);
    const DenseMat a = ops.a, b = ops.b;
    for (int i = 1; i < dims.n_cav; ++i)
        for (int j = 0; j < dims.n_mech; ++j)
            CHECK_THAT(a(dims.index(i - 1, j), dims.index(i, j)).real(), WithinAbs(std::sqrt(double(i)), 1e-14));
    for (int i = 0; i < dims.n_cav; ++i)
        for (int j = 1; j < dims.n_mech; ++j)
            CHECK_THAT(b(dims.index(i, j - 1), dims.index(i, j)).real(), WithinAbs(std::sqrt(double(j)), 1e-14));
    CHECK((a.array() != cplx(0.0)).count() == (dims.n_cav - 1) * dims.n_mech);
}

TEST_CASE("operator set identities", "[hilbert]") {
    const HilbertDims dims{5, 3};
    const auto ops = build_operators(dims);
    const DenseMat a = ops.a, ad = ops.a_dag, b = ops.b, bd = ops.b_dag, x = ops.X;
    CHECK((ad - a.adjoint()).norm() < 1e-15);
    CHECK((bd - b.adjoint()).norm() < 1e-15);
    CHECK((x - x.adjoint()).norm() < 1e-15);
    CHECK((DenseMat(ops.n_cav_op) - ad * a).norm() < 1e-14);
    // Modes commute.
    CHECK((a * b - b * a).norm() < 1e-14);
    CHECK((a * bd - bd * a).norm() < 1e-14);
    // [a, a^dag] = 1 away from the truncation edge.
    const DenseMat comm = a * ad - ad * a;
    for (int i = 0; i + 1 < dims.n_cav; ++i)
        for (int j = 0; j < dims.n_mech; ++j) {
            const int r = dims.index(i, j);
            CHECK_THAT(comm(r, r).real(), WithinAbs(1.0, 1e-14));
        }
}

TEST_CASE("dims validation", "[hilbert]") {
    CHECK_THROWS_AS(build_operators(HilbertDims{1, 4}), Error);
    CHECK_THROWS_AS(build_operators(HilbertDims{4, 1}), Error);
    try {
        HilbertDims{0, 3}.validate();
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.module() == "hilbert");
        CHECK(e.code() == "invalid-dims");
    }
}

TEST_CASE("coherent state expectations", "[hilbert]") {
    const HilbertDims dims{30, 10};
    const auto ops = build_operators(dims);
    const cplx alpha(1.2, -0.4), beta(0.3, 0.5);
    const auto s = QuantumState::coherent(dims, alpha, beta);
    CHECK_THAT(s.trace(), WithinAbs(1.0, 1e-12));
    CHECK(s.hermiticity_error() < 1e-14);
    CHECK_THAT(expectation(s, ops.X).real(), WithinAbs(2.0 * alpha.real(), 1e-10));
    CHECK_THAT(expectation(s, ops.n_cav_op).real(), WithinAbs(std::norm(alpha), 1e-10));
    CHECK_THAT(expectation(s, ops.n_mech_op).real(), WithinAbs(std::norm(beta), 1e-8));
    // Normally ordered variance of X vanishes for a coherent state.
    const double x = expectation(s, ops.X).real();
    const SparseOp x2 = ops.X * ops.X;
    CHECK_THAT(expectation(s, x2).real() - x * x - 1.0, WithinAbs(0.0, 1e-9));
    CHECK(s.min_eigenvalue() > -1e-12);
}

TEST_CASE("fock state and leakage", "[hilbert]") {
    const HilbertDims dims{4, 3};
    const auto ops = build_operators(dims);
    const auto s = QuantumState::fock(dims, 3, 1);
    CHECK_THAT(expectation(s, ops.n_cav_op).real(), WithinAbs(3.0, 1e-14));
    CHECK_THAT(expectation(s, ops.n_mech_op).real(), WithinAbs(1.0, 1e-14));
    const auto l = leakage(s);
    CHECK_THAT(l.optical, WithinAbs(1.0, 1e-14));
    CHECK_THAT(l.mechanical, WithinAbs(0.0, 1e-14));
    CHECK_THROWS_AS(QuantumState::fock(dims, 4, 0), Error);
    DenseVec psi = DenseVec::Zero(dims.size());
    psi(dims.index(0, 2)) = 1.0;
    CHECK_THAT(leakage_from_vector(dims, psi.data()).mechanical, WithinAbs(1.0, 1e-14));
    CHECK_THROWS_AS(expectation(QuantumState::vacuum(HilbertDims{3, 3}), ops.X), Error);
}

TEST_CASE("counter-based normals are reproducible and standard", "[hilbert][rng]") {
    const NormalStream a(42), b(42), c(43);
    CHECK(a(0, 17) == b(0, 17));
    CHECK(a(1, 17) != a(0, 17));
    CHECK(a(0, 17) != c(0, 17));
    double s = 0, s2 = 0, s4 = 0;
    const int n = 400000;
    for (int k = 0; k < n; ++k) {
        const double z = a(0, std::uint64_t(k));
        s += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    CHECK(std::abs(s / n) < 5.0 / std::sqrt(double(n)));
    CHECK(std::abs(s2 / n - 1.0) < 5.0 * std::sqrt(2.0 / n));
    CHECK(std::abs(s4 / n - 3.0) < 5.0 * std::sqrt(96.0 / n));
}

TEST_CASE("wiener substeps share the fine path", "[hilbert][rng]") {
    const WienerSource fine(9, 1), coarse(9, 2);
    const double dt = 1e-3;
    for (std::uint64_t k = 0; k < 100; ++k) {
        const double sum = fine.increment(0, 2 * k, dt / 2) + fine.increment(0, 2 * k + 1, dt / 2);
        CHECK_THAT(coarse.increment(0, k, dt), WithinAbs(sum, 1e-15));
    }
}
