#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "oms/hilbert.hpp"
#include "oms/params.hpp"

namespace oms {

/// Matrix-free generator of the optomechanical master equation on the
/// truncated space,
///
///   L[rho] = -i[H + H_F(t), rho] + kappa D_a[rho]
///            + (n_th+1) gamma_m D_b[rho] + n_th gamma_m D_{b^dag}[rho],
///   H   = -Delta0 a^dag a - i eps (a - a^dag) + omega_m b^dag b
///         - g0 a^dag a (b + b^dag),
///   H_F = -f(t) (b + b^dag).
///
/// Every operator shifts the composite index by 0, +-1 (mechanical) or
/// +-n_mech (optical), so the generator is applied as a handful of shifted
/// axpy passes on contiguous columns of the column-major density matrix.
/// The same stencil also evaluates the homodyne innovation
/// sqrt(kappa)(a rho + rho a^dag - <X> rho), which shares the optical shift
/// pattern with the drive term.
class Liouvillian {
public:
    Liouvillian(const HilbertDims& dims, const SystemParams& params) : dims_(dims), params_(params) {
        dims_.validate();
        params_.validate();
        const int d = dims_.size();
        const int nc = dims_.n_cav, nm = dims_.n_mech;
        const double kappa = params_.kappa, gm = params_.gamma_m, nth = params_.n_th;
        sa_up_.assign(std::size_t(d), 0.0);
        sa_dn_.assign(std::size_t(d), 0.0);
        sb_up_.assign(std::size_t(d), 0.0);
        sb_dn_.assign(std::size_t(d), 0.0);
        gi_.assign(std::size_t(d), 0.0);
        energy_.assign(std::size_t(d), 0.0);
        half_decay_.assign(std::size_t(d), 0.0);
        opt_.assign(std::size_t(d), 0);
        mec_.assign(std::size_t(d), 0);
        for (int r = 0; r < d; ++r) {
            const int i = dims_.optical(r), j = dims_.mechanical(r);
            opt_[std::size_t(r)] = i;
            mec_[std::size_t(r)] = j;
            sa_up_[std::size_t(r)] = i < nc - 1 ? std::sqrt(double(i + 1)) : 0.0;
            sa_dn_[std::size_t(r)] = std::sqrt(double(i));
            sb_up_[std::size_t(r)] = j < nm - 1 ? std::sqrt(double(j + 1)) : 0.0;
            sb_dn_[std::size_t(r)] = std::sqrt(double(j));
            gi_[std::size_t(r)] = params_.g0 * i;
            energy_[std::size_t(r)] = -params_.delta0 * i + params_.omega_m * j;
            // b b^dag on the truncated space vanishes on the top level.
            const double bbd = j < nm - 1 ? double(j + 1) : 0.0;
            half_decay_[std::size_t(r)] = 0.5 * (kappa * i + gm * (nth + 1.0) * j + gm * nth * bbd);
        }
    }

    const HilbertDims& dims() const { return dims_; }
    const SystemParams& params() const { return params_; }
    int size() const { return dims_.size(); }

    /// out = L[rho] for an arbitrary (not necessarily Hermitian) matrix.
    /// `force` is the instantaneous value f(t) = g1 sin(omega_f t).
    void apply(const cplx* rho, cplx* out, double force = 0.0) const {
        Step s;
        s.identity = 0.0;
        s.h = 1.0;
        const int d = size();
        for (int c = 0; c < d; ++c) column(rho, out, c, d, s, force);
    }

    DenseMat apply(const DenseMat& rho, double force = 0.0) const {
        check_shape(rho);
        DenseMat out(rho.rows(), rho.cols());
        apply(rho.data(), out.data(), force);
        return out;
    }

    /// <a + a^dag> of a column-major density matrix.
    double x_expectation(const cplx* rho) const {
        const int d = size(), nm = dims_.n_mech;
        double acc = 0.0;
        for (int r = 0; r + nm < d; ++r) acc += sa_up_[std::size_t(r)] * rho[std::size_t(r) * d + r + nm].real();
        return 2.0 * acc;
    }

    double trace(const cplx* rho) const {
        const int d = size();
        double acc = 0.0;
        for (int r = 0; r < d; ++r) acc += rho[std::size_t(r) * d + r].real();
        return acc;
    }

    struct SmeStepInfo {
        double x = 0.0;            // <X> of the input state
        double raw_trace = 1.0;    // trace of the update before renormalization
    };

    /// One Euler-Maruyama step of the homodyne SME,
    ///   rho' = rho + L[rho] dt + sqrt(kappa)(a rho + rho a^dag - <X> rho) dW,
    /// followed by Hermitian mirroring and trace renormalization. Only the
    /// upper triangle is computed; the lower one is its conjugate.
    ///
    /// With `coherent = false` the block-diagonal Hamiltonian H0 is left out
    /// of the increment so a caller can propagate it exactly afterwards
    /// (see CoherentPropagator).
    SmeStepInfo sme_step(const cplx* rho, cplx* out, double dt, double dw, double force,
                         bool coherent = true) const {
        SmeStepInfo info;
        info.x = x_expectation(rho);
        Step s;
        s.identity = 1.0;
        s.h = dt;
        s.w = std::sqrt(params_.kappa) * dw;
        s.shift = -s.w * info.x;
        s.coherent = coherent ? 1.0 : 0.0;
        const int d = size();
        for (int c = 0; c < d; ++c) column(rho, out, c, c + 1, s, force);
        info.raw_trace = 0.0;
        for (int c = 0; c < d; ++c) info.raw_trace += out[std::size_t(c) * d + c].real();
        if (info.raw_trace > 0.0) mirror_and_scale(out, 1.0 / info.raw_trace);
        return info;
    }

    struct SseStepInfo {
        double x = 0.0;     // <X> of the input state
        double norm = 1.0;  // norm of the update before renormalization
    };

    /// One Euler-Maruyama step of the normalized stochastic Schroedinger
    /// equation that unravels every dissipative channel: c0 = sqrt(kappa) a
    /// is the homodyne-detected output (real increment dw0); c1 =
    /// sqrt((n_th+1) gamma_m) b and c2 = sqrt(n_th gamma_m) b^dag are the
    /// unobserved baths, unravelled as quantum state diffusion with complex
    /// increments xi1, xi2 (E|xi|^2 = dt, E xi^2 = 0). Averaging over xi at
    /// fixed dw0 reproduces the SME, so the photocurrent has the same law.
    /// State diffusion keeps the mechanical state localized; a homodyne
    /// unravelling of the baths squeezes it along with the optical
    /// position measurement and spreads it over many Fock levels.
    SseStepInfo sse_step(const cplx* psi, cplx* out, double dt, double dw0, cplx xi1, cplx xi2, double force,
                         bool coherent = true) const {
        const double wc = coherent ? 1.0 : 0.0;
        const int d = size(), nm = dims_.n_mech;
        const double kappa = params_.kappa, gm = params_.gamma_m, nth = params_.n_th;
        const double r0 = std::sqrt(kappa), r1 = std::sqrt(gm * (nth + 1.0)), r2 = std::sqrt(gm * nth);
        SseStepInfo info;
        cplx ea = 0.0, eb = 0.0;
        for (int r = 0; r + nm < d; ++r) ea += std::conj(psi[r]) * sa_up_[std::size_t(r)] * psi[r + nm];
        for (int r = 0; r + 1 < d; ++r) eb += std::conj(psi[r]) * sb_up_[std::size_t(r)] * psi[r + 1];
        info.x = 2.0 * ea.real();
        const double m0 = r0 * info.x;
        const cplx b1 = r1 * eb, b2 = r2 * std::conj(eb);   // <c1>, <c2>
        const double ca = r0 * (0.5 * m0 * dt + dw0) - params_.epsilon * dt;
        const double cad = params_.epsilon * dt;
        const cplx cb = r1 * (std::conj(b1) * dt + xi1);
        const cplx cbd = r2 * (std::conj(b2) * dt + xi2);
        const cplx shift = 1.0 - m0 * m0 * dt / 8.0 - 0.5 * m0 * dw0 - 0.5 * (std::norm(b1) + std::norm(b2)) * dt -
                           b1 * xi1 - b2 * xi2;
        for (int r = 0; r < d; ++r) {
            const cplx diag = shift + cplx(-dt * half_decay_[std::size_t(r)], -dt * wc * energy_[std::size_t(r)]);
            out[r] = diag * psi[r];
        }
        for (int r = 0; r + nm < d; ++r) out[r] += (ca * sa_up_[std::size_t(r)]) * psi[r + nm];
        for (int r = nm; r < d; ++r) out[r] += (cad * sa_dn_[std::size_t(r)]) * psi[r - nm];
        for (int r = 0; r + 1 < d; ++r) {
            const double coupling = (wc * gi_[std::size_t(r)] + force) * dt;
            out[r] += (cb + cplx(0.0, coupling)) * sb_up_[std::size_t(r)] * psi[r + 1];
        }
        for (int r = 1; r < d; ++r) {
            const double coupling = (wc * gi_[std::size_t(r)] + force) * dt;
            out[r] += (cbd + cplx(0.0, coupling)) * sb_dn_[std::size_t(r)] * psi[r - 1];
        }
        double nrm = 0.0;
        for (int r = 0; r < d; ++r) nrm += std::norm(out[r]);
        info.norm = std::sqrt(nrm);
        if (info.norm > 0.0) {
            const double inv = 1.0 / info.norm;
            for (int r = 0; r < d; ++r) out[r] *= inv;
        }
        return info;
    }

    double x_expectation_vector(const cplx* psi) const {
        const int d = size(), nm = dims_.n_mech;
        cplx ea = 0.0;
        for (int r = 0; r + nm < d; ++r) ea += std::conj(psi[r]) * sa_up_[std::size_t(r)] * psi[r + nm];
        return 2.0 * ea.real();
    }

private:
    struct Step {
        double identity = 0.0;  // coefficient of rho
        double h = 1.0;         // coefficient of L[rho]
        double w = 0.0;         // sqrt(kappa) dW, innovation weight
        double shift = 0.0;     // extra diagonal term, -w <X>
        double coherent = 1.0;  // weight of the block-diagonal part H0
    };

    void check_shape(const DenseMat& rho) const {
        if (rho.rows() != size() || rho.cols() != size())
            throw Error("master", "shape", "state dimension does not match the generator");
    }

    // Real coefficient array times a shifted column segment.
    static void axpy_real(cplx* out, const double* coef, const cplx* in, int lo, int hi, int shift, double scale) {
        for (int r = lo; r < hi; ++r) out[r] += (scale * coef[r]) * in[r + shift];
    }

    // i * scale * (wg * g[r] + force) * coef[r] * in[r + shift].
    static void axpy_imag(cplx* out, const double* g, double wg, double force, const double* coef, const cplx* in,
                          int lo, int hi, int shift, double scale) {
        double* o = reinterpret_cast<double*>(out);
        const double* x = reinterpret_cast<const double*>(in);
        for (int r = lo; r < hi; ++r) {
            const double k = scale * (wg * g[r] + force) * coef[r];
            const int s = r + shift;
            o[2 * r] -= k * x[2 * s + 1];
            o[2 * r + 1] += k * x[2 * s];
        }
    }

    static void axpy_scalar(cplx* out, cplx k, const cplx* in, int lo, int hi) {
        double* o = reinterpret_cast<double*>(out);
        const double* x = reinterpret_cast<const double*>(in);
        const double kr = k.real(), ki = k.imag();
        for (int r = lo; r < hi; ++r) {
            o[2 * r] += kr * x[2 * r] - ki * x[2 * r + 1];
            o[2 * r + 1] += kr * x[2 * r + 1] + ki * x[2 * r];
        }
    }

    // Rows [0, r_end) of column c of identity*rho + h L[rho] + innovation.
    void column(const cplx* rho, cplx* out, int c, int r_end, const Step& s, double force) const {
        const int d = size(), nm = dims_.n_mech, nc = dims_.n_cav;
        const std::size_t cd = std::size_t(c) * d;
        const cplx* col = rho + cd;
        cplx* o = out + cd;
        const int ic = opt_[std::size_t(c)], jc = mec_[std::size_t(c)];
        const double eps = params_.epsilon, kappa = params_.kappa, gm = params_.gamma_m, nth = params_.n_th;

        {
            double* ov = reinterpret_cast<double*>(o);
            const double* x = reinterpret_cast<const double*>(col);
            const double base = s.identity + s.shift - s.h * half_decay_[std::size_t(c)];
            const double hc = s.h * s.coherent;
            const double ec = energy_[std::size_t(c)];
            for (int r = 0; r < r_end; ++r) {
                const double kr = base - s.h * half_decay_[std::size_t(r)];
                const double ki = hc * (ec - energy_[std::size_t(r)]);
                ov[2 * r] = kr * x[2 * r] - ki * x[2 * r + 1];
                ov[2 * r + 1] = kr * x[2 * r + 1] + ki * x[2 * r];
            }
        }

        // Row stencil: H_eff rho and a rho.
        const double k_a = s.w - s.h * eps;
        axpy_real(o, sa_up_.data(), col, 0, std::min(r_end, d - nm), nm, k_a);
        axpy_real(o, sa_dn_.data(), col, nm, r_end, -nm, s.h * eps);
        axpy_imag(o, gi_.data(), s.coherent, force, sb_up_.data(), col, 0, std::min(r_end, d - 1), 1, s.h);
        axpy_imag(o, gi_.data(), s.coherent, force, sb_dn_.data(), col, 1, r_end, -1, s.h);

        // Column stencil: rho H_eff^dag and rho a^dag.
        if (ic < nc - 1) axpy_scalar(o, cplx(k_a * std::sqrt(double(ic + 1)), 0.0), rho + cd + std::size_t(nm) * d, 0, r_end);
        if (ic > 0) axpy_scalar(o, cplx(s.h * eps * std::sqrt(double(ic)), 0.0), rho + cd - std::size_t(nm) * d, 0, r_end);
        const double gc = s.coherent * params_.g0 * ic + force;
        if (jc < nm - 1) axpy_scalar(o, cplx(0.0, -s.h * gc * std::sqrt(double(jc + 1))), rho + cd + d, 0, r_end);
        if (jc > 0) axpy_scalar(o, cplx(0.0, -s.h * gc * std::sqrt(double(jc))), rho + cd - d, 0, r_end);

        // Jump terms.
        if (ic < nc - 1)
            axpy_real(o, sa_up_.data(), rho + cd + std::size_t(nm) * d, 0, std::min(r_end, d - nm), nm,
                      s.h * kappa * std::sqrt(double(ic + 1)));
        if (gm > 0.0 && jc < nm - 1)
            axpy_real(o, sb_up_.data(), rho + cd + d, 0, std::min(r_end, d - 1), 1,
                      s.h * gm * (nth + 1.0) * std::sqrt(double(jc + 1)));
        if (gm > 0.0 && nth > 0.0 && jc > 0)
            axpy_real(o, sb_dn_.data(), rho + cd - d, 1, r_end, -1, s.h * gm * nth * std::sqrt(double(jc)));
    }

    // Scale the upper triangle and write its conjugate into the lower one.
    void mirror_and_scale(cplx* m, double scale) const {
        const int d = size();
        constexpr int B = 32;
        for (int cb = 0; cb < d; cb += B) {
            const int ce = std::min(d, cb + B);
            for (int rb = 0; rb <= cb; rb += B) {
                const int re = std::min(d, rb + B);
                for (int c = cb; c < ce; ++c) {
                    const int rmax = std::min(re, c);
                    for (int r = rb; r < rmax; ++r) {
                        cplx& u = m[std::size_t(c) * d + r];
                        u *= scale;
                        m[std::size_t(r) * d + c] = std::conj(u);
                    }
                }
            }
        }
        for (int c = 0; c < d; ++c) {
            cplx& diag = m[std::size_t(c) * d + c];
            diag = cplx(diag.real() * scale, 0.0);
        }
    }

    HilbertDims dims_;
    SystemParams params_;
    std::vector<double> sa_up_, sa_dn_, sb_up_, sb_dn_, gi_, energy_, half_decay_;
    std::vector<int> opt_, mec_;
};

/// Exact propagator exp(-i dt H0) of the block-diagonal part
///   H0 = -Delta0 a^dag a + omega_m b^dag b - g0 a^dag a (b + b^dag).
/// H0 conserves the photon number, so it splits into one real symmetric
/// n_mech x n_mech block per optical level (a displaced oscillator). These
/// blocks carry the largest frequencies of the generator; propagating them
/// exactly and leaving the rest to an Euler-Maruyama step removes the
/// explicit-step instability of the plain scheme at practical dt.
class CoherentPropagator {
public:
    CoherentPropagator(const HilbertDims& dims, const SystemParams& params, double dt) : dims_(dims), dt_(dt) {
        dims_.validate();
        const int nm = dims_.n_mech;
        blocks_.reserve(std::size_t(dims_.n_cav));
        for (int i = 0; i < dims_.n_cav; ++i) {
            Eigen::MatrixXd h = Eigen::MatrixXd::Zero(nm, nm);
            for (int j = 0; j < nm; ++j) h(j, j) = -params.delta0 * i + params.omega_m * j;
            for (int j = 0; j + 1 < nm; ++j) h(j, j + 1) = h(j + 1, j) = -params.g0 * i * std::sqrt(double(j + 1));
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
            const Eigen::VectorXcd phase =
                (es.eigenvalues().cast<cplx>() * cplx(0.0, -dt)).array().exp().matrix();
            const DenseMat v = es.eigenvectors().cast<cplx>();
            blocks_.push_back(v * phase.asDiagonal() * v.transpose());
        }
    }

    double dt() const { return dt_; }
    const DenseMat& block(int i) const { return blocks_[std::size_t(i)]; }

    /// psi <- U psi.
    void apply(cplx* psi) const {
        const int nm = dims_.n_mech;
        Eigen::VectorXcd tmp(nm);
        for (int i = 0; i < dims_.n_cav; ++i) {
            Eigen::Map<Eigen::VectorXcd> seg(psi + std::size_t(i) * nm, nm);
            tmp.noalias() = blocks_[std::size_t(i)] * seg;
            seg = tmp;
        }
    }

    /// rho <- U rho U^dag on a column-major buffer; `scratch` holds d*d values.
    void conjugate(cplx* rho, cplx* scratch) const {
        const int d = dims_.size(), nm = dims_.n_mech;
        Eigen::Map<DenseMat> r(rho, d, d), m(scratch, d, d);
        for (int i = 0; i < dims_.n_cav; ++i)
            m.middleRows(i * nm, nm).noalias() = blocks_[std::size_t(i)] * r.middleRows(i * nm, nm);
        for (int j = 0; j < dims_.n_cav; ++j)
            r.middleCols(j * nm, nm).noalias() = m.middleCols(j * nm, nm) * blocks_[std::size_t(j)].adjoint();
    }

    DenseMat block_diagonal() const {
        const int d = dims_.size(), nm = dims_.n_mech;
        DenseMat u = DenseMat::Zero(d, d);
        for (int i = 0; i < dims_.n_cav; ++i) u.block(i * nm, i * nm, nm, nm) = blocks_[std::size_t(i)];
        return u;
    }

private:
    HilbertDims dims_;
    double dt_;
    std::vector<DenseMat> blocks_;
};

} // namespace oms
