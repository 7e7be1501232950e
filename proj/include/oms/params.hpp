#pragma once

#include <cmath>
#include <string>

#include "oms/error.hpp"

namespace oms {

/// Physical parameters of the driven optomechanical system. All rates are in
/// units of the cavity linewidth, so kappa is 1 unless a caller changes it.
struct SystemParams {
    double delta0 = -1.45;               // drive detuning from the cavity
    double omega_m = 5.0;                // mechanical frequency
    double gamma_m = 0.5;                // mechanical damping
    double g0 = 0.70710678118654752;     // single-photon coupling, 1/sqrt(2)
    double epsilon = 1.5;                // drive amplitude
    double n_th = 0.0;                   // thermal phonon occupation
    double kappa = 1.0;

    void validate() const {
        auto bad = [](const char* what) {
            throw Error("meanfield", "invalid-params", std::string("invalid parameter: ") + what);
        };
        if (!std::isfinite(delta0)) bad("delta0 must be finite");
        if (!(omega_m > 0.0)) bad("omega_m must be > 0");
        if (!(gamma_m >= 0.0)) bad("gamma_m must be >= 0");
        if (!(epsilon >= 0.0)) bad("epsilon must be >= 0");
        if (!(g0 >= 0.0)) bad("g0 must be >= 0");
        if (!(n_th >= 0.0)) bad("n_th must be >= 0");
        if (!(kappa > 0.0)) bad("kappa must be > 0");
    }
};

/// Periodic force -g1 sin(omega_f t)(b + b^dag) on the mechanical resonator.
struct ForceParams {
    double g1 = 0.0;
    double omega_f = 0.0;

    bool active() const { return g1 != 0.0; }

    double value(double t) const { return active() ? g1 * std::sin(omega_f * t) : 0.0; }

    void validate() const {
        if (!(g1 >= 0.0))
            throw Error("trajectory", "invalid-force", "force amplitude g1 must be >= 0");
        if (g1 > 0.0 && !(omega_f > 0.0))
            throw Error("trajectory", "invalid-force", "force frequency must be > 0 when g1 > 0");
    }
};

} // namespace oms
