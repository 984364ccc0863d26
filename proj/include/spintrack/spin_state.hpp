#pragma once

#include <string>
#include <vector>

#include "spintrack/linalg.hpp"

namespace spintrack {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Gaussian approximation of the collective spin: mean 3-vector, 3x3
/// covariance (spin^2 units, hbar = 1), surviving effective atom number.
struct GaussianSpinState {
    Vec3 mean;
    Mat3 cov;
    double atoms = 0.0;
    double time_us = 0.0;
};

struct ProbeCoupling {
    double g = 6.5e-7;         // rad per unit spin
    double photons_v = 2.74e6;
    double photons_h = 1.49e6;
    double eta = 3e-10;        // scattering probability per photon
    double p_return = 0.7;     // fraction of scattered atoms returning to F=1
};

struct CoherentSpinStateSpec {
    double atoms_mean = 1.88e6;
    bool atoms_poisson = true;
    double pump_efficiency = 0.98;
};

GaussianSpinState make_css(const CoherentSpinStateSpec& spec, double atoms_draw);

/// Rotation about x with Fz(t) = Fz cos(a) - Fy sin(a), Fy(t) = Fy cos(a) + Fz sin(a).
GaussianSpinState precess(const GaussianSpinState& state, double angle);

struct QndUpdate {
    GaussianSpinState state;
    double readout_var_fz;  // 1/(2 g^2 |<Sx>|), spin^2 units
};

/// Deterministic part of one V-pulse QND measurement: exact pooled
/// conditioning of the covariance plus the O(g^2) back-action terms.
QndUpdate qnd_update(const GaussianSpinState& state, const ProbeCoupling& coupling);

/// Off-resonant scattering over one pulse of `photons_this_step` photons.
GaussianSpinState scatter_channel(const GaussianSpinState& state,
                                  const ProbeCoupling& coupling,
                                  double photons_this_step);

struct Violation {
    enum class Kind { not_symmetric, not_psd, robertson, mean_exceeds_atoms, negative_atoms };
    Kind kind;
    double magnitude;
    std::string detail;
};

std::vector<Violation> check_state(const GaussianSpinState& state);

}  // namespace spintrack
