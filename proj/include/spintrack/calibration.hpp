#pragma once

#include <cstdint>
#include <span>
#include <utility>

#include "spintrack/spin_state.hpp"

namespace spintrack {

struct StroboscopicConfig {
    int n_pulses = 36;
    double photons = 3.15e7;   // N_L per pulse
    double chi = 0.99;         // coherent survival per pulse
    double p_return = 0.7;
    double g = 7.07e-8;
    double atoms = 1.88e6;
};

struct AlphaResult {
    double beta;
    double alpha;  // = 8 * beta
};

/// Stroboscopic covariance propagation of {Fz, Sy_1..Sy_Np}; extracts the
/// scattering noise-reduction factor from the alternating pulse-train sum.
AlphaResult compute_alpha(const StroboscopicConfig& cfg);

struct LineFit {
    double slope, intercept;
    double slope_se, intercept_se;
};

/// Ordinary least squares of Phi = a0 + mu1 * N_A.
LineFit fit_mu1(std::span<const std::pair<double, double>> points);

struct Mu2Fit {
    double mu2;
    double a0, a1, a2;
    double a0_se, a1_se, a2_se, mu2_se;
    bool a1_negative = false;
};

/// Quadratic least squares var(phi) = a0 + a1 N_A + a2 N_A^2; mu2 = 2 a1 / alpha.
Mu2Fit fit_mu2(std::span<const std::pair<double, double>> points, double alpha);

struct CloudSpec {
    double lorentz_fwhm_um = 4000.0;  // axial FWHM
    double radial_sigma_um = 33.0;
};

struct BeamSpec {
    double waist_um = 60.0;
    double wavelength_um = 0.780;
};

struct MomentsResult {
    double mu1, mu2, v2;
    double mu1_se, mu2_se;
};

/// Monte Carlo moments of the position-dependent coupling g(x) over the
/// cloud; g_peak is the on-axis coupling at the beam waist.
MomentsResult coupling_moments(const CloudSpec& cloud, const BeamSpec& beam,
                               std::int64_t samples, std::uint64_t seed,
                               double g_peak = 1.0, int jobs = 1);

/// Coupling at (r, z) for a Gaussian beam, relative to the waist axis value.
double beam_coupling(const BeamSpec& beam, double r_um, double z_um);

}  // namespace spintrack
