#pragma once

#include <cstdint>
#include <vector>

#include "spintrack/rng.hpp"
#include "spintrack/spin_state.hpp"

namespace spintrack {

struct PulseTrainConfig {
    ProbeCoupling coupling;
    double pulse_interval_us = 3.0;
    int pulse_count = 334;
    double larmor_omega = 0.16534698176788384;  // 2*pi / 38 us
    double t2_gradient_us = 1500.0;
    double omega_jitter_rms = 5e-5;             // rad/us, per trace
    double phi0_offset = 0.0;
    double phi0_drift_rms = 1e-4;               // rad, per trace
    double readout_imbalance_noise = 3.6e-3;    // extra noise std = c*|<phi>|
    double readout_efficiency = 1.0;            // multiplier on shot variance
    CoherentSpinStateSpec css;
    std::uint64_t seed = 1;
    bool deterministic = false;                 // emit the mean record (oracle aid)
};

struct TruthSample {
    double fy, fz, atoms;
};

struct MeasurementTrace {
    std::vector<double> times;   // us, uniform grid from 0
    std::vector<double> angles;  // rad
    std::vector<TruthSample> truth;  // empty when not recorded
    double atoms_draw = 0.0;
    double omega_draw = 0.0;
    double phi0_draw = 0.0;
};

/// One repetition: per-pulse [sample + condition + back-action, scatter V,
/// scatter H, precess, dephase], record anchored at the first pulse (t = 0).
MeasurementTrace simulate_trace(const PulseTrainConfig& cfg, std::uint64_t trace_seed,
                                bool record_truth = true);
inline MeasurementTrace simulate_trace(const PulseTrainConfig& cfg) {
    return simulate_trace(cfg, cfg.seed);
}

std::vector<MeasurementTrace> simulate_ensemble(const PulseTrainConfig& cfg,
                                                int repetitions, int jobs = 1,
                                                bool record_truth = true);

/// arcsin estimator of the rotation angle from the measured Stokes pair.
double polarimeter_estimate(double phi_true, double sx, double sy_noise,
                            bool* clamped = nullptr);

struct PolarimeterSample {
    double phi_hat;
    bool clamped;
};
PolarimeterSample polarimeter_roundtrip(double phi_true, double photons, Rng& rng);

/// Mean loss factor of atoms per pulse interval (one V plus one H pulse).
double atom_survival_per_interval(const ProbeCoupling& c);

}  // namespace spintrack
