#include "spintrack/trajectory.hpp"

#include <cmath>
#include <sstream>
#include <thread>

namespace spintrack {

double atom_survival_per_interval(const ProbeCoupling& c) {
    double chi_v = std::exp(-c.eta * c.photons_v);
    double chi_h = std::exp(-c.eta * c.photons_h);
    double p = c.p_return;
    return (chi_v + p - chi_v * p) * (chi_h + p - chi_h * p);
}

MeasurementTrace simulate_trace(const PulseTrainConfig& cfg, std::uint64_t trace_seed,
                                bool record_truth) {
    if (cfg.pulse_interval_us <= 0.0 || cfg.pulse_count < 1 || cfg.t2_gradient_us <= 0.0)
        throw Error("simulate_trace: invalid pulse train configuration");

    Rng rng(trace_seed);
    const ProbeCoupling& cp = cfg.coupling;
    double g = cp.g;
    double sx = cp.photons_v / 2.0;
    double shot = sx > 0.0 ? cfg.readout_efficiency / (2.0 * sx) : 0.0;

    double atoms_draw = cfg.css.atoms_mean;
    if (cfg.css.atoms_poisson && !cfg.deterministic)
        atoms_draw = static_cast<double>(rng.poisson(cfg.css.atoms_mean));
    double omega = cfg.larmor_omega;
    double phi0 = cfg.phi0_offset;
    if (!cfg.deterministic) {
        omega += rng.normal(0.0, cfg.omega_jitter_rms);
        phi0 += rng.normal(0.0, cfg.phi0_drift_rms);
    }

    GaussianSpinState state = make_css(cfg.css, atoms_draw);

    MeasurementTrace trace;
    trace.atoms_draw = atoms_draw;
    trace.omega_draw = omega;
    trace.phi0_draw = phi0;
    trace.times.resize(cfg.pulse_count);
    trace.angles.resize(cfg.pulse_count);
    if (record_truth)
        trace.truth.resize(cfg.pulse_count);

    double dt = cfg.pulse_interval_us;
    double dephase = std::exp(-dt / cfg.t2_gradient_us);

    for (int k = 0; k < cfg.pulse_count; ++k) {
        double t = k * dt;
        trace.times[k] = t;
        if (record_truth)
            trace.truth[k] = {state.mean.y, state.mean.z, state.atoms};

        double phi_mean = g * state.mean.z + phi0;
        double tech_var = cfg.readout_imbalance_noise * phi_mean;
        tech_var *= tech_var;
        double noise_var = shot + tech_var;
        double var_phi = g * g * state.cov.m[2][2] + noise_var;
        double phi_k = cfg.deterministic
                           ? phi_mean
                           : phi_mean + rng.normal() * std::sqrt(var_phi);
        trace.angles[k] = phi_k;

        if (sx > 0.0) {
            // Condition the Gaussian state on the sampled outcome.
            double r_spin = noise_var / (g * g);  // readout variance in spin units
            double s_total = state.cov.m[2][2] + r_spin;
            if (s_total > 0.0) {
                double nu = (phi_k - phi_mean) / g;  // innovation, spin units
                double col[3] = {state.cov.m[0][2], state.cov.m[1][2], state.cov.m[2][2]};
                state.mean.x += col[0] / s_total * nu;
                state.mean.y += col[1] / s_total * nu;
                state.mean.z += col[2] / s_total * nu;
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j)
                        state.cov.m[i][j] -= col[i] * col[j] / s_total;
            }
            // Back-action of the pulse.
            double kappa = g * g * sx;
            double fy2 = state.cov.m[1][1] + state.mean.y * state.mean.y;
            double fx2 = state.cov.m[0][0] + state.mean.x * state.mean.x;
            state.cov.m[0][0] += kappa * (-0.5 * state.cov.m[0][0] + 0.5 * fy2);
            state.cov.m[1][1] += kappa * (-0.5 * state.cov.m[1][1] + 0.5 * fx2);
            state.cov.m[0][1] -= kappa * state.cov.m[0][1];
            state.cov.m[1][0] = state.cov.m[0][1];
            state.cov.m[0][2] *= 1.0 - kappa / 4.0;
            state.cov.m[2][0] = state.cov.m[0][2];
            state.cov.m[1][2] *= 1.0 - kappa / 4.0;
            state.cov.m[2][1] = state.cov.m[1][2];
            state.mean.x *= 1.0 - kappa / 4.0;
            state.mean.y *= 1.0 - kappa / 4.0;
        }

        state = scatter_channel(state, cp, cp.photons_v);
        state = scatter_channel(state, cp, cp.photons_h);

        state = precess(state, omega * dt);
        state.mean.y *= dephase;
        state.mean.z *= dephase;
        state.time_us = t + dt;

        auto bad = check_state(state);
        if (!bad.empty()) {
            std::ostringstream os;
            os << "simulate_trace: invalid state after pulse " << k << ": "
               << bad.front().detail;
            throw Error(os.str());
        }
    }
    return trace;
}

std::vector<MeasurementTrace> simulate_ensemble(const PulseTrainConfig& cfg,
                                                int repetitions, int jobs,
                                                bool record_truth) {
    if (repetitions < 1)
        throw Error("simulate_ensemble: repetitions must be >= 1");
    std::vector<MeasurementTrace> out(repetitions);
    if (jobs < 1)
        jobs = 1;
    jobs = std::min<int>(jobs, repetitions);

    std::exception_ptr first_error;
    std::mutex err_mutex;
    auto worker = [&](int begin, int end) {
        for (int i = begin; i < end; ++i) {
            try {
                out[i] = simulate_trace(cfg, derive_seed(cfg.seed, i), record_truth);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error)
                    first_error = std::current_exception();
                return;
            }
        }
    };
    if (jobs == 1) {
        worker(0, repetitions);
    } else {
        std::vector<std::thread> threads;
        int chunk = (repetitions + jobs - 1) / jobs;
        for (int j = 0; j < jobs; ++j) {
            int b = j * chunk;
            int e = std::min(repetitions, b + chunk);
            if (b < e)
                threads.emplace_back(worker, b, e);
        }
        for (auto& th : threads)
            th.join();
    }
    if (first_error)
        std::rethrow_exception(first_error);
    return out;
}

double polarimeter_estimate(double phi_true, double sx, double sy_noise, bool* clamped) {
    // Sy' = Sy cos(phi) + Sx sin(phi); the estimator is asin(Sy'/Sx).
    double ratio = std::sin(phi_true) + (sy_noise / sx) * std::cos(phi_true);
    bool clip = false;
    if (ratio > 1.0) {
        ratio = 1.0;
        clip = true;
    } else if (ratio < -1.0) {
        ratio = -1.0;
        clip = true;
    }
    if (clamped)
        *clamped = clip;
    return std::asin(ratio);
}

PolarimeterSample polarimeter_roundtrip(double phi_true, double photons, Rng& rng) {
    if (std::abs(phi_true) >= 1.5707963267948966)
        throw Error("polarimeter_roundtrip: |phi| must be below pi/2");
    double sx = photons / 2.0;
    double sy = photons > 0.0 ? rng.normal(0.0, std::sqrt(sx / 2.0)) : 0.0;
    bool clipped = false;
    double phi_hat = polarimeter_estimate(phi_true, sx > 0.0 ? sx : 1.0, sy, &clipped);
    return {phi_hat, clipped};
}

}  // namespace spintrack
