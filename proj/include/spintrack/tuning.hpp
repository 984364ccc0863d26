#pragma once

#include <functional>
#include <span>
#include <vector>

#include "spintrack/tracking.hpp"

namespace spintrack {

struct SimplexOptions {
    double rel_diameter_tol = 1e-4;
    int max_evaluations = 200;
    double initial_step = 0.5;  // relative simplex edge
};

struct SimplexResult {
    std::vector<double> x;
    double value;
    std::vector<double> best_history;  // best-so-far after each evaluation
    int evaluations;
};

/// Derivative-free Nelder-Mead minimization; failures in the objective are
/// treated as +inf, never fatal.
SimplexResult nelder_mead(const std::function<double(std::span<const double>)>& objective,
                          std::span<const double> x0, const SimplexOptions& opts = {});

struct WeightOptResult {
    WeightParams best;
    double objective;
    std::vector<double> history;
    int evaluations;
};

/// Simplex search over (amp, width, imbalance_slope) minimizing
/// Tr(Gamma_{F2|F1}) at t_e, with one restart from the perturbed optimum.
WeightOptResult optimize_weights(std::span<const MeasurementTrace> traces, double g,
                                 double t_e, double delta_t, const WeightParams& init,
                                 const FidFitOptions& fit = {}, int jobs = 1,
                                 const SimplexOptions& simplex = {});

struct SweepRow {
    double delta_t;
    double trace_gamma_cond;
    double stderr_jackknife;
    int n_traces;
    bool skipped;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    double argmin_delta_t;
};

/// Tr(Gamma_{F2|F1}) at t_e per candidate window length; candidates whose
/// windows exceed the trace span are skipped with a flag.
SweepResult sweep_delta_t(std::span<const MeasurementTrace> traces, double g, double t_e,
                          std::span<const double> candidates,
                          const WeightParams& weights = {}, const FidFitOptions& fit = {},
                          int jobs = 1);

}  // namespace spintrack
