#pragma once

#include <span>

#include "spintrack/trajectory.hpp"

namespace spintrack {

struct FidModelParams {
    double g = 0.0;        // fixed from calibration
    double omega_l = 0.0;  // rad/us
    double t2_us = 0.0;
    double phi0 = 0.0;
};

struct WeightParams {
    double amp = 0.0;              // A
    double width = 1.0;            // w
    double imbalance_slope = 0.0;  // r
};

/// W(t_k, phi_k) = (1 + A exp(-w |t_k - t_e| / T2)) / (1 + r |phi_k|).
double weight_value(const WeightParams& wp, double t_rel, double phi, double t2_ref);

enum class FitStatus { converged, max_iterations, degenerate };

struct FidFitResult {
    FidModelParams params;
    FitStatus status = FitStatus::converged;
    int iterations = 0;
    double residual_norm = 0.0;  // sqrt(weighted SSE)
    bool t2_at_bound = false;
    double fy = 0.0, fz = 0.0;   // profiled amplitudes at convergence
};

struct FidFitOptions {
    double omega_init = 0.16534698176788384;
    double t2_init = 1500.0;
    double t2_min = 10.0;
    double t2_max = 1e5;
    int max_iterations = 200;
    double rel_tol = 1e-9;
    double weight_t2_ref = 1000.0;  // T2 scale inside the time weight
};

/// Weighted nonlinear least squares of the FID model over the full trace:
/// (omega_l, t2, phi0) iterated with the two amplitudes profiled out.
FidFitResult fit_global(const MeasurementTrace& trace, double g, double t_e,
                        const WeightParams& weights, const FidFitOptions& opts = {});

enum class WindowSide { predictive, confirming };

struct PhaseEstimate {
    Vec2 f;           // (Fy, Fz) at t_e
    double t_e;
    double win_start, win_end;
    WindowSide side;
    int n_points;
};

/// Closed-form linear estimate of (Fy, Fz) at t_e from one disjoint window,
/// classical parameters fixed, uniform weights. Windows clip at trace bounds.
PhaseEstimate fit_phase_point(const MeasurementTrace& trace, const FidModelParams& params,
                              double t_e, double delta_t, WindowSide side);

/// All-free-parameters fit restricted to one window (gain cross-check).
FidFitResult fit_window_free(const MeasurementTrace& trace, double g, double t_e,
                             double delta_t, WindowSide side,
                             const FidFitOptions& opts = {});

}  // namespace spintrack
