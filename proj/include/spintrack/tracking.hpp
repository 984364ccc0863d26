#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "spintrack/fid_fit.hpp"

namespace spintrack {

struct ConditionalCovariance {
    Mat2 gamma_cond;
    Gain2 gain;                  // A = Gamma_21 Gamma_1^{-1}
    Mat2 gamma_f1, gamma_f2;
    Gain2 gamma_cross;           // Gamma_21 (general 2x2)
    std::vector<Vec2> residuals; // F_i = f2_i - A f1_i
    bool degenerate = false;     // Gamma_1 ~ 0 with no cross-covariance
};

/// Gamma_{2|1} = Gamma_2 - Gamma_21 Gamma_1^{-1} Gamma_12, covariances with
/// 1/(n-1) normalization.
ConditionalCovariance conditional_covariance(std::span<const Vec2> f1,
                                             std::span<const Vec2> f2);

struct PolarVariances {
    double var_rho;
    double var_psi;
    double psi;
};

/// (Fy,Fz) = rho(-sin psi, cos psi); radial/azimuthal variances of Gamma.
PolarVariances polar_decompose(const Mat2& gamma, Vec2 mean_f);

struct TrackPoint {
    double t_e;
    Vec2 mean_f1;
    Mat2 gamma_cond;
    double var_rho, var_psi;
    double sql, poisson;
    double db_rho, db_psi;   // 10*log10(benchmark / var)
    int n_traces;
};

struct TrackingReport {
    std::vector<TrackPoint> points;
    // residuals[i][j]: prediction error of trace j at t_e grid point i
    std::vector<std::vector<Vec2>> residuals;
    std::vector<std::vector<int>> trace_ids;
    int failed_fits = 0;
    double steady_db_psi = 0.0;  // mean over t_e >= steady_min_te
    double steady_db_rho = 0.0;
    std::optional<double> sql_crossing_te;  // first grid t_e with var_psi < sql
};

struct TrackOptions {
    double delta_t = 270.0;
    std::vector<double> t_e_grid;        // defaults to 30:40:(span - delta_t)
    WeightParams weights;
    FidFitOptions fit;
    int jobs = 1;
    double steady_min_te = 270.0;
    // Poisson benchmark: atoms_mean * survival^k when truth lacks atom counts.
    double atoms_mean = 0.0;
    double survival_per_interval = 1.0;
    double pulse_interval_us = 3.0;
};

TrackingReport track_ensemble(std::span<const MeasurementTrace> traces, double g,
                              const TrackOptions& opts);

struct GainCheckPanel {
    double gamma, delta;      // linear fit free = gamma * fixed + delta
    double gamma_se;
    int component;            // 0 = Fy, 1 = Fz
    WindowSide side;
};

struct GainCheckReport {
    std::vector<GainCheckPanel> panels;  // 4 panels
    double max_gamma_deviation;          // max |gamma - 1|
    int excluded;
};

GainCheckReport fit_gain_check(std::span<const MeasurementTrace> traces, double g,
                               double t_e, double delta_t, const WeightParams& weights,
                               const FidFitOptions& fit = {});

}  // namespace spintrack
