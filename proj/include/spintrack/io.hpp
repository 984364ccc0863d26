#pragma once

#include <string>
#include <vector>

#include "spintrack/calibration.hpp"
#include "spintrack/config.hpp"
#include "spintrack/tracking.hpp"
#include "spintrack/tuning.hpp"

namespace spintrack {

struct IoError : Error {
    using Error::Error;
};

/// Long-format trace table: trace_id,t_us,phi_rad
void write_traces_csv(const std::string& path, const std::vector<MeasurementTrace>& traces);

/// Truth sidecar: trace_id,t_us,Fy,Fz
void write_truth_csv(const std::string& path, const std::vector<MeasurementTrace>& traces);

/// Loads traces (and, when truth_path is non-empty, the truth sidecar).
std::vector<MeasurementTrace> read_traces_csv(const std::string& path,
                                              const std::string& truth_path = "");

/// t_e_us,var_rho,var_psi,sql,poisson,db_rho,db_psi,n_traces
void write_report_csv(const std::string& path, const TrackingReport& report);

/// trace_id,t_e_us,Fcal_y,Fcal_z
void write_residuals_csv(const std::string& path, const TrackingReport& report);

/// delta_t_us,trace_gamma_cond,stderr
void write_sweep_csv(const std::string& path, const SweepResult& sweep);

std::string tracking_summary_json(const TrackingReport& report, const RunConfig& cfg);
std::string manifest_json(const RunConfig& cfg, const std::string& command);
std::string alpha_json(const AlphaResult& r, const StroboscopicConfig& cfg);
std::string mu1_json(const LineFit& f);
std::string mu2_json(const Mu2Fit& f, double alpha);
std::string moments_json(const MomentsResult& m, std::int64_t samples);
std::string weights_json(const WeightOptResult& w);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace spintrack
