#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spintrack/fid_fit.hpp"
#include "spintrack/trajectory.hpp"

namespace spintrack {

struct ConfigError : Error {
    using Error::Error;
};

/// Flat key = value run configuration; unknown keys are rejected.
struct RunConfig {
    PulseTrainConfig pulses;
    int repetitions = 450;
    double t_e_start = 30.0;
    double t_e_step = 40.0;
    double t_e_stop = 710.0;
    double delta_t = 270.0;
    WeightParams weights;
    bool optimize_weights_flag = false;
    double sweep_t_e = 470.0;
    std::vector<double> sweep_candidates{90, 150, 210, 270, 330, 390, 450};
    int jobs = 1;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

/// Canonical serialization of every key (defaults included).
std::string dump_config(const RunConfig& cfg);

/// FNV-1a hash of the canonical dump.
std::uint64_t config_hash(const RunConfig& cfg);

std::vector<double> t_e_grid(const RunConfig& cfg);

}  // namespace spintrack
