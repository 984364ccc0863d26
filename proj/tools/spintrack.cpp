// Batch front-end: simulate pulsed Faraday-rotation traces of a precessing
// collective spin and run the two-window tracking analysis, calibration
// fits, weight optimization and measurement-length sweep.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "spintrack/io.hpp"

namespace fs = std::filesystem;
using namespace spintrack;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Common {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
    auto* opt = cmd->add_option("--config", c.config_path, "run configuration file");
    if (config_required)
        opt->required();
    cmd->add_option("--out", c.out_dir, "output directory");
    cmd->add_option("--seed", c.seed, "override master seed");
    cmd->add_option("--jobs", c.jobs, "override parallelism degree");
}

RunConfig load(const Common& c) {
    RunConfig cfg = load_config(c.config_path);
    if (c.seed)
        cfg.pulses.seed = *c.seed;
    if (c.jobs)
        cfg.jobs = *c.jobs;
    return cfg;
}

void ensure_out(const Common& c) {
    std::error_code ec;
    fs::create_directories(c.out_dir, ec);
    if (!fs::is_directory(c.out_dir))
        throw IoError("cannot create output directory " + c.out_dir);
}

std::string join(const Common& c, const std::string& name) {
    return (fs::path(c.out_dir) / name).string();
}

TrackOptions track_options(const RunConfig& cfg) {
    TrackOptions to;
    to.delta_t = cfg.delta_t;
    to.t_e_grid = t_e_grid(cfg);
    to.weights = cfg.weights;
    to.fit.omega_init = cfg.pulses.larmor_omega;
    to.fit.t2_init = cfg.pulses.t2_gradient_us;
    to.jobs = cfg.jobs;
    to.atoms_mean = cfg.pulses.css.atoms_mean;
    to.survival_per_interval = atom_survival_per_interval(cfg.pulses.coupling);
    to.pulse_interval_us = cfg.pulses.pulse_interval_us;
    return to;
}

int cmd_simulate(const Common& c) {
    RunConfig cfg = load(c);
    ensure_out(c);
    write_text_file(join(c, "manifest.json"), manifest_json(cfg, "simulate"));
    auto traces = simulate_ensemble(cfg.pulses, cfg.repetitions, cfg.jobs);
    write_traces_csv(join(c, "traces.csv"), traces);
    write_truth_csv(join(c, "truth.csv"), traces);
    std::printf("simulate: wrote %d traces x %d pulses to %s\n", cfg.repetitions,
                cfg.pulses.pulse_count, c.out_dir.c_str());
    return kExitOk;
}

int cmd_track(const Common& c, const std::string& traces_dir) {
    RunConfig cfg = load(c);
    ensure_out(c);
    fs::path dir = traces_dir.empty() ? fs::path(c.out_dir) : fs::path(traces_dir);
    fs::path traces_path = dir / "traces.csv";
    fs::path truth_path = dir / "truth.csv";
    if (!fs::exists(traces_path))
        throw ConfigError("track: no traces.csv under " + dir.string());
    auto traces = read_traces_csv(traces_path.string(),
                                  fs::exists(truth_path) ? truth_path.string() : "");
    write_text_file(join(c, "manifest.json"), manifest_json(cfg, "track"));
    auto report = track_ensemble(traces, cfg.pulses.coupling.g, track_options(cfg));
    write_report_csv(join(c, "report.csv"), report);
    write_residuals_csv(join(c, "residuals.csv"), report);
    write_text_file(join(c, "summary.json"), tracking_summary_json(report, cfg));
    std::printf("track: %zu t_e points, steady dB(psi) = %.2f, dB(rho) = %.2f\n",
                report.points.size(), report.steady_db_psi, report.steady_db_rho);
    return kExitOk;
}

int cmd_sweep(const Common& c, const std::string& traces_dir) {
    RunConfig cfg = load(c);
    ensure_out(c);
    std::vector<MeasurementTrace> traces;
    if (!traces_dir.empty()) {
        traces = read_traces_csv((fs::path(traces_dir) / "traces.csv").string());
    } else {
        traces = simulate_ensemble(cfg.pulses, cfg.repetitions, cfg.jobs);
    }
    write_text_file(join(c, "manifest.json"), manifest_json(cfg, "sweep"));
    FidFitOptions fit;
    fit.omega_init = cfg.pulses.larmor_omega;
    fit.t2_init = cfg.pulses.t2_gradient_us;
    auto sweep = sweep_delta_t(traces, cfg.pulses.coupling.g, cfg.sweep_t_e,
                               cfg.sweep_candidates, cfg.weights, fit, cfg.jobs);
    write_sweep_csv(join(c, "sweep.csv"), sweep);
    for (const auto& r : sweep.rows)
        if (r.skipped)
            std::fprintf(stderr, "sweep: candidate %.0f us exceeds the trace span, skipped\n",
                         r.delta_t);
    std::printf("sweep: argmin delta_t = %.0f us\n", sweep.argmin_delta_t);
    return kExitOk;
}

int cmd_optimize_weights(const Common& c, const std::string& traces_dir) {
    RunConfig cfg = load(c);
    ensure_out(c);
    std::vector<MeasurementTrace> traces;
    if (!traces_dir.empty())
        traces = read_traces_csv((fs::path(traces_dir) / "traces.csv").string());
    else
        traces = simulate_ensemble(cfg.pulses, cfg.repetitions, cfg.jobs);
    write_text_file(join(c, "manifest.json"), manifest_json(cfg, "optimize-weights"));
    FidFitOptions fit;
    fit.omega_init = cfg.pulses.larmor_omega;
    fit.t2_init = cfg.pulses.t2_gradient_us;
    auto opt = optimize_weights(traces, cfg.pulses.coupling.g, cfg.sweep_t_e, cfg.delta_t,
                                cfg.weights, fit, cfg.jobs);
    write_text_file(join(c, "weights.json"), weights_json(opt));
    std::printf("optimize-weights: A = %.4g, w = %.4g, r = %.4g (objective %.6g)\n",
                opt.best.amp, opt.best.width, opt.best.imbalance_slope, opt.objective);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spintrack: pulsed QND spin-tracking simulator and analysis"};
    app.require_subcommand(1);

    Common c_sim, c_track, c_sweep, c_wopt;
    std::string track_traces_dir, sweep_traces_dir, wopt_traces_dir;

    auto* sim = app.add_subcommand("simulate", "generate measurement traces");
    add_common(sim, c_sim);

    auto* trk = app.add_subcommand("track", "two-window tracking analysis");
    add_common(trk, c_track);
    trk->add_option("--traces", track_traces_dir, "directory holding traces.csv");

    auto* swp = app.add_subcommand("sweep", "measurement-length sweep");
    add_common(swp, c_sweep);
    swp->add_option("--traces", sweep_traces_dir, "directory holding traces.csv");

    auto* wop = app.add_subcommand("optimize-weights", "weight-function search");
    add_common(wop, c_wopt);
    wop->add_option("--traces", wopt_traces_dir, "directory holding traces.csv");

    auto* cal = app.add_subcommand("calibrate", "calibration computations");
    cal->require_subcommand(1);

    StroboscopicConfig alpha_cfg;
    std::string alpha_out;
    auto* cal_alpha = cal->add_subcommand("alpha", "stroboscopic noise factor");
    cal_alpha->add_option("--chi", alpha_cfg.chi, "coherent survival per pulse");
    cal_alpha->add_option("--p", alpha_cfg.p_return, "return fraction");
    cal_alpha->add_option("--np", alpha_cfg.n_pulses, "pulse count");
    cal_alpha->add_option("--photons", alpha_cfg.photons, "photons per pulse");
    cal_alpha->add_option("--atoms", alpha_cfg.atoms, "atom number");
    cal_alpha->add_option("--out", alpha_out, "write JSON here instead of stdout");

    std::string mu1_csv, mu1_out;
    auto* cal_mu1 = cal->add_subcommand("mu1", "linear calibration fit");
    cal_mu1->add_option("--data", mu1_csv, "CSV with header N_A,value")->required();
    cal_mu1->add_option("--out", mu1_out, "write JSON here instead of stdout");

    std::string mu2_csv, mu2_out;
    double mu2_alpha = 0.86;
    auto* cal_mu2 = cal->add_subcommand("mu2", "quadratic noise-scaling fit");
    cal_mu2->add_option("--data", mu2_csv, "CSV with header N_A,value")->required();
    cal_mu2->add_option("--alpha", mu2_alpha, "scattering noise factor");
    cal_mu2->add_option("--out", mu2_out, "write JSON here instead of stdout");

    CloudSpec cloud;
    BeamSpec beam;
    std::int64_t mom_samples = 1000000;
    std::uint64_t mom_seed = 1;
    int mom_jobs = 1;
    std::string mom_out;
    auto* cal_mom = cal->add_subcommand("moments", "coupling moments of the cloud");
    cal_mom->add_option("--fwhm-um", cloud.lorentz_fwhm_um, "axial Lorentzian FWHM");
    cal_mom->add_option("--sigma-um", cloud.radial_sigma_um, "radial Gaussian sigma");
    cal_mom->add_option("--waist-um", beam.waist_um, "probe beam waist");
    cal_mom->add_option("--samples", mom_samples, "Monte Carlo samples");
    cal_mom->add_option("--seed", mom_seed, "sampling seed");
    cal_mom->add_option("--jobs", mom_jobs, "threads");
    cal_mom->add_option("--out", mom_out, "write JSON here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*sim)
            return cmd_simulate(c_sim);
        if (*trk)
            return cmd_track(c_track, track_traces_dir);
        if (*swp)
            return cmd_sweep(c_sweep, sweep_traces_dir);
        if (*wop)
            return cmd_optimize_weights(c_wopt, wopt_traces_dir);
        if (*cal_alpha) {
            auto r = compute_alpha(alpha_cfg);
            std::string js = alpha_json(r, alpha_cfg);
            if (alpha_out.empty())
                std::fputs(js.c_str(), stdout);
            else
                write_text_file(alpha_out, js);
            return kExitOk;
        }
        auto read_points = [](const std::string& path) {
            std::vector<std::pair<double, double>> pts;
            std::ifstream in(path);
            if (!in)
                throw ConfigError("cannot open " + path);
            std::string line;
            if (!std::getline(in, line) || line.rfind("N_A,", 0) != 0)
                throw ConfigError(path + ": expected header N_A,value");
            while (std::getline(in, line)) {
                if (line.empty())
                    continue;
                auto comma = line.find(',');
                if (comma == std::string::npos)
                    throw ConfigError(path + ": malformed row " + line);
                pts.emplace_back(std::stod(line.substr(0, comma)),
                                 std::stod(line.substr(comma + 1)));
            }
            return pts;
        };
        if (*cal_mu1) {
            auto pts = read_points(mu1_csv);
            auto f = fit_mu1(pts);
            std::string js = mu1_json(f);
            if (mu1_out.empty())
                std::fputs(js.c_str(), stdout);
            else
                write_text_file(mu1_out, js);
            return kExitOk;
        }
        if (*cal_mu2) {
            auto pts = read_points(mu2_csv);
            auto f = fit_mu2(pts, mu2_alpha);
            std::string js = mu2_json(f, mu2_alpha);
            if (mu2_out.empty())
                std::fputs(js.c_str(), stdout);
            else
                write_text_file(mu2_out, js);
            return kExitOk;
        }
        if (*cal_mom) {
            auto m = coupling_moments(cloud, beam, mom_samples, mom_seed, 1.0, mom_jobs);
            std::string js = moments_json(m, mom_samples);
            if (mom_out.empty())
                std::fputs(js.c_str(), stdout);
            else
                write_text_file(mom_out, js);
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitConfig;
}
