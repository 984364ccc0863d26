#include "spintrack/io.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace spintrack {

namespace {

std::FILE* open_or_throw(const std::string& path, const char* mode) {
    std::FILE* f = std::fopen(path.c_str(), mode);
    if (!f)
        throw IoError("cannot open " + path);
    return f;
}

}  // namespace

void write_traces_csv(const std::string& path, const std::vector<MeasurementTrace>& traces) {
    std::FILE* f = open_or_throw(path, "w");
    std::fputs("trace_id,t_us,phi_rad\n", f);
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const auto& tr = traces[i];
        for (std::size_t k = 0; k < tr.times.size(); ++k)
            std::fprintf(f, "%zu,%.17g,%.17g\n", i, tr.times[k], tr.angles[k]);
    }
    std::fclose(f);
}

void write_truth_csv(const std::string& path, const std::vector<MeasurementTrace>& traces) {
    std::FILE* f = open_or_throw(path, "w");
    std::fputs("trace_id,t_us,Fy,Fz\n", f);
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const auto& tr = traces[i];
        for (std::size_t k = 0; k < tr.truth.size(); ++k)
            std::fprintf(f, "%zu,%.17g,%.17g,%.17g\n", i, tr.times[k], tr.truth[k].fy,
                         tr.truth[k].fz);
    }
    std::fclose(f);
}

std::vector<MeasurementTrace> read_traces_csv(const std::string& path,
                                              const std::string& truth_path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("trace_id,t_us,phi_rad", 0) != 0)
        throw IoError(path + ": expected header trace_id,t_us,phi_rad");
    std::vector<MeasurementTrace> traces;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::size_t c1 = line.find(',');
        std::size_t c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw IoError(path + ": malformed row: " + line);
        std::size_t id = std::stoull(line.substr(0, c1));
        double t = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
        double phi = std::stod(line.substr(c2 + 1));
        if (id >= traces.size())
            traces.resize(id + 1);
        traces[id].times.push_back(t);
        traces[id].angles.push_back(phi);
    }
    for (const auto& tr : traces)
        if (tr.times.empty())
            throw IoError(path + ": missing trace data");

    if (!truth_path.empty()) {
        std::ifstream tin(truth_path);
        if (!tin)
            throw IoError("cannot open " + truth_path);
        if (!std::getline(tin, line) || line.rfind("trace_id,t_us,Fy,Fz", 0) != 0)
            throw IoError(truth_path + ": expected header trace_id,t_us,Fy,Fz");
        while (std::getline(tin, line)) {
            if (line.empty())
                continue;
            std::size_t c1 = line.find(',');
            std::size_t c2 = line.find(',', c1 + 1);
            std::size_t c3 = line.find(',', c2 + 1);
            if (c1 == std::string::npos || c2 == std::string::npos || c3 == std::string::npos)
                throw IoError(truth_path + ": malformed row: " + line);
            std::size_t id = std::stoull(line.substr(0, c1));
            if (id >= traces.size())
                throw IoError(truth_path + ": trace id out of range");
            double fy = std::stod(line.substr(c2 + 1, c3 - c2 - 1));
            double fz = std::stod(line.substr(c3 + 1));
            traces[id].truth.push_back({fy, fz, 0.0});
        }
        for (auto& tr : traces)
            if (tr.truth.size() != tr.times.size())
                throw IoError(truth_path + ": truth rows do not match trace length");
        // the sidecar has no atom column; mark it absent so benchmarks use the
        // survival model instead
        for (auto& tr : traces)
            for (auto& s : tr.truth)
                s.atoms = -1.0;
    }
    return traces;
}

void write_report_csv(const std::string& path, const TrackingReport& report) {
    std::FILE* f = open_or_throw(path, "w");
    std::fputs("t_e_us,var_rho,var_psi,sql,poisson,db_rho,db_psi,n_traces\n", f);
    for (const auto& p : report.points)
        std::fprintf(f, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", p.t_e, p.var_rho,
                     p.var_psi, p.sql, p.poisson, p.db_rho, p.db_psi, p.n_traces);
    std::fclose(f);
}

void write_residuals_csv(const std::string& path, const TrackingReport& report) {
    std::FILE* f = open_or_throw(path, "w");
    std::fputs("trace_id,t_e_us,Fcal_y,Fcal_z\n", f);
    for (std::size_t i = 0; i < report.points.size(); ++i) {
        const auto& res = report.residuals[i];
        const auto& ids = report.trace_ids[i];
        for (std::size_t j = 0; j < res.size(); ++j)
            std::fprintf(f, "%d,%.17g,%.17g,%.17g\n", ids[j], report.points[i].t_e,
                         res[j].y, res[j].z);
    }
    std::fclose(f);
}

void write_sweep_csv(const std::string& path, const SweepResult& sweep) {
    std::FILE* f = open_or_throw(path, "w");
    std::fputs("delta_t_us,trace_gamma_cond,stderr\n", f);
    for (const auto& r : sweep.rows) {
        if (r.skipped)
            continue;
        std::fprintf(f, "%.17g,%.17g,%.17g\n", r.delta_t, r.trace_gamma_cond,
                     r.stderr_jackknife);
    }
    std::fclose(f);
}

std::string tracking_summary_json(const TrackingReport& report, const RunConfig& cfg) {
    nlohmann::json j;
    j["n_te"] = report.points.size();
    j["failed_fits"] = report.failed_fits;
    j["delta_t_us"] = cfg.delta_t;
    j["db_psi_steady"] = report.steady_db_psi;
    j["db_rho_steady"] = report.steady_db_rho;
    if (report.sql_crossing_te)
        j["sql_crossing_te_us"] = *report.sql_crossing_te;
    else
        j["sql_crossing_te_us"] = nullptr;
    return j.dump(2) + "\n";
}

std::string manifest_json(const RunConfig& cfg, const std::string& command) {
    nlohmann::json j;
    j["command"] = command;
    j["seed"] = cfg.pulses.seed;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, config_hash(cfg));
    j["config_hash"] = buf;
    j["units"] = {{"time", "us"}, {"angle", "rad"}, {"spin", "hbar"}};
    return j.dump(2) + "\n";
}

std::string alpha_json(const AlphaResult& r, const StroboscopicConfig& cfg) {
    nlohmann::json j;
    j["beta"] = r.beta;
    j["alpha"] = r.alpha;
    j["chi"] = cfg.chi;
    j["p_return"] = cfg.p_return;
    j["n_pulses"] = cfg.n_pulses;
    return j.dump(2) + "\n";
}

std::string mu1_json(const LineFit& f) {
    nlohmann::json j;
    j["mu1"] = f.slope;
    j["mu1_se"] = f.slope_se;
    j["a0"] = f.intercept;
    j["a0_se"] = f.intercept_se;
    return j.dump(2) + "\n";
}

std::string mu2_json(const Mu2Fit& f, double alpha) {
    nlohmann::json j;
    j["mu2"] = f.mu2;
    j["mu2_se"] = f.mu2_se;
    j["alpha"] = alpha;
    j["a0"] = f.a0;
    j["a1"] = f.a1;
    j["a2"] = f.a2;
    j["a0_se"] = f.a0_se;
    j["a1_se"] = f.a1_se;
    j["a2_se"] = f.a2_se;
    j["a1_negative"] = f.a1_negative;
    return j.dump(2) + "\n";
}

std::string moments_json(const MomentsResult& m, std::int64_t samples) {
    nlohmann::json j;
    j["mu1"] = m.mu1;
    j["mu2"] = m.mu2;
    j["v2"] = m.v2;
    j["mu1_se"] = m.mu1_se;
    j["mu2_se"] = m.mu2_se;
    j["samples"] = samples;
    return j.dump(2) + "\n";
}

std::string weights_json(const WeightOptResult& w) {
    nlohmann::json j;
    j["amp"] = w.best.amp;
    j["width"] = w.best.width;
    j["imbalance_slope"] = w.best.imbalance_slope;
    j["objective"] = w.objective;
    j["evaluations"] = w.evaluations;
    j["history"] = w.history;
    return j.dump(2) + "\n";
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot open " + path);
    out << content;
}

}  // namespace spintrack
