#include "spintrack/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace spintrack {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double x = std::stod(v, &used);
        if (used != v.size())
            throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: invalid numeric value for key '" + key + "': " + v);
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1")
        return true;
    if (v == "false" || v == "0")
        return false;
    throw ConfigError("config: invalid boolean for key '" + key + "': " + v);
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) +
                              " is not 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ConfigError("config: empty key or value on line " + std::to_string(lineno));
        if (kv.count(key))
            throw ConfigError("config: duplicate key '" + key + "'");
        kv[key] = val;
    }

    auto take = [&](const char* key) {
        auto it = kv.find(key);
        if (it == kv.end())
            return std::string();
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    auto num = [&](const char* key, double& dst) {
        std::string v = take(key);
        if (!v.empty())
            dst = to_double(key, v);
    };
    auto integer = [&](const char* key, int& dst) {
        std::string v = take(key);
        if (!v.empty()) {
            double x = to_double(key, v);
            if (x != std::floor(x))
                throw ConfigError(std::string("config: key '") + key + "' must be an integer");
            dst = static_cast<int>(x);
        }
    };
    auto boolean = [&](const char* key, bool& dst) {
        std::string v = take(key);
        if (!v.empty())
            dst = to_bool(key, v);
    };

    num("g", cfg.pulses.coupling.g);
    num("photons_v", cfg.pulses.coupling.photons_v);
    num("photons_h", cfg.pulses.coupling.photons_h);
    num("eta", cfg.pulses.coupling.eta);
    num("p_return", cfg.pulses.coupling.p_return);
    num("pulse_interval_us", cfg.pulses.pulse_interval_us);
    integer("pulse_count", cfg.pulses.pulse_count);
    num("larmor_omega", cfg.pulses.larmor_omega);
    num("t2_gradient_us", cfg.pulses.t2_gradient_us);
    num("omega_jitter_rms", cfg.pulses.omega_jitter_rms);
    num("phi0_offset", cfg.pulses.phi0_offset);
    num("phi0_drift_rms", cfg.pulses.phi0_drift_rms);
    num("readout_imbalance_noise", cfg.pulses.readout_imbalance_noise);
    num("readout_efficiency", cfg.pulses.readout_efficiency);
    num("atoms_mean", cfg.pulses.css.atoms_mean);
    boolean("atoms_poisson", cfg.pulses.css.atoms_poisson);
    num("pump_efficiency", cfg.pulses.css.pump_efficiency);
    boolean("deterministic", cfg.pulses.deterministic);
    {
        std::string v = take("seed");
        if (v.empty())
            throw ConfigError("config: missing required key 'seed'");
        try {
            cfg.pulses.seed = std::stoull(v);
        } catch (const std::exception&) {
            throw ConfigError("config: invalid seed: " + v);
        }
    }
    integer("repetitions", cfg.repetitions);
    num("t_e_start", cfg.t_e_start);
    num("t_e_step", cfg.t_e_step);
    num("t_e_stop", cfg.t_e_stop);
    num("delta_t_us", cfg.delta_t);
    {
        std::string v = take("weights");
        if (!v.empty()) {
            if (v == "optimize")
                cfg.optimize_weights_flag = true;
            else if (v != "fixed")
                throw ConfigError("config: weights must be 'fixed' or 'optimize'");
        }
    }
    num("weight_amp", cfg.weights.amp);
    num("weight_width", cfg.weights.width);
    num("weight_imbalance", cfg.weights.imbalance_slope);
    num("sweep_t_e", cfg.sweep_t_e);
    {
        std::string v = take("sweep_candidates");
        if (!v.empty()) {
            cfg.sweep_candidates.clear();
            std::istringstream cs(v);
            std::string tok;
            while (std::getline(cs, tok, ',')) {
                tok = trim(tok);
                if (!tok.empty())
                    cfg.sweep_candidates.push_back(to_double("sweep_candidates", tok));
            }
            if (cfg.sweep_candidates.empty())
                throw ConfigError("config: sweep_candidates is empty");
        }
    }
    integer("jobs", cfg.jobs);

    if (!kv.empty()) {
        std::ostringstream os;
        os << "config: unknown key(s):";
        for (const auto& [k, v] : kv)
            os << " '" << k << "'";
        throw ConfigError(os.str());
    }

    if (cfg.pulses.pulse_interval_us <= 0.0)
        throw ConfigError("config: pulse_interval_us must be positive");
    if (cfg.pulses.pulse_count < 1)
        throw ConfigError("config: pulse_count must be >= 1");
    if (cfg.pulses.t2_gradient_us <= 0.0)
        throw ConfigError("config: t2_gradient_us must be positive");
    if (cfg.pulses.coupling.g <= 0.0)
        throw ConfigError("config: g must be positive");
    if (cfg.pulses.coupling.p_return < 0.0 || cfg.pulses.coupling.p_return > 1.0)
        throw ConfigError("config: p_return must lie in [0, 1]");
    if (cfg.pulses.css.pump_efficiency < 0.0 || cfg.pulses.css.pump_efficiency > 1.0)
        throw ConfigError("config: pump_efficiency must lie in [0, 1]");
    if (cfg.repetitions < 1)
        throw ConfigError("config: repetitions must be >= 1");
    if (cfg.jobs < 1)
        throw ConfigError("config: jobs must be >= 1");
    if (cfg.delta_t <= 0.0)
        throw ConfigError("config: delta_t_us must be positive");
    if (cfg.t_e_step <= 0.0 || cfg.t_e_stop < cfg.t_e_start)
        throw ConfigError("config: invalid t_e grid");
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string dump_config(const RunConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "g = " << cfg.pulses.coupling.g << "\n";
    os << "photons_v = " << cfg.pulses.coupling.photons_v << "\n";
    os << "photons_h = " << cfg.pulses.coupling.photons_h << "\n";
    os << "eta = " << cfg.pulses.coupling.eta << "\n";
    os << "p_return = " << cfg.pulses.coupling.p_return << "\n";
    os << "pulse_interval_us = " << cfg.pulses.pulse_interval_us << "\n";
    os << "pulse_count = " << cfg.pulses.pulse_count << "\n";
    os << "larmor_omega = " << cfg.pulses.larmor_omega << "\n";
    os << "t2_gradient_us = " << cfg.pulses.t2_gradient_us << "\n";
    os << "omega_jitter_rms = " << cfg.pulses.omega_jitter_rms << "\n";
    os << "phi0_offset = " << cfg.pulses.phi0_offset << "\n";
    os << "phi0_drift_rms = " << cfg.pulses.phi0_drift_rms << "\n";
    os << "readout_imbalance_noise = " << cfg.pulses.readout_imbalance_noise << "\n";
    os << "readout_efficiency = " << cfg.pulses.readout_efficiency << "\n";
    os << "atoms_mean = " << cfg.pulses.css.atoms_mean << "\n";
    os << "atoms_poisson = " << (cfg.pulses.css.atoms_poisson ? "true" : "false") << "\n";
    os << "pump_efficiency = " << cfg.pulses.css.pump_efficiency << "\n";
    os << "deterministic = " << (cfg.pulses.deterministic ? "true" : "false") << "\n";
    os << "seed = " << cfg.pulses.seed << "\n";
    os << "repetitions = " << cfg.repetitions << "\n";
    os << "t_e_start = " << cfg.t_e_start << "\n";
    os << "t_e_step = " << cfg.t_e_step << "\n";
    os << "t_e_stop = " << cfg.t_e_stop << "\n";
    os << "delta_t_us = " << cfg.delta_t << "\n";
    os << "weights = " << (cfg.optimize_weights_flag ? "optimize" : "fixed") << "\n";
    os << "weight_amp = " << cfg.weights.amp << "\n";
    os << "weight_width = " << cfg.weights.width << "\n";
    os << "weight_imbalance = " << cfg.weights.imbalance_slope << "\n";
    os << "sweep_t_e = " << cfg.sweep_t_e << "\n";
    os << "sweep_candidates = ";
    for (std::size_t i = 0; i < cfg.sweep_candidates.size(); ++i)
        os << (i ? "," : "") << cfg.sweep_candidates[i];
    os << "\n";
    os << "jobs = " << cfg.jobs << "\n";
    return os.str();
}

std::uint64_t config_hash(const RunConfig& cfg) {
    std::string s = dump_config(cfg);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<double> t_e_grid(const RunConfig& cfg) {
    std::vector<double> grid;
    for (double te = cfg.t_e_start; te <= cfg.t_e_stop + 1e-9; te += cfg.t_e_step)
        grid.push_back(te);
    return grid;
}

}  // namespace spintrack
