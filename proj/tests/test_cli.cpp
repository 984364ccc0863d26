#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string binary() {
    const char* p = std::getenv("SPINTRACK_BIN");
    REQUIRE_MESSAGE(p != nullptr, "SPINTRACK_BIN must point at the CLI binary");
    return p;
}

int run(const std::string& args) {
    std::string cmd = binary() + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string run_capture(const std::string& args) {
    std::string out_file = (fs::temp_directory_path() / "spintrack_cli_out.txt").string();
    std::string cmd = binary() + " " + args + " >" + out_file + " 2>/dev/null";
    std::system(cmd.c_str());
    std::ifstream in(out_file);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

struct TempDir {
    fs::path path;
    TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_config(const fs::path& p, const std::string& extra = "") {
    std::ofstream out(p);
    out << "seed = 12345\n"
        << "repetitions = 8\n"
        << "pulse_count = 120\n"
        << "t_e_start = 90\n"
        << "t_e_step = 40\n"
        << "t_e_stop = 170\n"
        << "delta_t_us = 90\n"
        << "jobs = 2\n"
        << extra;
}

}  // namespace

TEST_CASE("simulate writes traces, truth and manifest; reruns are byte identical") {
    TempDir dir("spintrack_cli_sim");
    write_config(dir.path / "run.cfg");
    std::string base = "simulate --config " + (dir.path / "run.cfg").string();

    CHECK(run(base + " --out " + (dir.path / "a").string()) == 0);
    CHECK(fs::exists(dir.path / "a/traces.csv"));
    CHECK(fs::exists(dir.path / "a/truth.csv"));
    CHECK(fs::exists(dir.path / "a/manifest.json"));

    CHECK(run(base + " --out " + (dir.path / "b").string() + " --jobs 1") == 0);
    CHECK(slurp(dir.path / "a/traces.csv") == slurp(dir.path / "b/traces.csv"));
    CHECK(slurp(dir.path / "a/truth.csv") == slurp(dir.path / "b/truth.csv"));

    // different seed changes the data
    CHECK(run(base + " --out " + (dir.path / "c").string() + " --seed 999") == 0);
    CHECK(slurp(dir.path / "a/traces.csv") != slurp(dir.path / "c/traces.csv"));
}

TEST_CASE("config errors exit with code 2 and name the key") {
    TempDir dir("spintrack_cli_cfg");
    {
        std::ofstream out(dir.path / "missing.cfg");
        out << "repetitions = 4\n";
    }
    CHECK(run("simulate --config " + (dir.path / "missing.cfg").string() + " --out " +
              (dir.path / "o").string()) == 2);

    {
        std::ofstream out(dir.path / "unknown.cfg");
        out << "seed = 1\nnot_a_key = 3\n";
    }
    CHECK(run("simulate --config " + (dir.path / "unknown.cfg").string() + " --out " +
              (dir.path / "o").string()) == 2);
}

TEST_CASE("track consumes simulate output and emits report, residuals, summary") {
    TempDir dir("spintrack_cli_track");
    write_config(dir.path / "run.cfg");
    std::string cfg = (dir.path / "run.cfg").string();
    REQUIRE(run("simulate --config " + cfg + " --out " + (dir.path / "sim").string()) == 0);
    CHECK(run("track --config " + cfg + " --traces " + (dir.path / "sim").string() +
              " --out " + (dir.path / "trk").string()) == 0);
    CHECK(fs::exists(dir.path / "trk/report.csv"));
    CHECK(fs::exists(dir.path / "trk/residuals.csv"));
    std::string summary = slurp(dir.path / "trk/summary.json");
    CHECK(summary.find("db_psi_steady") != std::string::npos);
    CHECK(summary.find("db_rho_steady") != std::string::npos);
    std::string report = slurp(dir.path / "trk/report.csv");
    CHECK(report.rfind("t_e_us,var_rho,var_psi,sql,poisson,db_rho,db_psi,n_traces", 0) == 0);

    // empty traces directory is a configuration error
    fs::create_directories(dir.path / "empty");
    CHECK(run("track --config " + cfg + " --traces " + (dir.path / "empty").string() +
              " --out " + (dir.path / "trk2").string()) == 2);
}

TEST_CASE("calibrate alpha prints the frozen noise factor") {
    std::string out = run_capture("calibrate alpha --chi 0.99 --p 0.7 --np 36");
    CHECK(out.find("\"beta\"") != std::string::npos);
    auto pos = out.find("\"beta\": ");
    double beta = std::stod(out.substr(pos + 8));
    CHECK(std::abs(beta - 0.1081) <= 0.0005);
}

TEST_CASE("calibrate mu1 and mu2 consume CSV data") {
    TempDir dir("spintrack_cli_cal");
    {
        std::ofstream out(dir.path / "mu1.csv");
        out << "N_A,value\n";
        for (double na = 1e5; na < 2e6; na += 2e5)
            out << na << "," << 1e-3 + 7e-8 * na << "\n";
    }
    std::string out1 = run_capture("calibrate mu1 --data " + (dir.path / "mu1.csv").string());
    auto p1 = out1.find("\"mu1\": ");
    REQUIRE(p1 != std::string::npos);
    CHECK(std::stod(out1.substr(p1 + 7)) == doctest::Approx(7e-8).epsilon(1e-6));

    {
        std::ofstream out(dir.path / "mu2.csv");
        out << "N_A,value\n";
        for (double na = 1e5; na <= 2e6; na += 1e5)
            out << na << "," << 11.7e-10 + 6.5e-15 * na + 2.8e-22 * na * na << "\n";
    }
    std::string out2 = run_capture("calibrate mu2 --alpha 0.86 --data " +
                                   (dir.path / "mu2.csv").string());
    auto p2 = out2.find("\"mu2\": ");
    REQUIRE(p2 != std::string::npos);
    CHECK(std::stod(out2.substr(p2 + 7)) == doctest::Approx(1.5116e-14).epsilon(1e-3));
}

TEST_CASE("sweep emits one row per evaluated candidate") {
    TempDir dir("spintrack_cli_sweep");
    write_config(dir.path / "run.cfg", "sweep_t_e = 180\nsweep_candidates = 60,90,120\n");
    std::string cfg = (dir.path / "run.cfg").string();
    CHECK(run("sweep --config " + cfg + " --out " + (dir.path / "swp").string()) == 0);
    std::string csv = slurp(dir.path / "swp/sweep.csv");
    int rows = 0;
    for (char c : csv)
        rows += c == '\n';
    CHECK(rows == 4);  // header + 3 candidates

    write_config(dir.path / "one.cfg", "sweep_t_e = 180\nsweep_candidates = 90\n");
    CHECK(run("sweep --config " + (dir.path / "one.cfg").string() + " --out " +
              (dir.path / "swp1").string()) == 0);
    csv = slurp(dir.path / "swp1/sweep.csv");
    rows = 0;
    for (char c : csv)
        rows += c == '\n';
    CHECK(rows == 2);
}
