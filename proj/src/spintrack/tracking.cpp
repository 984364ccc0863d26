#include "spintrack/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

namespace spintrack {

namespace {

Mat2 sample_cov(std::span<const Vec2> a, std::span<const Vec2> b, Vec2 ma, Vec2 mb,
                double* cross_yz = nullptr, double* cross_zy = nullptr) {
    // returns [cov(a.y,b.y), cov(a.y,b.z); cov(a.z,b.y), cov(a.z,b.z)] packed as
    // Mat2 when symmetric; off-symmetric parts reported through cross_*
    double syy = 0, syz = 0, szy = 0, szz = 0;
    std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) {
        double ay = a[i].y - ma.y, az = a[i].z - ma.z;
        double by = b[i].y - mb.y, bz = b[i].z - mb.z;
        syy += ay * by;
        syz += ay * bz;
        szy += az * by;
        szz += az * bz;
    }
    double norm = 1.0 / double(n - 1);
    if (cross_yz)
        *cross_yz = syz * norm;
    if (cross_zy)
        *cross_zy = szy * norm;
    return {syy * norm, 0.5 * (syz + szy) * norm, szz * norm};
}

}  // namespace

ConditionalCovariance conditional_covariance(std::span<const Vec2> f1,
                                             std::span<const Vec2> f2) {
    if (f1.size() != f2.size())
        throw Error("conditional_covariance: length mismatch");
    std::size_t n = f1.size();
    if (n < 3)
        throw Error("conditional_covariance: need at least 3 samples");

    Vec2 m1{0, 0}, m2{0, 0};
    for (std::size_t i = 0; i < n; ++i) {
        m1 = m1 + f1[i];
        m2 = m2 + f2[i];
    }
    m1 = (1.0 / double(n)) * m1;
    m2 = (1.0 / double(n)) * m2;

    ConditionalCovariance out;
    out.gamma_f1 = sample_cov(f1, f1, m1, m1);
    out.gamma_f2 = sample_cov(f2, f2, m2, m2);
    double c_yz = 0, c_zy = 0;
    (void)sample_cov(f2, f1, m2, m1, &c_yz, &c_zy);
    // Gamma_21[i][j] = cov(f2_i, f1_j)
    Mat2 g21_sym = sample_cov(f2, f1, m2, m1);
    out.gamma_cross.a[0][0] = g21_sym.yy;
    out.gamma_cross.a[0][1] = c_yz;
    out.gamma_cross.a[1][0] = c_zy;
    out.gamma_cross.a[1][1] = g21_sym.zz;

    const Mat2& g1 = out.gamma_f1;
    double det = g1.det();
    double scale = 0.5 * g1.trace();
    double cross_norm = std::abs(c_yz) + std::abs(c_zy) +
                        std::abs(out.gamma_cross.a[0][0]) + std::abs(out.gamma_cross.a[1][1]);

    if (!(det > 0.0) || det < 1e-12 * scale * scale) {
        if (cross_norm <= 1e-12 * (1.0 + scale)) {
            // degenerate but uncorrelated: best prediction is the mean
            out.degenerate = true;
            out.gain = Gain2{};
            out.gamma_cond = out.gamma_f2;
        } else {
            throw Error("conditional_covariance: Gamma_F1 is singular");
        }
    } else {
        double inv[2][2] = {{g1.zz / det, -g1.yz / det}, {-g1.yz / det, g1.yy / det}};
        const auto& c = out.gamma_cross.a;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                out.gain.a[i][j] = c[i][0] * inv[0][j] + c[i][1] * inv[1][j];
        // Gamma_cond = Gamma_2 - A Gamma_12, with Gamma_12 = Gamma_21^T
        double g12[2][2] = {{c[0][0], c[1][0]}, {c[0][1], c[1][1]}};
        double sub[2][2];
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                sub[i][j] = out.gain.a[i][0] * g12[0][j] + out.gain.a[i][1] * g12[1][j];
        out.gamma_cond = {out.gamma_f2.yy - sub[0][0],
                          out.gamma_f2.yz - 0.5 * (sub[0][1] + sub[1][0]),
                          out.gamma_f2.zz - sub[1][1]};
    }

    out.residuals.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out.residuals[i] = f2[i] - apply(out.gain, f1[i]);
    return out;
}

PolarVariances polar_decompose(const Mat2& gamma, Vec2 mean_f) {
    double len = norm(mean_f);
    if (len <= 0.0)
        throw Error("polar_decompose: zero mean vector, direction undefined");
    double psi = std::atan2(-mean_f.y, mean_f.z);
    Vec2 rho_hat{-std::sin(psi), std::cos(psi)};
    Vec2 psi_hat{-std::cos(psi), -std::sin(psi)};
    return {quad_form(gamma, rho_hat), quad_form(gamma, psi_hat), psi};
}

TrackingReport track_ensemble(std::span<const MeasurementTrace> traces, double g,
                              const TrackOptions& opts) {
    if (traces.empty())
        throw Error("track_ensemble: empty ensemble");
    const auto& t0 = traces.front().times;
    double span = t0.back();

    std::vector<double> grid = opts.t_e_grid;
    if (grid.empty()) {
        for (double te = 30.0; te <= span - opts.delta_t + 1e-9; te += 40.0)
            grid.push_back(te);
    }
    if (grid.empty())
        throw Error("track_ensemble: empty t_e grid");

    std::size_t n_tr = traces.size();
    std::size_t n_te = grid.size();
    // estimates[t_e][trace]; invalid entries flagged
    std::vector<std::vector<Vec2>> est1(n_te), est2(n_te);
    std::vector<std::vector<char>> ok(n_te, std::vector<char>(n_tr, 0));
    for (auto& v : est1)
        v.resize(n_tr);
    for (auto& v : est2)
        v.resize(n_tr);

    std::vector<int> fail_count(n_tr, 0);
    auto worker = [&](std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
            for (std::size_t i = 0; i < n_te; ++i) {
                double te = grid[i];
                try {
                    FidFitOptions fo = opts.fit;
                    auto fit = fit_global(traces[j], g, te, opts.weights, fo);
                    if (fit.status != FitStatus::converged)
                        throw Error("global fit did not converge");
                    auto p1 = fit_phase_point(traces[j], fit.params, te, opts.delta_t,
                                              WindowSide::predictive);
                    auto p2 = fit_phase_point(traces[j], fit.params, te, opts.delta_t,
                                              WindowSide::confirming);
                    est1[i][j] = p1.f;
                    est2[i][j] = p2.f;
                    ok[i][j] = 1;
                } catch (const Error&) {
                    ++fail_count[j];
                }
            }
        }
    };

    int jobs = std::max(1, opts.jobs);
    jobs = std::min<int>(jobs, static_cast<int>(n_tr));
    if (jobs == 1) {
        worker(0, n_tr);
    } else {
        std::vector<std::thread> threads;
        std::size_t chunk = (n_tr + jobs - 1) / jobs;
        for (int t = 0; t < jobs; ++t) {
            std::size_t b = t * chunk, e = std::min(n_tr, b + chunk);
            if (b < e)
                threads.emplace_back(worker, b, e);
        }
        for (auto& th : threads)
            th.join();
    }

    TrackingReport report;
    for (int c : fail_count)
        report.failed_fits += c;
    std::size_t total = n_te * n_tr;
    if (report.failed_fits > 0 &&
        static_cast<double>(report.failed_fits) > 0.10 * static_cast<double>(total)) {
        std::ostringstream os;
        os << "track_ensemble: " << report.failed_fits << " of " << total
           << " fits failed";
        throw Error(os.str());
    }

    bool have_truth = !traces.front().truth.empty();
    double dt = t0.size() > 1 ? t0[1] - t0[0] : 1.0;

    report.points.reserve(n_te);
    report.residuals.resize(n_te);
    report.trace_ids.resize(n_te);
    for (std::size_t i = 0; i < n_te; ++i) {
        std::vector<Vec2> f1, f2;
        std::vector<int> ids;
        f1.reserve(n_tr);
        f2.reserve(n_tr);
        for (std::size_t j = 0; j < n_tr; ++j) {
            if (!ok[i][j])
                continue;
            f1.push_back(est1[i][j]);
            f2.push_back(est2[i][j]);
            ids.push_back(static_cast<int>(j));
        }
        if (f1.size() < 3)
            throw Error("track_ensemble: fewer than 3 usable traces at a grid point");
        auto cc = conditional_covariance(f1, f2);

        TrackPoint pt;
        pt.t_e = grid[i];
        pt.n_traces = static_cast<int>(f1.size());
        Vec2 mean1{0, 0};
        for (const auto& v : f1)
            mean1 = mean1 + v;
        mean1 = (1.0 / double(f1.size())) * mean1;
        pt.mean_f1 = mean1;
        pt.gamma_cond = cc.gamma_cond;

        // Benchmarks: spin length from the truth channel when present,
        // otherwise from the mean predictive estimate.
        double rho_mean;
        std::size_t k = static_cast<std::size_t>(std::llround(grid[i] / dt));
        k = std::min(k, t0.size() - 1);
        if (have_truth) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n_tr; ++j)
                acc += std::hypot(traces[j].truth[k].fy, traces[j].truth[k].fz);
            rho_mean = acc / double(n_tr);
        } else {
            rho_mean = norm(mean1);
        }
        pt.sql = rho_mean / 2.0;
        bool truth_has_atoms = have_truth && traces.front().truth[k].atoms >= 0.0;
        if (truth_has_atoms) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n_tr; ++j)
                acc += traces[j].truth[k].atoms;
            pt.poisson = acc / double(n_tr);
        } else if (opts.atoms_mean > 0.0) {
            double steps = grid[i] / opts.pulse_interval_us;
            pt.poisson = opts.atoms_mean * std::pow(opts.survival_per_interval, steps);
        } else {
            pt.poisson = rho_mean;  // fallback: fully polarized ensemble
        }

        auto pv = polar_decompose(cc.gamma_cond, mean1);
        pt.var_rho = pv.var_rho;
        pt.var_psi = pv.var_psi;
        pt.db_rho = 10.0 * std::log10(pt.poisson / pt.var_rho);
        pt.db_psi = 10.0 * std::log10(pt.sql / pt.var_psi);
        report.points.push_back(pt);
        report.residuals[i] = std::move(cc.residuals);
        report.trace_ids[i] = std::move(ids);
    }

    double acc_psi = 0.0, acc_rho = 0.0;
    int n_steady = 0;
    for (const auto& pt : report.points) {
        if (pt.t_e >= opts.steady_min_te) {
            acc_psi += pt.db_psi;
            acc_rho += pt.db_rho;
            ++n_steady;
        }
        if (!report.sql_crossing_te && pt.var_psi < pt.sql)
            report.sql_crossing_te = pt.t_e;
    }
    if (n_steady > 0) {
        report.steady_db_psi = acc_psi / n_steady;
        report.steady_db_rho = acc_rho / n_steady;
    }
    return report;
}

GainCheckReport fit_gain_check(std::span<const MeasurementTrace> traces, double g,
                               double t_e, double delta_t, const WeightParams& weights,
                               const FidFitOptions& fit) {
    if (traces.size() < 50)
        throw Error("fit_gain_check: need at least 50 traces");
    std::vector<Vec2> fixed1, free1, fixed2, free2;
    int excluded = 0;
    for (const auto& tr : traces) {
        try {
            auto gf = fit_global(tr, g, t_e, weights, fit);
            if (gf.status != FitStatus::converged)
                throw Error("no convergence");
            auto p1 = fit_phase_point(tr, gf.params, t_e, delta_t, WindowSide::predictive);
            auto p2 = fit_phase_point(tr, gf.params, t_e, delta_t, WindowSide::confirming);
            FidFitOptions free_opts = fit;
            free_opts.omega_init = gf.params.omega_l;
            free_opts.t2_init = gf.params.t2_us;
            auto w1 = fit_window_free(tr, g, t_e, delta_t, WindowSide::predictive, free_opts);
            auto w2 = fit_window_free(tr, g, t_e, delta_t, WindowSide::confirming, free_opts);
            if (w1.status == FitStatus::degenerate || w2.status == FitStatus::degenerate)
                throw Error("free fit degenerate");
            fixed1.push_back(p1.f);
            fixed2.push_back(p2.f);
            free1.push_back({w1.fy, w1.fz});
            free2.push_back({w2.fy, w2.fz});
        } catch (const Error&) {
            ++excluded;
        }
    }
    if (fixed1.size() < 10)
        throw Error("fit_gain_check: too many excluded traces");

    GainCheckReport rep;
    rep.excluded = excluded;
    rep.max_gamma_deviation = 0.0;
    auto add_panel = [&](const std::vector<Vec2>& xs, const std::vector<Vec2>& ys,
                         int comp, WindowSide side) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        double n = double(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double x = comp == 0 ? xs[i].y : xs[i].z;
            double y = comp == 0 ? ys[i].y : ys[i].z;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        double det = n * sxx - sx * sx;
        if (det <= 0.0)
            throw Error("fit_gain_check: degenerate regression");
        double gamma = (n * sxy - sx * sy) / det;
        double delta = (sy - gamma * sx) / n;
        double sse = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double x = comp == 0 ? xs[i].y : xs[i].z;
            double y = comp == 0 ? ys[i].y : ys[i].z;
            double r = y - gamma * x - delta;
            sse += r * r;
        }
        double sigma2 = sse / std::max(1.0, n - 2.0);
        double gamma_se = std::sqrt(sigma2 * n / det);
        rep.panels.push_back({gamma, delta, gamma_se, comp, side});
        rep.max_gamma_deviation = std::max(rep.max_gamma_deviation, std::abs(gamma - 1.0));
    };
    add_panel(fixed1, free1, 0, WindowSide::predictive);
    add_panel(fixed1, free1, 1, WindowSide::predictive);
    add_panel(fixed2, free2, 0, WindowSide::confirming);
    add_panel(fixed2, free2, 1, WindowSide::confirming);
    return rep;
}

}  // namespace spintrack
