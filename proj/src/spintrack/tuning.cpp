#include "spintrack/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace spintrack {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double guarded(const std::function<double(std::span<const double>)>& f,
               std::span<const double> x) {
    try {
        double v = f(x);
        return std::isfinite(v) ? v : kInf;
    } catch (...) {
        return kInf;
    }
}

}  // namespace

SimplexResult nelder_mead(const std::function<double(std::span<const double>)>& objective,
                          std::span<const double> x0, const SimplexOptions& opts) {
    std::size_t dim = x0.size();
    if (dim == 0)
        throw Error("nelder_mead: empty parameter vector");

    std::vector<std::vector<double>> pts(dim + 1, std::vector<double>(x0.begin(), x0.end()));
    for (std::size_t i = 0; i < dim; ++i) {
        double step = opts.initial_step * std::max(std::abs(x0[i]), 0.1);
        pts[i + 1][i] += step;
    }

    SimplexResult res;
    res.evaluations = 0;
    std::vector<double> vals(dim + 1);
    auto eval = [&](std::span<const double> x) {
        double v = guarded(objective, x);
        ++res.evaluations;
        double best = res.best_history.empty() ? kInf : res.best_history.back();
        res.best_history.push_back(std::min(best, v));
        return v;
    };
    for (std::size_t i = 0; i <= dim; ++i)
        vals[i] = eval(pts[i]);

    auto order = [&] {
        std::vector<std::size_t> idx(dim + 1);
        for (std::size_t i = 0; i <= dim; ++i)
            idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
        std::vector<std::vector<double>> np(dim + 1);
        std::vector<double> nv(dim + 1);
        for (std::size_t i = 0; i <= dim; ++i) {
            np[i] = pts[idx[i]];
            nv[i] = vals[idx[i]];
        }
        pts = std::move(np);
        vals = std::move(nv);
    };

    while (res.evaluations < opts.max_evaluations) {
        order();
        double diameter = 0.0, scale = 0.0;
        for (std::size_t i = 1; i <= dim; ++i)
            for (std::size_t k = 0; k < dim; ++k) {
                diameter = std::max(diameter, std::abs(pts[i][k] - pts[0][k]));
                scale = std::max(scale, std::abs(pts[0][k]));
            }
        if (diameter < opts.rel_diameter_tol * std::max(1.0, scale))
            break;

        std::vector<double> centroid(dim, 0.0);
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t k = 0; k < dim; ++k)
                centroid[k] += pts[i][k] / double(dim);

        auto blend = [&](double t) {
            std::vector<double> x(dim);
            for (std::size_t k = 0; k < dim; ++k)
                x[k] = centroid[k] + t * (pts[dim][k] - centroid[k]);
            return x;
        };

        auto xr = blend(-1.0);
        double fr = eval(xr);
        if (fr < vals[0]) {
            auto xe = blend(-2.0);
            double fe = eval(xe);
            if (fe < fr) {
                pts[dim] = xe;
                vals[dim] = fe;
            } else {
                pts[dim] = xr;
                vals[dim] = fr;
            }
        } else if (fr < vals[dim - 1]) {
            pts[dim] = xr;
            vals[dim] = fr;
        } else {
            auto xc = blend(fr < vals[dim] ? -0.5 : 0.5);
            double fc = eval(xc);
            if (fc < std::min(fr, vals[dim])) {
                pts[dim] = xc;
                vals[dim] = fc;
            } else {
                // shrink toward the best vertex
                for (std::size_t i = 1; i <= dim; ++i) {
                    for (std::size_t k = 0; k < dim; ++k)
                        pts[i][k] = pts[0][k] + 0.5 * (pts[i][k] - pts[0][k]);
                    vals[i] = eval(pts[i]);
                    if (res.evaluations >= opts.max_evaluations)
                        break;
                }
            }
        }
    }
    order();
    res.x = pts[0];
    res.value = vals[0];
    return res;
}

namespace {

double weight_objective(std::span<const MeasurementTrace> traces, double g, double t_e,
                        double delta_t, const WeightParams& wp, const FidFitOptions& fit,
                        int jobs) {
    TrackOptions to;
    to.delta_t = delta_t;
    to.t_e_grid = {t_e};
    to.weights = wp;
    to.fit = fit;
    to.jobs = jobs;
    auto rep = track_ensemble(traces, g, to);
    return rep.points.front().gamma_cond.trace();
}

}  // namespace

WeightOptResult optimize_weights(std::span<const MeasurementTrace> traces, double g,
                                 double t_e, double delta_t, const WeightParams& init,
                                 const FidFitOptions& fit, int jobs,
                                 const SimplexOptions& simplex) {
    if (traces.size() < 50)
        throw Error("optimize_weights: need at least 50 traces");

    auto objective = [&](std::span<const double> x) {
        WeightParams wp;
        wp.amp = std::max(0.0, x[0]);
        wp.width = std::max(1e-6, x[1]);
        wp.imbalance_slope = std::max(0.0, x[2]);
        return weight_objective(traces, g, t_e, delta_t, wp, fit, jobs);
    };

    std::vector<double> x0{init.amp, init.width, init.imbalance_slope};
    auto first = nelder_mead(objective, x0, simplex);

    // One restart from the perturbed optimum guards against premature collapse.
    std::vector<double> x1 = first.x;
    for (auto& v : x1)
        v = v * 1.05 + 0.01;
    auto second = nelder_mead(objective, x1, simplex);

    const SimplexResult& best = second.value < first.value ? second : first;
    WeightOptResult out;
    out.best.amp = std::max(0.0, best.x[0]);
    out.best.width = std::max(1e-6, best.x[1]);
    out.best.imbalance_slope = std::max(0.0, best.x[2]);
    out.objective = best.value;
    out.history = first.best_history;
    for (double v : second.best_history)
        out.history.push_back(std::min(v, out.history.back()));
    out.evaluations = first.evaluations + second.evaluations;
    return out;
}

SweepResult sweep_delta_t(std::span<const MeasurementTrace> traces, double g, double t_e,
                          std::span<const double> candidates, const WeightParams& weights,
                          const FidFitOptions& fit, int jobs) {
    if (candidates.empty())
        throw Error("sweep_delta_t: no candidates");
    if (traces.empty())
        throw Error("sweep_delta_t: empty ensemble");
    double span = traces.front().times.back();

    SweepResult out;
    out.argmin_delta_t = 0.0;
    double best = kInf;
    for (double dtw : candidates) {
        SweepRow row{dtw, 0.0, 0.0, 0, false};
        if (t_e - dtw < -1e-9 || t_e + dtw > span + 1e-9) {
            row.skipped = true;
            out.rows.push_back(row);
            continue;
        }
        TrackOptions to;
        to.delta_t = dtw;
        to.t_e_grid = {t_e};
        to.weights = weights;
        to.fit = fit;
        to.jobs = jobs;
        auto rep = track_ensemble(traces, g, to);
        row.trace_gamma_cond = rep.points.front().gamma_cond.trace();
        row.n_traces = rep.points.front().n_traces;

        // jackknife over traces on the residual covariance trace
        const auto& res = rep.residuals.front();
        std::size_t n = res.size();
        if (n > 3) {
            double sy = 0, sz = 0, syy = 0, szz = 0;
            for (const auto& r : res) {
                sy += r.y;
                sz += r.z;
                syy += r.y * r.y;
                szz += r.z * r.z;
            }
            std::vector<double> loo(n);
            for (std::size_t i = 0; i < n; ++i) {
                double m = double(n - 1);
                double my = (sy - res[i].y) / m;
                double mz = (sz - res[i].z) / m;
                double vy = (syy - res[i].y * res[i].y) / m - my * my;
                double vz = (szz - res[i].z * res[i].z) / m - mz * mz;
                loo[i] = (vy + vz) * m / (m - 1.0);
            }
            double mean = 0;
            for (double v : loo)
                mean += v;
            mean /= double(n);
            double var = 0;
            for (double v : loo)
                var += (v - mean) * (v - mean);
            row.stderr_jackknife = std::sqrt(var * double(n - 1) / double(n));
        }
        if (row.trace_gamma_cond < best) {
            best = row.trace_gamma_cond;
            out.argmin_delta_t = dtw;
        }
        out.rows.push_back(row);
    }
    if (!std::isfinite(best))
        throw Error("sweep_delta_t: no candidate fits within the trace span");
    return out;
}

}  // namespace spintrack
