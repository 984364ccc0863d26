#include "spintrack/fid_fit.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "spintrack/kernels.hpp"

namespace spintrack {

double weight_value(const WeightParams& wp, double t_rel, double phi, double t2_ref) {
    double g_t = 1.0 + wp.amp * std::exp(-wp.width * std::abs(t_rel) / t2_ref);
    double h_phi = 1.0 + wp.imbalance_slope * std::abs(phi);
    return g_t / h_phi;
}

namespace {

struct Grid {
    double t0;
    double dt;
    std::size_t i0, n;  // index range into the trace arrays
};

Grid window_grid(const MeasurementTrace& trace, double lo, double hi, bool half_open_hi,
                 bool half_open_lo) {
    const auto& ts = trace.times;
    if (ts.size() < 2)
        throw Error("fit: trace too short");
    double dt = ts[1] - ts[0];
    std::size_t i0 = 0, i1 = ts.size();
    // times are a uniform grid; locate the index range by arithmetic
    double first = ts.front();
    auto idx_of = [&](double t) { return (t - first) / dt; };
    double lo_i = std::ceil(idx_of(lo) - 1e-9);
    double hi_i = std::floor(idx_of(hi) + 1e-9);
    if (half_open_lo && std::abs(lo_i * dt + first - lo) < 1e-9 * dt)
        lo_i += 1.0;  // exclusive lower endpoint
    if (half_open_hi && std::abs(hi_i * dt + first - hi) < 1e-9 * dt)
        hi_i -= 1.0;  // exclusive upper endpoint
    i0 = static_cast<std::size_t>(std::max(0.0, lo_i));
    std::size_t iend = static_cast<std::size_t>(std::clamp(hi_i, -1.0, double(ts.size() - 1)) + 1);
    if (iend <= i0)
        return {0.0, dt, 0, 0};
    return {ts[i0], dt, i0, iend - i0};
}

double solve3(const double a[6], const double b[3], double lambda, double x[3]) {
    // a packs the symmetric 3x3 upper triangle row-major
    double m[3][3] = {{a[0] * (1.0 + lambda), a[1], a[2]},
                      {a[1], a[3] * (1.0 + lambda), a[4]},
                      {a[2], a[4], a[5] * (1.0 + lambda)}};
    double rhs[3] = {b[0], b[1], b[2]};
    // Gaussian elimination with partial pivoting
    int piv[3] = {0, 1, 2};
    for (int col = 0; col < 3; ++col) {
        int best = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(m[piv[r]][col]) > std::abs(m[piv[best]][col]))
                best = r;
        std::swap(piv[col], piv[best]);
        double d = m[piv[col]][col];
        if (d == 0.0)
            return 0.0;
        for (int r = col + 1; r < 3; ++r) {
            double f = m[piv[r]][col] / d;
            for (int c = col; c < 3; ++c)
                m[piv[r]][c] -= f * m[piv[col]][c];
            rhs[piv[r]] -= f * rhs[piv[col]];
        }
    }
    for (int col = 2; col >= 0; --col) {
        double s = rhs[piv[col]];
        for (int c = col + 1; c < 3; ++c)
            s -= m[piv[col]][c] * x[c];
        if (m[piv[col]][col] == 0.0)
            return 0.0;
        x[col] = s / m[piv[col]][col];
    }
    return 1.0;
}

struct ProfileResult {
    double amp_a = 0.0, amp_b = 0.0;  // model = amp_a*ce + amp_b*se + phi0
    double sse = 0.0;
    double det_scale = 0.0;  // conditioning indicator of the 2x2 solve
    kernels::DesignSums sums;
};

ProfileResult profile_amplitudes(const double* ce, const double* se, const double* y,
                                 const double* w, std::size_t n, double phi0) {
    const auto& k = kernels::active();
    ProfileResult out;
    auto s = k.design_accum(ce, se, y, w, n);
    out.sums = s;
    double b1 = s.scy - phi0 * s.sc;
    double b2 = s.ssy - phi0 * s.ss;
    double det = s.scc * s.sss - s.scs * s.scs;
    double scale = 0.5 * (s.scc + s.sss);
    out.det_scale = scale > 0.0 ? det / (scale * scale) : 0.0;
    if (det <= 0.0 || out.det_scale < 1e-12) {
        out.amp_a = out.amp_b = 0.0;
    } else {
        out.amp_a = (s.sss * b1 - s.scs * b2) / det;
        out.amp_b = (s.scc * b2 - s.scs * b1) / det;
    }
    double a = out.amp_a, b = out.amp_b;
    out.sse = s.syy + a * a * s.scc + b * b * s.sss + phi0 * phi0 * s.sw +
              2.0 * (a * b * s.scs + a * phi0 * s.sc + b * phi0 * s.ss) -
              2.0 * (a * s.scy + b * s.ssy + phi0 * s.sy);
    return out;
}

FidFitResult fit_core(const MeasurementTrace& trace, const Grid& grid, double g,
                      double t_e, const WeightParams& wp, const FidFitOptions& opts) {
    const std::size_t n = grid.n;
    if (n < 20)
        throw Error("fit_global: fewer than 20 points in range");
    const double* y = trace.angles.data() + grid.i0;
    double t0 = grid.t0 - t_e;
    double dt = grid.dt;

    std::vector<double> wbuf;
    const double* w = nullptr;
    if (wp.amp != 0.0 || wp.imbalance_slope != 0.0) {
        wbuf.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            wbuf[i] = weight_value(wp, t0 + double(i) * dt, y[i], opts.weight_t2_ref);
        w = wbuf.data();
    }

    const auto& k = kernels::active();
    std::vector<double> ce(n), se(n);

    double omega = opts.omega_init;
    double lt2 = std::log(std::clamp(opts.t2_init, opts.t2_min, opts.t2_max));
    double phi0 = 0.0;
    {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            s += y[i];
        phi0 = s / double(n);
    }

    auto evaluate = [&](double om, double l2, double p0) {
        k.fid_basis(t0, dt, n, om, std::exp(l2), ce.data(), se.data());
        return profile_amplitudes(ce.data(), se.data(), y, w, n, p0);
    };

    ProfileResult cur = evaluate(omega, lt2, phi0);
    double lambda = 1e-3;
    bool t2_pinned = false;
    int it = 0;
    bool converged = false;
    const double log_t2_min = std::log(opts.t2_min), log_t2_max = std::log(opts.t2_max);

    for (; it < opts.max_iterations; ++it) {
        double t2 = std::exp(lt2);
        auto lm = k.lm_accum(ce.data(), se.data(), y, w, t0, dt, n, cur.amp_a,
                             cur.amp_b, t2, phi0);
        double dx[3];
        if (solve3(lm.a, lm.b, lambda, dx) == 0.0) {
            lambda *= 8.0;
            continue;
        }
        double om_n = omega + dx[0];
        double lt2_n = std::clamp(lt2 + dx[1], log_t2_min, log_t2_max);
        double p0_n = phi0 + dx[2];
        ProfileResult cand = evaluate(om_n, lt2_n, p0_n);
        if (cand.sse <= cur.sse) {
            double rel = std::max({std::abs(om_n - omega) / (std::abs(omega) + 1e-30),
                                   std::abs(lt2_n - lt2) / (std::abs(lt2) + 1e-30),
                                   std::abs(p0_n - phi0) /
                                       (std::abs(phi0) + 1e-12)});
            t2_pinned = lt2_n <= log_t2_min + 1e-12 || lt2_n >= log_t2_max - 1e-12;
            omega = om_n;
            lt2 = lt2_n;
            phi0 = p0_n;
            cur = cand;
            lambda = std::max(lambda * 0.3, 1e-10);
            if (rel < opts.rel_tol) {
                converged = true;
                ++it;
                break;
            }
        } else {
            lambda *= 8.0;
            if (lambda > 1e8) {
                converged = true;  // no descent direction left
                ++it;
                break;
            }
        }
        // keep basis arrays in sync with the accepted parameters
        if (cand.sse > cur.sse)
            k.fid_basis(t0, dt, n, omega, std::exp(lt2), ce.data(), se.data());
    }

    FidFitResult res;
    res.params = {g, omega, std::exp(lt2), phi0};
    res.iterations = it;
    res.residual_norm = std::sqrt(std::max(0.0, cur.sse));
    res.t2_at_bound = t2_pinned;
    res.fz = cur.amp_a / g;
    res.fy = -cur.amp_b / g;

    // Degenerate amplitude: both estimates statistically indistinguishable from
    // zero means the nonlinear parameters are unidentified.
    double dof = std::max(1.0, cur.sums.sw - 5.0);
    double sigma2 = cur.sse / dof;
    double det = cur.sums.scc * cur.sums.sss - cur.sums.scs * cur.sums.scs;
    bool degenerate = true;
    if (det > 0.0 && cur.det_scale >= 1e-12) {
        double var_a = sigma2 * cur.sums.sss / det;
        double var_b = sigma2 * cur.sums.scc / det;
        double sig_a = cur.amp_a * cur.amp_a / std::max(var_a, 1e-300);
        double sig_b = cur.amp_b * cur.amp_b / std::max(var_b, 1e-300);
        degenerate = sig_a < 9.0 && sig_b < 9.0;
    }
    if (degenerate)
        res.status = FitStatus::degenerate;
    else if (!converged)
        res.status = FitStatus::max_iterations;
    else
        res.status = FitStatus::converged;
    return res;
}

}  // namespace

FidFitResult fit_global(const MeasurementTrace& trace, double g, double t_e,
                        const WeightParams& weights, const FidFitOptions& opts) {
    Grid grid{trace.times.front(), trace.times.size() > 1 ? trace.times[1] - trace.times[0] : 1.0,
              0, trace.times.size()};
    if (t_e < trace.times.front() || t_e > trace.times.back())
        throw Error("fit_global: t_e outside trace span");
    return fit_core(trace, grid, g, t_e, weights, opts);
}

PhaseEstimate fit_phase_point(const MeasurementTrace& trace, const FidModelParams& params,
                              double t_e, double delta_t, WindowSide side) {
    Grid grid = side == WindowSide::predictive
                    ? window_grid(trace, t_e - delta_t, t_e, true, false)
                    : window_grid(trace, t_e, t_e + delta_t, false, true);
    if (grid.n < 2)
        throw Error("fit_phase_point: window contains fewer than 2 points");

    const auto& k = kernels::active();
    std::vector<double> ce(grid.n), se(grid.n);
    double t0 = grid.t0 - t_e;
    k.fid_basis(t0, grid.dt, grid.n, params.omega_l, params.t2_us, ce.data(), se.data());
    auto s = k.design_accum(ce.data(), se.data(), trace.angles.data() + grid.i0, nullptr,
                            grid.n);
    // model: phi = g*Fz*ce - g*Fy*se + phi0, uniform weights
    double b1 = s.scy - params.phi0 * s.sc;
    double b2 = s.ssy - params.phi0 * s.ss;
    double det = s.scc * s.sss - s.scs * s.scs;
    double scale = 0.5 * (s.scc + s.sss);
    if (det <= 0.0 || det < 1e-12 * scale * scale)
        throw Error("fit_phase_point: singular normal matrix (window too short)");
    double amp_a = (s.sss * b1 - s.scs * b2) / det;   // g*Fz
    double amp_b = (s.scc * b2 - s.scs * b1) / det;   // -g*Fy
    PhaseEstimate est;
    est.f = {-amp_b / params.g, amp_a / params.g};
    est.t_e = t_e;
    est.win_start = grid.t0;
    est.win_end = grid.t0 + grid.dt * double(grid.n - 1);
    est.side = side;
    est.n_points = static_cast<int>(grid.n);
    return est;
}

FidFitResult fit_window_free(const MeasurementTrace& trace, double g, double t_e,
                             double delta_t, WindowSide side, const FidFitOptions& opts) {
    Grid grid = side == WindowSide::predictive
                    ? window_grid(trace, t_e - delta_t, t_e, true, false)
                    : window_grid(trace, t_e, t_e + delta_t, false, true);
    FidFitOptions o = opts;
    o.rel_tol = std::max(opts.rel_tol, 1e-10);
    return fit_core(trace, grid, g, t_e, WeightParams{}, o);
}

}  // namespace spintrack
