#include "spintrack/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <vector>

#include "spintrack/rng.hpp"

namespace spintrack {

namespace {

// Minimal dense square matrix for the (1+Np)-dimensional propagation.
class Dense {
  public:
    explicit Dense(std::size_t n) : n_(n), d_(n * n, 0.0) {}
    double& at(std::size_t i, std::size_t j) { return d_[i * n_ + j]; }
    double at(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
    std::size_t size() const { return n_; }

  private:
    std::size_t n_;
    std::vector<double> d_;
};

}  // namespace

AlphaResult compute_alpha(const StroboscopicConfig& cfg) {
    if (cfg.n_pulses < 1 || cfg.chi <= 0.0 || cfg.chi > 1.0 || cfg.p_return < 0.0 ||
        cfg.p_return > 1.0)
        throw Error("compute_alpha: invalid configuration");

    std::size_t np = static_cast<std::size_t>(cfg.n_pulses);
    std::size_t dim = 1 + np;
    double sx = cfg.photons / 2.0;
    double coupling = cfg.g * sx;
    double damp = std::sqrt(cfg.chi);

    Dense gamma(dim);
    gamma.at(0, 0) = cfg.atoms / 2.0;
    for (std::size_t k = 1; k < dim; ++k)
        gamma.at(k, k) = cfg.photons / 4.0;  // input shot noise of Sy_k

    // Reinjection pool: scattered atoms returning to F=1 with random
    // polarization. The pool factor (chi*p)^(n-1) is the convention frozen
    // against the published stroboscopic noise-reduction value.
    double pool = 1.0;
    for (std::size_t n = 1; n <= np; ++n) {
        // Gamma <- D M Gamma M^T D^T + N, with M = I except M[0][0] = -1 and
        // M[n][0] = g Sx, D = diag(sqrt(chi), 1, ..., 1).
        // Exploit the structure: only row/column 0 and row/column n change.
        std::vector<double> row0(dim), rown(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            row0[j] = -gamma.at(0, j);
            rown[j] = gamma.at(n, j) + coupling * gamma.at(0, j);
        }
        for (std::size_t j = 0; j < dim; ++j) {
            gamma.at(0, j) = row0[j];
            gamma.at(n, j) = rown[j];
        }
        for (std::size_t i = 0; i < dim; ++i) {
            double c0 = -gamma.at(i, 0);
            double cn = gamma.at(i, n) + coupling * gamma.at(i, 0);
            gamma.at(i, 0) = c0;
            gamma.at(i, n) = cn;
        }
        for (std::size_t j = 0; j < dim; ++j) {
            gamma.at(0, j) *= damp;
            gamma.at(j, 0) *= damp;
        }
        gamma.at(0, 0) += (2.0 / 3.0) * cfg.p_return * (1.0 - cfg.chi) * pool * cfg.atoms;
        pool *= cfg.chi * cfg.p_return;

        if (gamma.at(0, 0) < 0.0 || gamma.at(n, n) < 0.0)
            throw Error("compute_alpha: propagation produced a negative variance");
    }

    // Alternating pulse-train projection, Fz excluded.
    double var_total = 0.0;
    for (std::size_t i = 1; i < dim; ++i) {
        double pi = (i % 2 == 1) ? 1.0 : -1.0;
        for (std::size_t j = 1; j < dim; ++j) {
            double pj = (j % 2 == 1) ? 1.0 : -1.0;
            var_total += pi * pj * gamma.at(i, j);
        }
    }
    double var_shot = double(np) * cfg.photons / 4.0;
    double var_atomic = var_total - var_shot;
    double alpha = var_atomic / (coupling * coupling) /
                   (double(np) * double(np) * cfg.atoms / 2.0);
    return {alpha / 8.0, alpha};
}

LineFit fit_mu1(std::span<const std::pair<double, double>> points) {
    std::size_t n = points.size();
    if (n < 3)
        throw Error("fit_mu1: need at least 3 points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [x, y] : points) {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    double det = double(n) * sxx - sx * sx;
    if (det <= 0.0 || det < 1e-12 * sxx * double(n))
        throw Error("fit_mu1: rank-deficient abscissa");
    LineFit f;
    f.slope = (double(n) * sxy - sx * sy) / det;
    f.intercept = (sy - f.slope * sx) / double(n);
    double sse = 0.0;
    for (auto [x, y] : points) {
        double r = y - f.slope * x - f.intercept;
        sse += r * r;
    }
    double sigma2 = sse / std::max(1.0, double(n) - 2.0);
    f.slope_se = std::sqrt(sigma2 * double(n) / det);
    f.intercept_se = std::sqrt(sigma2 * sxx / det);
    return f;
}

Mu2Fit fit_mu2(std::span<const std::pair<double, double>> points, double alpha) {
    std::size_t n = points.size();
    if (n < 4)
        throw Error("fit_mu2: need at least 4 points");
    if (!(alpha > 0.0))
        throw Error("fit_mu2: alpha must be positive");

    // Normal equations for [1, x, x^2]; x rescaled for conditioning.
    double xs = 0.0;
    for (auto [x, y] : points)
        xs = std::max(xs, std::abs(x));
    if (xs <= 0.0)
        throw Error("fit_mu2: degenerate abscissa");
    double m[3][3] = {};
    double b[3] = {};
    for (auto [x, y] : points) {
        double u = x / xs;
        double basis[3] = {1.0, u, u * u};
        for (int i = 0; i < 3; ++i) {
            b[i] += basis[i] * y;
            for (int j = 0; j < 3; ++j)
                m[i][j] += basis[i] * basis[j];
        }
    }
    // solve 3x3 by Gaussian elimination
    double a[3][4];
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j)
            a[i][j] = m[i][j];
        a[i][3] = b[i];
    }
    for (int col = 0; col < 3; ++col) {
        int best = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(a[r][col]) > std::abs(a[best][col]))
                best = r;
        std::swap(a[col], a[best]);
        if (a[col][col] == 0.0)
            throw Error("fit_mu2: singular design");
        for (int r = 0; r < 3; ++r) {
            if (r == col)
                continue;
            double f = a[r][col] / a[col][col];
            for (int c = col; c < 4; ++c)
                a[r][c] -= f * a[col][c];
        }
    }
    double coef[3];
    for (int i = 0; i < 3; ++i)
        coef[i] = a[i][3] / a[i][i];

    Mu2Fit out;
    out.a0 = coef[0];
    out.a1 = coef[1] / xs;
    out.a2 = coef[2] / (xs * xs);
    out.a1_negative = out.a1 < 0.0;
    out.mu2 = 2.0 * out.a1 / alpha;

    double sse = 0.0;
    for (auto [x, y] : points) {
        double r = y - (out.a0 + out.a1 * x + out.a2 * x * x);
        sse += r * r;
    }
    double sigma2 = sse / std::max(1.0, double(n) - 3.0);
    // covariance of scaled coefficients = sigma2 * inv(m); invert by adjugate
    double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                 m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                 m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    auto minor = [&](int i, int j) {
        int r0 = (i + 1) % 3, r1 = (i + 2) % 3, c0 = (j + 1) % 3, c1 = (j + 2) % 3;
        if (r0 > r1)
            std::swap(r0, r1);
        if (c0 > c1)
            std::swap(c0, c1);
        return m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    };
    if (det != 0.0) {
        out.a0_se = std::sqrt(std::abs(sigma2 * minor(0, 0) / det));
        out.a1_se = std::sqrt(std::abs(sigma2 * minor(1, 1) / det)) / xs;
        out.a2_se = std::sqrt(std::abs(sigma2 * minor(2, 2) / det)) / (xs * xs);
    }
    out.mu2_se = 2.0 * out.a1_se / alpha;
    return out;
}

double beam_coupling(const BeamSpec& beam, double r_um, double z_um) {
    double w0 = beam.waist_um;
    double zr = 3.141592653589793 * w0 * w0 / beam.wavelength_um;
    double wz2 = w0 * w0 * (1.0 + (z_um / zr) * (z_um / zr));
    return (w0 * w0 / wz2) * std::exp(-2.0 * r_um * r_um / wz2);
}

MomentsResult coupling_moments(const CloudSpec& cloud, const BeamSpec& beam,
                               std::int64_t samples, std::uint64_t seed, double g_peak,
                               int jobs) {
    if (samples < 2)
        throw Error("coupling_moments: need at least 2 samples");
    if (cloud.radial_sigma_um <= 0.0 || cloud.lorentz_fwhm_um <= 0.0 ||
        beam.waist_um <= 0.0)
        throw Error("coupling_moments: degenerate geometry");

    double gamma_l = cloud.lorentz_fwhm_um / 2.0;  // Lorentzian half width
    jobs = std::clamp(jobs, 1, 64);

    // Fixed-size blocks with per-block seeds: the result is identical for any
    // partitioning across threads.
    constexpr std::int64_t kBlock = 1 << 16;
    std::int64_t n_blocks = (samples + kBlock - 1) / kBlock;
    std::vector<double> s1(n_blocks, 0.0), s2(n_blocks, 0.0), s4(n_blocks, 0.0);

    auto run_block = [&](std::int64_t blk) {
        std::int64_t begin = blk * kBlock;
        std::int64_t end = std::min(samples, begin + kBlock);
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(blk)));
        double a1 = 0, a2 = 0, a4 = 0;
        for (std::int64_t i = begin; i < end; ++i) {
            // axial Lorentzian via inverse CDF, radial 2D Gaussian
            double u = rng.uniform();
            double z = gamma_l * std::tan(3.141592653589793 * (u - 0.5));
            double rx = rng.normal(0.0, cloud.radial_sigma_um);
            double ry = rng.normal(0.0, cloud.radial_sigma_um);
            double r = std::hypot(rx, ry);
            double g = g_peak * beam_coupling(beam, r, z);
            a1 += g;
            double g2 = g * g;
            a2 += g2;
            a4 += g2 * g2;
        }
        s1[blk] = a1;
        s2[blk] = a2;
        s4[blk] = a4;
    };
    if (jobs == 1 || n_blocks == 1) {
        for (std::int64_t b = 0; b < n_blocks; ++b)
            run_block(b);
    } else {
        std::vector<std::thread> threads;
        std::int64_t per = (n_blocks + jobs - 1) / jobs;
        for (int t = 0; t < jobs; ++t) {
            std::int64_t b0 = t * per, b1 = std::min(n_blocks, b0 + per);
            if (b0 < b1)
                threads.emplace_back([&, b0, b1] {
                    for (std::int64_t b = b0; b < b1; ++b)
                        run_block(b);
                });
        }
        for (auto& th : threads)
            th.join();
    }

    double n = double(samples), m1 = 0, m2 = 0, m4 = 0;
    for (std::int64_t b = 0; b < n_blocks; ++b) {
        m1 += s1[b];
        m2 += s2[b];
        m4 += s4[b];
    }
    m1 /= n;
    m2 /= n;
    m4 /= n;
    MomentsResult out;
    out.mu1 = m1;
    out.mu2 = m2;
    out.v2 = m2;  // Poisson-independent loading
    out.mu1_se = std::sqrt(std::max(0.0, m2 - m1 * m1) / n);
    out.mu2_se = std::sqrt(std::max(0.0, m4 - m2 * m2) / n);
    return out;
}

}  // namespace spintrack
