#include "spintrack/kernels.hpp"

#include <immintrin.h>

#include <cmath>
#include <cstddef>

namespace spintrack::kernels {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// Four phase-rotation recurrences in parallel, one rotation per stored lane
// step. Lane j carries indices j, j+4, j+8, ...
void fid_basis_avx2(double t0, double dt, std::size_t n, double omega, double t2,
                    double* ce, double* se) {
    std::size_t body = n / 4 * 4;
    if (body >= 8) {
        alignas(32) double c0[4], s0[4];
        for (int j = 0; j < 4; ++j) {
            double t = t0 + j * dt;
            double env = std::exp(-t / t2);
            c0[j] = std::cos(omega * t) * env;
            s0[j] = std::sin(omega * t) * env;
        }
        double step = 4.0 * dt;
        double e4 = std::exp(-step / t2);
        double cd = std::cos(omega * step) * e4;
        double sd = std::sin(omega * step) * e4;
        __m256d vc = _mm256_load_pd(c0);
        __m256d vs = _mm256_load_pd(s0);
        __m256d vcd = _mm256_set1_pd(cd);
        __m256d vsd = _mm256_set1_pd(sd);
        for (std::size_t i = 0; i < body; i += 4) {
            _mm256_storeu_pd(ce + i, vc);
            _mm256_storeu_pd(se + i, vs);
            __m256d nc = _mm256_fmsub_pd(vc, vcd, _mm256_mul_pd(vs, vsd));
            __m256d ns = _mm256_fmadd_pd(vs, vcd, _mm256_mul_pd(vc, vsd));
            vc = nc;
            vs = ns;
        }
    } else {
        body = 0;
    }
    for (std::size_t i = body; i < n; ++i) {
        double t = t0 + static_cast<double>(i) * dt;
        double env = std::exp(-t / t2);
        ce[i] = std::cos(omega * t) * env;
        se[i] = std::sin(omega * t) * env;
    }
}

DesignSums design_accum_avx2(const double* ce, const double* se, const double* y,
                             const double* w, std::size_t n) {
    DesignSums out;
    std::size_t body = n / 4 * 4;
    __m256d scc = _mm256_setzero_pd(), scs = scc, sss = scc, sc = scc, ss = scc;
    __m256d sw = scc, scy = scc, ssy = scc, sy = scc, syy = scc;
    if (w) {
        for (std::size_t i = 0; i < body; i += 4) {
            __m256d c = _mm256_loadu_pd(ce + i);
            __m256d s = _mm256_loadu_pd(se + i);
            __m256d yi = _mm256_loadu_pd(y + i);
            __m256d wi = _mm256_loadu_pd(w + i);
            __m256d wc = _mm256_mul_pd(wi, c);
            __m256d ws = _mm256_mul_pd(wi, s);
            __m256d wy = _mm256_mul_pd(wi, yi);
            scc = _mm256_fmadd_pd(wc, c, scc);
            scs = _mm256_fmadd_pd(wc, s, scs);
            sss = _mm256_fmadd_pd(ws, s, sss);
            sc = _mm256_add_pd(sc, wc);
            ss = _mm256_add_pd(ss, ws);
            sw = _mm256_add_pd(sw, wi);
            scy = _mm256_fmadd_pd(wc, yi, scy);
            ssy = _mm256_fmadd_pd(ws, yi, ssy);
            sy = _mm256_add_pd(sy, wy);
            syy = _mm256_fmadd_pd(wy, yi, syy);
        }
    } else {
        for (std::size_t i = 0; i < body; i += 4) {
            __m256d c = _mm256_loadu_pd(ce + i);
            __m256d s = _mm256_loadu_pd(se + i);
            __m256d yi = _mm256_loadu_pd(y + i);
            scc = _mm256_fmadd_pd(c, c, scc);
            scs = _mm256_fmadd_pd(c, s, scs);
            sss = _mm256_fmadd_pd(s, s, sss);
            sc = _mm256_add_pd(sc, c);
            ss = _mm256_add_pd(ss, s);
            scy = _mm256_fmadd_pd(c, yi, scy);
            ssy = _mm256_fmadd_pd(s, yi, ssy);
            sy = _mm256_add_pd(sy, yi);
            syy = _mm256_fmadd_pd(yi, yi, syy);
        }
    }
    out.scc = hsum(scc);
    out.scs = hsum(scs);
    out.sss = hsum(sss);
    out.sc = hsum(sc);
    out.ss = hsum(ss);
    out.sw = w ? hsum(sw) : static_cast<double>(body);
    out.scy = hsum(scy);
    out.ssy = hsum(ssy);
    out.sy = hsum(sy);
    out.syy = hsum(syy);
    for (std::size_t i = body; i < n; ++i) {
        double wi = w ? w[i] : 1.0, c = ce[i], s = se[i], yi = y[i];
        out.scc += wi * c * c;
        out.scs += wi * c * s;
        out.sss += wi * s * s;
        out.sc += wi * c;
        out.ss += wi * s;
        out.sw += wi;
        out.scy += wi * c * yi;
        out.ssy += wi * s * yi;
        out.sy += wi * yi;
        out.syy += wi * yi * yi;
    }
    return out;
}

LmSums lm_accum_avx2(const double* ce, const double* se, const double* y,
                     const double* w, double t0, double dt, std::size_t n,
                     double amp_a, double amp_b, double t2, double phi0) {
    LmSums out;
    std::size_t body = n / 4 * 4;
    __m256d a0 = _mm256_setzero_pd(), a1 = a0, a2 = a0, a3 = a0, a4 = a0, a5 = a0;
    __m256d b0 = a0, b1 = a0, b2 = a0, sse = a0;
    __m256d va = _mm256_set1_pd(amp_a);
    __m256d vb = _mm256_set1_pd(amp_b);
    __m256d vp0 = _mm256_set1_pd(phi0);
    __m256d vinvt2 = _mm256_set1_pd(1.0 / t2);
    __m256d t = _mm256_setr_pd(t0, t0 + dt, t0 + 2 * dt, t0 + 3 * dt);
    __m256d tstep = _mm256_set1_pd(4.0 * dt);
    __m256d one = _mm256_set1_pd(1.0);
    for (std::size_t i = 0; i < body; i += 4) {
        __m256d c = _mm256_loadu_pd(ce + i);
        __m256d s = _mm256_loadu_pd(se + i);
        __m256d yi = _mm256_loadu_pd(y + i);
        __m256d wi = w ? _mm256_loadu_pd(w + i) : one;
        __m256d osc = _mm256_fmadd_pd(va, c, _mm256_mul_pd(vb, s));
        __m256d r = _mm256_sub_pd(_mm256_sub_pd(yi, osc), vp0);
        __m256d j0 = _mm256_mul_pd(_mm256_fmsub_pd(vb, c, _mm256_mul_pd(va, s)), t);
        __m256d j1 = _mm256_mul_pd(osc, _mm256_mul_pd(t, vinvt2));
        __m256d wj0 = _mm256_mul_pd(wi, j0);
        __m256d wj1 = _mm256_mul_pd(wi, j1);
        __m256d wr = _mm256_mul_pd(wi, r);
        a0 = _mm256_fmadd_pd(wj0, j0, a0);
        a1 = _mm256_fmadd_pd(wj0, j1, a1);
        a2 = _mm256_add_pd(a2, wj0);
        a3 = _mm256_fmadd_pd(wj1, j1, a3);
        a4 = _mm256_add_pd(a4, wj1);
        a5 = _mm256_add_pd(a5, wi);
        b0 = _mm256_fmadd_pd(wj0, r, b0);
        b1 = _mm256_fmadd_pd(wj1, r, b1);
        b2 = _mm256_add_pd(b2, wr);
        sse = _mm256_fmadd_pd(wr, r, sse);
        t = _mm256_add_pd(t, tstep);
    }
    out.a[0] = hsum(a0);
    out.a[1] = hsum(a1);
    out.a[2] = hsum(a2);
    out.a[3] = hsum(a3);
    out.a[4] = hsum(a4);
    out.a[5] = hsum(a5);
    out.b[0] = hsum(b0);
    out.b[1] = hsum(b1);
    out.b[2] = hsum(b2);
    out.sse = hsum(sse);
    for (std::size_t i = body; i < n; ++i) {
        double ti = t0 + static_cast<double>(i) * dt;
        double wi = w ? w[i] : 1.0;
        double osc = amp_a * ce[i] + amp_b * se[i];
        double r = y[i] - osc - phi0;
        double j0 = (amp_b * ce[i] - amp_a * se[i]) * ti;
        double j1 = osc * (ti / t2);
        out.a[0] += wi * j0 * j0;
        out.a[1] += wi * j0 * j1;
        out.a[2] += wi * j0;
        out.a[3] += wi * j1 * j1;
        out.a[4] += wi * j1;
        out.a[5] += wi;
        out.b[0] += wi * j0 * r;
        out.b[1] += wi * j1 * r;
        out.b[2] += wi * r;
        out.sse += wi * r * r;
    }
    return out;
}

const Dispatch kAvx2{fid_basis_avx2, design_accum_avx2, lm_accum_avx2, "avx2"};

}  // namespace

const Dispatch* avx2() { return &kAvx2; }

}  // namespace spintrack::kernels
