#include "spintrack/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>

namespace spintrack::kernels {

namespace {

void fid_basis_scalar(double t0, double dt, std::size_t n, double omega, double t2,
                      double* ce, double* se) {
    for (std::size_t i = 0; i < n; ++i) {
        double t = t0 + static_cast<double>(i) * dt;
        double env = std::exp(-t / t2);
        ce[i] = std::cos(omega * t) * env;
        se[i] = std::sin(omega * t) * env;
    }
}

DesignSums design_accum_scalar(const double* ce, const double* se, const double* y,
                               const double* w, std::size_t n) {
    DesignSums s;
    if (w) {
        for (std::size_t i = 0; i < n; ++i) {
            double wi = w[i], c = ce[i], v = se[i], yi = y[i];
            s.scc += wi * c * c;
            s.scs += wi * c * v;
            s.sss += wi * v * v;
            s.sc += wi * c;
            s.ss += wi * v;
            s.sw += wi;
            s.scy += wi * c * yi;
            s.ssy += wi * v * yi;
            s.sy += wi * yi;
            s.syy += wi * yi * yi;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            double c = ce[i], v = se[i], yi = y[i];
            s.scc += c * c;
            s.scs += c * v;
            s.sss += v * v;
            s.sc += c;
            s.ss += v;
            s.scy += c * yi;
            s.ssy += v * yi;
            s.sy += yi;
            s.syy += yi * yi;
        }
        s.sw = static_cast<double>(n);
    }
    return s;
}

LmSums lm_accum_scalar(const double* ce, const double* se, const double* y,
                       const double* w, double t0, double dt, std::size_t n,
                       double amp_a, double amp_b, double t2, double phi0) {
    LmSums s;
    for (std::size_t i = 0; i < n; ++i) {
        double t = t0 + static_cast<double>(i) * dt;
        double wi = w ? w[i] : 1.0;
        double model_osc = amp_a * ce[i] + amp_b * se[i];
        double r = y[i] - model_osc - phi0;
        double j0 = (amp_b * ce[i] - amp_a * se[i]) * t;  // d model / d omega
        double j1 = model_osc * (t / t2);                 // d model / d log T2
        // j2 = 1 (phi0)
        s.a[0] += wi * j0 * j0;
        s.a[1] += wi * j0 * j1;
        s.a[2] += wi * j0;
        s.a[3] += wi * j1 * j1;
        s.a[4] += wi * j1;
        s.a[5] += wi;
        s.b[0] += wi * j0 * r;
        s.b[1] += wi * j1 * r;
        s.b[2] += wi * r;
        s.sse += wi * r * r;
    }
    return s;
}

const Dispatch kScalar{fid_basis_scalar, design_accum_scalar, lm_accum_scalar, "scalar"};

}  // namespace

const Dispatch& scalar() { return kScalar; }

#if !defined(SPINTRACK_BUILD_AVX2)
const Dispatch* avx2() { return nullptr; }
#endif

const Dispatch& active() {
    static const Dispatch* selected = [] {
        const char* env = std::getenv("SPINTRACK_KERNELS");
        if (env && std::strcmp(env, "scalar") == 0)
            return &kScalar;
        const Dispatch* v = avx2();
        if (env && std::strcmp(env, "avx2") == 0 && v)
            return v;
        if (env && std::strcmp(env, "avx2") == 0)
            return &kScalar;  // requested but unavailable
#if defined(__x86_64__) || defined(_M_X64)
        if (v && __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
            return v;
#endif
        return &kScalar;
    }();
    return *selected;
}

}  // namespace spintrack::kernels
