#pragma once

#include <cstddef>

namespace spintrack::kernels {

// Accumulated sums for a linear model y ~ A*ce + B*se + p0 with optional
// per-point weights (w == nullptr means uniform).
struct DesignSums {
    double scc = 0, scs = 0, sss = 0;  // weighted basis Gram
    double sc = 0, ss = 0, sw = 0;     // weighted basis/weight totals
    double scy = 0, ssy = 0, sy = 0;   // weighted data projections
    double syy = 0;
};

// Normal-equation sums for the damped least-squares step over
// (omega, log T2, phi0) with amplitudes held at (A, B).
// a holds the symmetric 3x3 packed row-major upper triangle.
struct LmSums {
    double a[6] = {0, 0, 0, 0, 0, 0};
    double b[3] = {0, 0, 0};
    double sse = 0;
};

struct Dispatch {
    // ce[i] = cos(omega*t_i)*exp(-t_i/t2), se[i] = sin(...)*exp(...),
    // t_i = t0 + i*dt (uniform grid).
    void (*fid_basis)(double t0, double dt, std::size_t n, double omega, double t2,
                      double* ce, double* se);
    DesignSums (*design_accum)(const double* ce, const double* se, const double* y,
                               const double* w, std::size_t n);
    LmSums (*lm_accum)(const double* ce, const double* se, const double* y,
                       const double* w, double t0, double dt, std::size_t n,
                       double amp_a, double amp_b, double t2, double phi0);
    const char* name;
};

const Dispatch& scalar();
const Dispatch* avx2();        // nullptr when unavailable
const Dispatch& active();      // runtime-selected; SPINTRACK_KERNELS overrides

}  // namespace spintrack::kernels
