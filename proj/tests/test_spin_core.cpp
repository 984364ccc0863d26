#include <doctest.h>

#include <cmath>

#include "spintrack/rng.hpp"
#include "spintrack/spin_state.hpp"

using namespace spintrack;

namespace {

constexpr double kPi = 3.141592653589793238462643383279;

GaussianSpinState random_valid_state(Rng& rng, double atoms = 1e6) {
    CoherentSpinStateSpec spec{atoms, false, 0.9 + 0.1 * rng.uniform()};
    GaussianSpinState s = make_css(spec, atoms);
    s = precess(s, 2.0 * kPi * rng.uniform());
    return s;
}

}  // namespace

TEST_CASE("make_css examples") {
    CoherentSpinStateSpec perfect{2.0, false, 1.0};
    auto s = make_css(perfect, 2.0);
    CHECK(s.mean.x == 0.0);
    CHECK(s.mean.y == doctest::Approx(2.0));
    CHECK(s.mean.z == 0.0);
    CHECK(s.cov.m[0][0] == doctest::Approx(1.0));
    CHECK(s.cov.m[1][1] == doctest::Approx(0.0));
    CHECK(s.cov.m[2][2] == doctest::Approx(1.0));
    CHECK(check_state(s).empty());

    CoherentSpinStateSpec pumped{1.88e6, false, 0.98};
    auto p = make_css(pumped, 1.88e6);
    CHECK(p.mean.y == doctest::Approx(1.8424e6));
    CHECK(p.cov.m[1][1] == doctest::Approx(0.02 * 1.88e6));

    auto zero = make_css(perfect, 0.0);
    CHECK(zero.mean.y == 0.0);
    CHECK(zero.cov.trace() == 0.0);

    CHECK_THROWS_AS(make_css(perfect, -1.0), Error);
}

TEST_CASE("precess examples and composition") {
    CoherentSpinStateSpec spec{1e6, false, 1.0};
    auto s = make_css(spec, 1e6);

    auto full = precess(s, 2.0 * kPi);
    CHECK(full.mean.y == doctest::Approx(s.mean.y).epsilon(1e-12));
    CHECK(full.mean.z == doctest::Approx(0.0).scale(s.mean.y));
    CHECK(full.cov.trace() == doctest::Approx(s.cov.trace()).epsilon(1e-12));

    // quarter period: (0, F, 0) -> (0, 0, -F)
    auto quarter = precess(s, kPi / 2.0);
    CHECK(quarter.mean.y == doctest::Approx(0.0).scale(1e6));
    CHECK(quarter.mean.z == doctest::Approx(-1e6).epsilon(1e-12));

    // B = 37.6 mG gives T_L ~ 38 us, so one 3 us interval is ~0.496 rad
    double omega = 2.0 * kPi / 38.0;
    CHECK(omega * 3.0 == doctest::Approx(0.496).epsilon(2e-3));

    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        double a = rng.normal(), b = rng.normal();
        auto two = precess(precess(s, a), b);
        auto one = precess(s, a + b);
        CHECK(two.mean.y == doctest::Approx(one.mean.y).epsilon(1e-12));
        CHECK(two.mean.z == doctest::Approx(one.mean.z).epsilon(1e-12));
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                CHECK(two.cov.m[r][c] ==
                      doctest::Approx(one.cov.m[r][c]).epsilon(1e-11).scale(5e5));
    }
}

TEST_CASE("qnd_update pooled variance and no-op") {
    double atoms = 1.88e6;
    CoherentSpinStateSpec spec{atoms, false, 1.0};
    auto s = make_css(spec, atoms);

    // g^2 |<Sx>| = 1/N_A halves var(Fz) exactly
    ProbeCoupling c;
    c.g = 1e-3;
    c.photons_v = 2.0 / (c.g * c.g * atoms);
    auto [s2, rv] = qnd_update(s, c);
    CHECK(s2.cov.m[2][2] == doctest::Approx(atoms / 4.0).epsilon(1e-12));
    CHECK(rv == doctest::Approx(atoms / 2.0).epsilon(1e-12));

    ProbeCoupling dark = c;
    dark.photons_v = 0.0;
    auto [s3, rv3] = qnd_update(s, dark);
    CHECK(s3.cov.m[2][2] == s.cov.m[2][2]);
    CHECK(std::isinf(rv3));

    // <Fy^2> ~ N^2 with kappa = 1/N gives dvar(Fx) ~ N/2
    double kappa = 1.0 / atoms;
    double dvx = s2.cov.m[0][0] - s.cov.m[0][0];
    double expected = kappa * (-0.5 * s.cov.m[0][0] +
                               0.5 * (s.cov.m[1][1] + s.mean.y * s.mean.y));
    CHECK(dvx == doctest::Approx(expected).epsilon(1e-12));
    CHECK(dvx == doctest::Approx(atoms / 2.0).epsilon(0.01));
}

TEST_CASE("pooled update equals first-order expansion to O(kappa^2)") {
    // |exact - first order| <= 4 eps^2 var, quadratic in eps
    double var = 9.4e5;
    double prev_err = -1.0;
    for (double eps : {1e-2, 1e-3, 1e-4}) {
        double kappa = eps / var;
        double exact = var / (1.0 + 2.0 * kappa * var);
        double first = var - 2.0 * kappa * var * var;
        double err = std::abs(exact - first);
        CHECK(err <= 4.0 * eps * eps * var);
        if (prev_err > 0)
            CHECK(prev_err / err == doctest::Approx(100.0).epsilon(0.05));
        prev_err = err;
    }
}

TEST_CASE("back-action matches the Gaussian rotation oracle") {
    // Rao-Blackwellized MC: sample theta = g Sz, rotate analytically in the
    // (Fx, Fy) moments, compare against the implemented O(kappa) deltas.
    double vx = 0.8, vy = 1.3, my = 1.7;
    GaussianSpinState s;
    s.atoms = 10.0;
    s.mean = {0.0, my, 0.0};
    s.cov = Mat3::diag(vx, vy, 0.9);

    for (double kappa : {1e-2, 1e-3}) {
        ProbeCoupling c;
        c.g = 1e-4;
        c.photons_v = 2.0 * kappa / (c.g * c.g);
        auto up = qnd_update(s, c).state;
        double d_my_impl = up.mean.y - s.mean.y;
        double d_vx_impl = up.cov.m[0][0] - s.cov.m[0][0];
        double d_vy_impl = up.cov.m[1][1] - s.cov.m[1][1];
        // remove the conditioning part of var(Fy) (zero here: cov_yz = 0)

        std::size_t n = 400000;
        Rng rng(99);
        double sigma = std::sqrt(kappa / 2.0);
        double mc_c = 0, mc_c2 = 0, mc_s2 = 0, var_c = 0, var_c2 = 0, var_s2 = 0;
        std::vector<double> cth(n), c2(n), s2v(n);
        for (std::size_t i = 0; i < n; ++i) {
            double th = sigma * rng.normal();
            cth[i] = std::cos(th);
            c2[i] = cth[i] * cth[i];
            s2v[i] = 1.0 - c2[i];
            mc_c += cth[i];
            mc_c2 += c2[i];
            mc_s2 += s2v[i];
        }
        mc_c /= double(n);
        mc_c2 /= double(n);
        mc_s2 /= double(n);
        for (std::size_t i = 0; i < n; ++i) {
            var_c += (cth[i] - mc_c) * (cth[i] - mc_c);
            var_c2 += (c2[i] - mc_c2) * (c2[i] - mc_c2);
            var_s2 += (s2v[i] - mc_s2) * (s2v[i] - mc_s2);
        }
        double se_c = std::sqrt(var_c / double(n) / double(n - 1));
        double se_c2 = std::sqrt(var_c2 / double(n) / double(n - 1));
        double se_s2 = std::sqrt(var_s2 / double(n) / double(n - 1));

        // mixture moments over the random rotation angle
        double d_my_mc = my * (mc_c - 1.0);
        double fy2 = vy + my * my;
        double d_vx_mc = vx * mc_c2 + fy2 * mc_s2 - vx;
        double d_vy_mc = (fy2)*mc_c2 + vx * mc_s2 - (my * mc_c) * (my * mc_c) - vy;

        double tol_sys = 3.0 * kappa * kappa * (vx + fy2);  // O(kappa^2) truncation
        CHECK(std::abs(d_my_impl - d_my_mc) <= 3.0 * my * se_c + tol_sys);
        CHECK(std::abs(d_vx_impl - d_vx_mc) <=
              3.0 * (vx * se_c2 + fy2 * se_s2) + tol_sys);
        CHECK(std::abs(d_vy_impl - d_vy_mc) <=
              3.0 * (fy2 * se_c2 + vx * se_s2 + 2 * my * my * se_c) + tol_sys);
    }
}

TEST_CASE("scatter_channel examples") {
    ProbeCoupling c;
    c.eta = 3e-10;
    c.p_return = 0.7;
    CoherentSpinStateSpec spec{1e6, false, 1.0};
    auto s = make_css(spec, 1e6);

    auto same = scatter_channel(s, c, 0.0);
    CHECK(same.atoms == s.atoms);
    CHECK(same.cov.m[0][0] == s.cov.m[0][0]);
    CHECK(same.mean.y == s.mean.y);

    // chi = 0.99: atoms' = 0.997 atoms
    double photons = std::log(1.0 / 0.99) / c.eta;
    auto lost = scatter_channel(s, c, photons);
    CHECK(lost.atoms == doctest::Approx(0.997 * 1e6).epsilon(1e-9));
    CHECK(lost.mean.y == doctest::Approx(0.99 * 1e6).epsilon(1e-9));

    GaussianSpinState zero_cov = s;
    zero_cov.cov = Mat3{};
    auto heated = scatter_channel(zero_cov, c, photons);
    double add = (2.0 / 3.0) * 0.7 * 0.01 * 1e6;
    CHECK(heated.cov.m[0][0] == doctest::Approx(add).epsilon(1e-9));
    CHECK(heated.cov.m[1][1] == doctest::Approx(add).epsilon(1e-9));
    CHECK(heated.cov.m[2][2] == doctest::Approx(add).epsilon(1e-9));
    CHECK(add == doctest::Approx(4.667e3).epsilon(1e-3));
}

TEST_CASE("scatter_channel preserves positive semidefiniteness") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        auto s = random_valid_state(rng);
        ProbeCoupling c;
        c.eta = 3e-10;
        c.p_return = rng.uniform();
        double chi = 0.01 + 0.99 * rng.uniform();
        double photons = std::log(1.0 / chi) / c.eta;
        auto out = scatter_channel(s, c, photons);
        auto ev = eig3_sym(out.cov);
        CHECK(ev[0] >= -1e-9 * out.cov.trace());
    }
}

TEST_CASE("check_state reports violations") {
    CoherentSpinStateSpec spec{100.0, false, 1.0};
    auto good = make_css(spec, 100.0);
    CHECK(check_state(good).empty());

    auto bad_psd = good;
    bad_psd.cov = Mat3::diag(1.0, -1.0, 1.0);
    bool found_psd = false;
    for (const auto& v : check_state(bad_psd))
        found_psd |= v.kind == Violation::Kind::not_psd;
    CHECK(found_psd);

    GaussianSpinState bad_rob;
    bad_rob.atoms = 2.0;
    bad_rob.mean = {1.0, 0.0, 0.0};
    bad_rob.cov = Mat3{};
    bool found_rob = false;
    for (const auto& v : check_state(bad_rob))
        found_rob |= v.kind == Violation::Kind::robertson;
    CHECK(found_rob);

    auto bad_len = good;
    bad_len.mean.y = 150.0;
    bool found_len = false;
    for (const auto& v : check_state(bad_len))
        found_len |= v.kind == Violation::Kind::mean_exceeds_atoms;
    CHECK(found_len);
}

TEST_CASE("Robertson invariant holds along composed physics maps") {
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        double atoms = 1e5 + 1e6 * rng.uniform();
        CoherentSpinStateSpec spec{atoms, false, 0.9 + 0.1 * rng.uniform()};
        auto s = make_css(spec, atoms);
        ProbeCoupling c;
        c.g = 3e-7 + 4e-7 * rng.uniform();
        c.photons_v = 1e6 + 2e6 * rng.uniform();
        c.photons_h = 1.49e6;
        c.eta = 3e-10;
        c.p_return = rng.uniform();
        int steps = 5 + int(rng.uniform() * 20);
        for (int k = 0; k < steps; ++k) {
            s = precess(s, 0.5 + rng.uniform());
            s = qnd_update(s, c).state;
            s = scatter_channel(s, c, c.photons_v);
            s = scatter_channel(s, c, c.photons_h);
        }
        auto violations = check_state(s);
        CHECK(violations.empty());
    }
}
