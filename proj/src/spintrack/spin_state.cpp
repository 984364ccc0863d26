#include "spintrack/spin_state.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace spintrack {

GaussianSpinState make_css(const CoherentSpinStateSpec& spec, double atoms_draw) {
    if (atoms_draw < 0.0)
        throw Error("make_css: negative atom number");
    GaussianSpinState s;
    s.atoms = atoms_draw;
    s.mean = {0.0, spec.pump_efficiency * atoms_draw, 0.0};
    double v_res = (1.0 - spec.pump_efficiency) * atoms_draw;
    s.cov = Mat3::diag(atoms_draw / 2.0, v_res, atoms_draw / 2.0);
    return s;
}

GaussianSpinState precess(const GaussianSpinState& state, double angle) {
    double c = std::cos(angle);
    double sn = std::sin(angle);
    Mat3 r = Mat3::identity();
    r.m[1][1] = c;
    r.m[1][2] = sn;
    r.m[2][1] = -sn;
    r.m[2][2] = c;
    GaussianSpinState out = state;
    out.mean = r * state.mean;
    out.cov = r * state.cov * r.transposed();
    symmetrize(out.cov);
    return out;
}

QndUpdate qnd_update(const GaussianSpinState& state, const ProbeCoupling& coupling) {
    double sx = coupling.photons_v / 2.0;
    if (sx <= 0.0)
        return {state, std::numeric_limits<double>::infinity()};
    double kappa = coupling.g * coupling.g * sx;
    double readout_var = 1.0 / (2.0 * kappa);

    GaussianSpinState out = state;
    const Mat3& c = state.cov;

    // Conditioning on the pulse outcome: rank-1 Gaussian update of the z
    // row/column with the pooled prior+readout variance.
    double s_total = c.m[2][2] + readout_var;
    double col[3] = {c.m[0][2], c.m[1][2], c.m[2][2]};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            out.cov.m[i][j] = c.m[i][j] - col[i] * col[j] / s_total;

    // Back-action of the random rotation about z by g*Sz, to O(kappa),
    // evaluated on the pre-pulse moments.
    double fy2 = c.m[1][1] + state.mean.y * state.mean.y;
    double fx2 = c.m[0][0] + state.mean.x * state.mean.x;
    out.cov.m[0][0] += kappa * (-0.5 * c.m[0][0] + 0.5 * fy2);
    out.cov.m[1][1] += kappa * (-0.5 * c.m[1][1] + 0.5 * fx2);
    out.cov.m[0][1] -= kappa * c.m[0][1];
    out.cov.m[1][0] = out.cov.m[0][1];
    out.cov.m[0][2] *= 1.0 - kappa / 4.0;
    out.cov.m[2][0] = out.cov.m[0][2];
    out.cov.m[1][2] *= 1.0 - kappa / 4.0;
    out.cov.m[2][1] = out.cov.m[1][2];
    out.mean.x *= 1.0 - kappa / 4.0;
    out.mean.y *= 1.0 - kappa / 4.0;

    auto bad = check_state(out);
    for (const auto& v : bad) {
        if (v.kind == Violation::Kind::not_psd) {
            std::ostringstream os;
            os << "qnd_update produced a non-PSD covariance: " << v.detail;
            throw Error(os.str());
        }
    }
    return {out, readout_var};
}

GaussianSpinState scatter_channel(const GaussianSpinState& state,
                                  const ProbeCoupling& coupling,
                                  double photons_this_step) {
    if (photons_this_step < 0.0)
        throw Error("scatter_channel: negative photon number");
    double chi = std::exp(-coupling.eta * photons_this_step);
    double p = coupling.p_return;
    GaussianSpinState out = state;
    double add = (2.0 / 3.0) * p * (1.0 - chi) * state.atoms;
    out.cov = chi * state.cov;
    for (int i = 0; i < 3; ++i)
        out.cov.m[i][i] += add;
    out.atoms = (chi + p - chi * p) * state.atoms;
    out.mean = chi * state.mean;  // returning atoms carry no polarization
    return out;
}

std::vector<Violation> check_state(const GaussianSpinState& state) {
    std::vector<Violation> out;
    if (state.atoms < 0.0)
        out.push_back({Violation::Kind::negative_atoms, -state.atoms, "atoms < 0"});

    double asym = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j)
            asym = std::max(asym, std::abs(state.cov.m[i][j] - state.cov.m[j][i]));
    double scale = std::abs(state.cov.trace());
    if (asym > 1e-9 * (1.0 + scale)) {
        std::ostringstream os;
        os << "covariance asymmetry " << asym;
        out.push_back({Violation::Kind::not_symmetric, asym, os.str()});
    }

    auto ev = eig3_sym(state.cov);
    double eps_psd = 1e-9 * scale;
    if (ev[0] < -eps_psd) {
        std::ostringstream os;
        os << "min eigenvalue " << ev[0] << " (trace " << state.cov.trace() << ")";
        out.push_back({Violation::Kind::not_psd, -ev[0], os.str()});
    }

    double lhs = state.cov.m[1][1] * state.cov.m[2][2];
    double rhs = state.mean.x * state.mean.x / 4.0;
    double half_n = state.atoms / 2.0;
    double eps_rob = 1e-6 * half_n * half_n;
    if (lhs < rhs - eps_rob) {
        std::ostringstream os;
        os << "var(Fy)*var(Fz) = " << lhs << " < <Fx>^2/4 = " << rhs;
        out.push_back({Violation::Kind::robertson, rhs - lhs, os.str()});
    }

    double len = norm(state.mean);
    if (len > state.atoms * (1.0 + 1e-9) + 1e-9) {
        std::ostringstream os;
        os << "|mean| = " << len << " exceeds atoms = " << state.atoms;
        out.push_back({Violation::Kind::mean_exceeds_atoms, len - state.atoms, os.str()});
    }
    return out;
}

}  // namespace spintrack
