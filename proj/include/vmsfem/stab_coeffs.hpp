#pragma once

// Cell-wise stabilization parameters tau_m (momentum) and tau_c (grad-div).
//
//   tau_m(K) = ( g^2/dt^2 + d c1^2 nu^2/(h_K/k)^4 + c2^2 U_K/(h_K/k)^2 )^(-1/2)
//   tau_c(K) = (h_K/k)^2 / (d c1 tau_m(K))
//
// with U_K = ||uhat||^2_{L2(K)} / |K|, g = 2 (BDF2), d = 2, k = 2, c1 = 4,
// c2 = 2. The one-level LPS scheme instead uses tau_m = tau_c = C0 h_K.

#include "vmsfem/errors.hpp"
#include "vmsfem/fe_space.hpp"
#include "vmsfem/quadrature.hpp"

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace vmsfem {

struct StabConstants {
    double c1 = 4.0;
    double c2 = 2.0;
    double gamma = 2.0;
    int dim = 2;
    int degree = 2;
    /// One-level LPS scaling.
    double c0 = 0.1;
};

struct StabCoeffs {
    std::vector<double> tau_m;
    std::vector<double> tau_c;
    StabConstants constants;

    static StabCoeffs zero(int num_cells) {
        return {std::vector<double>(num_cells, 0.0), std::vector<double>(num_cells, 0.0), {}};
    }
};

/// tau_m for one cell from the squared local speed U_K.
inline double tau_momentum(double dt, double nu, double h, double speed_sq, const StabConstants& k = {}) {
    const double hk = h / k.degree;
    const double inv_sq = k.gamma * k.gamma / (dt * dt) +
                          k.dim * k.c1 * k.c1 * nu * nu / (hk * hk * hk * hk) +
                          k.c2 * k.c2 * speed_sq / (hk * hk);
    return 1.0 / std::sqrt(inv_sq);
}

inline double tau_continuity(double h, double tau_m, const StabConstants& k = {}) {
    const double hk = h / k.degree;
    return hk * hk / (k.dim * k.c1 * tau_m);
}

/// Residual-based coefficients from the extrapolated velocity `uhat`.
inline StabCoeffs compute_tau(const FeSpace& velocity, std::span<const double> uhat, double dt, double nu,
                              const StabConstants& constants = {}) {
    if (!(dt > 0.0)) throw ConfigError("time step must be positive, got " + std::to_string(dt));
    if (nu < 0.0) throw ConfigError("viscosity must be nonnegative");
    if (velocity.components() != 2 || static_cast<int>(uhat.size()) != velocity.ndof())
        throw UsageError("extrapolated velocity does not match the velocity space");
    const Mesh& mesh = velocity.mesh();
    const Quadrature& q = default_quadrature();
    StabCoeffs out;
    out.constants = constants;
    out.tau_m.resize(mesh.num_cells());
    out.tau_c.resize(mesh.num_cells());
    ShapeValues s;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const CellMap map = cell_map(mesh, c);
        double norm_sq = 0.0;
        for (int p = 0; p < q.size(); ++p) {
            eval_basis(velocity.family(), map, q.points[p], s);
            const double u0 = sample_field(velocity, uhat, c, 0, s).value;
            const double u1 = sample_field(velocity, uhat, c, 1, s).value;
            norm_sq += 2.0 * map.area * q.weights[p] * (u0 * u0 + u1 * u1);
        }
        const double tm = tau_momentum(dt, nu, map.diameter, norm_sq / map.area, constants);
        out.tau_m[c] = tm;
        out.tau_c[c] = tau_continuity(map.diameter, tm, constants);
    }
    return out;
}

/// Time-independent one-level LPS coefficients tau_m = tau_c = C0 h_K.
inline StabCoeffs compute_tau_lps_onelevel(const Mesh& mesh, const StabConstants& constants = {}) {
    StabCoeffs out;
    out.constants = constants;
    out.tau_m.resize(mesh.num_cells());
    out.tau_c.resize(mesh.num_cells());
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const double h = cell_geometry(mesh, c).diameter;
        out.tau_m[c] = constants.c0 * h;
        out.tau_c[c] = constants.c0 * h;
    }
    return out;
}

} // namespace vmsfem
