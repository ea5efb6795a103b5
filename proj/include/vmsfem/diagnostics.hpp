#pragma once

// Vorticity-based quantities of interest of a velocity field.

#include "vmsfem/errors.hpp"
#include "vmsfem/fe_basis.hpp"
#include "vmsfem/fe_space.hpp"
#include "vmsfem/mesh.hpp"
#include "vmsfem/parallel.hpp"
#include "vmsfem/quadrature.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace vmsfem {

struct QoiRecord {
    double t = 0.0;
    double delta_rel = 0.0;
    double e_kin = 0.0;
    double enstrophy = 0.0;
    double palinstrophy = 0.0;
};

struct ScalarQois {
    double e_kin = 0.0;
    double enstrophy = 0.0;
    double palinstrophy = 0.0;
};

namespace detail {

inline void check_velocity(const FeSpace& V, std::span<const double> u) {
    if (V.components() != 2) throw UsageError("velocity space expected");
    if (static_cast<int>(u.size()) != V.ndof()) throw UsageError("velocity vector does not match its space");
}

inline double curl(const FeSpace& V, std::span<const double> u, int cell, const ShapeValues& s) {
    const FieldSample u0 = sample_field(V, u, cell, 0, s);
    const FieldSample u1 = sample_field(V, u, cell, 1, s);
    return u1.grad.x() - u0.grad.y();
}

} // namespace detail

/// omega = d_x u_y - d_y u_x at the points of `q` on every cell (cell-major).
inline std::vector<double> vorticity_field(const FeSpace& V, std::span<const double> u,
                                           const Quadrature& q = default_quadrature()) {
    detail::check_velocity(V, u);
    const Mesh& mesh = V.mesh();
    std::vector<double> out(static_cast<std::size_t>(mesh.num_cells()) * q.size());
    parallel_for(0, mesh.num_cells(), [&](int c) {
        const CellMap map = cell_map(mesh, c);
        ShapeValues s;
        for (int p = 0; p < q.size(); ++p) {
            eval_basis(V.family(), map, q.points[p], s);
            out[static_cast<std::size_t>(c) * q.size() + p] = detail::curl(V, u, c, s);
        }
    });
    return out;
}

/// x-mean of omega on horizontal lines y = ys[j]. Lines running along cell
/// edges use the cells below them, except the bottom wall which uses the
/// cells above.
inline std::vector<double> mean_vorticity_profile(const FeSpace& V, std::span<const double> u,
                                                  const std::vector<double>& ys) {
    detail::check_velocity(V, u);
    const Mesh& mesh = V.mesh();
    const auto gl = gauss_legendre_01(3);
    double y_min = mesh.vertex(0).y();
    for (const auto& p : mesh.vertices()) y_min = std::min(y_min, p.y());
    std::vector<double> out(ys.size(), 0.0);
    parallel_for(0, static_cast<int>(ys.size()), [&](int j) {
        const double y = ys[j];
        double sum = 0.0;
        ShapeValues s;
        for (int c = 0; c < mesh.num_cells(); ++c) {
            const CellMap map = cell_map(mesh, c);
            int on = 0, above = 0, below = 0;
            for (const auto& v : map.vertices) {
                if (v.y() == y) ++on;
                else if (v.y() > y) ++above;
                else ++below;
            }
            if (on == 2) {
                const bool use = (y == y_min) ? above == 1 : below == 1;
                if (!use) continue;
            } else if (above == 0 || below == 0) {
                continue;
            }
            // Intersection of the line with the triangle.
            double xa = 1e300, xb = -1e300;
            for (int k = 0; k < 3; ++k) {
                const Point& p0 = map.vertices[k];
                const Point& p1 = map.vertices[(k + 1) % 3];
                if (p0.y() == y) {
                    xa = std::min(xa, p0.x());
                    xb = std::max(xb, p0.x());
                }
                if ((p0.y() - y) * (p1.y() - y) < 0.0) {
                    const double x = p0.x() + (y - p0.y()) / (p1.y() - p0.y()) * (p1.x() - p0.x());
                    xa = std::min(xa, x);
                    xb = std::max(xb, x);
                }
            }
            const double len = xb - xa;
            if (!(len > 0.0)) continue;
            for (const auto& [xi, w] : gl) {
                const Point x(xa + xi * len, y);
                eval_basis(V.family(), map, map.to_barycentric(x), s);
                sum += w * len * detail::curl(V, u, c, s);
            }
        }
        out[j] = sum;
    });
    return out;
}

/// Profile on all vertex rows and P2 mid-rows.
inline std::vector<double> mean_vorticity_profile(const FeSpace& V, std::span<const double> u) {
    return mean_vorticity_profile(V, u, horizontal_grid_lines(V.mesh(), true));
}

/// delta / delta0 with delta = 2 U_inf / max |<omega>|.
inline double vorticity_thickness(std::span<const double> profile, double delta0, double u_inf = 1.0) {
    double m = 0.0;
    for (double w : profile) m = std::max(m, std::abs(w));
    if (!(m > 0.0)) throw DiagnosticError("mean vorticity profile vanishes; thickness undefined");
    return 2.0 * u_inf / m / delta0;
}

/// 1/2 ||u||^2, 1/2 ||omega||^2, 1/2 ||grad omega||^2 with cell-wise
/// derivatives of the FE field.
inline ScalarQois scalar_qois(const FeSpace& V, std::span<const double> u) {
    detail::check_velocity(V, u);
    const Mesh& mesh = V.mesh();
    const Quadrature& q = default_quadrature();
    std::vector<ScalarQois> per_cell(mesh.num_cells());
    parallel_for(0, mesh.num_cells(), [&](int c) {
        const CellMap map = cell_map(mesh, c);
        ShapeValues s;
        ScalarQois acc;
        for (int p = 0; p < q.size(); ++p) {
            eval_basis(V.family(), map, q.points[p], s);
            const FieldSample a = sample_field(V, u, c, 0, s);
            const FieldSample b = sample_field(V, u, c, 1, s);
            const double w = 2.0 * map.area * q.weights[p];
            const double omega = b.grad.x() - a.grad.y();
            const Eigen::Vector2d grad_omega(b.hess(0, 0) - a.hess(1, 0), b.hess(0, 1) - a.hess(1, 1));
            acc.e_kin += w * (a.value * a.value + b.value * b.value);
            acc.enstrophy += w * omega * omega;
            acc.palinstrophy += w * grad_omega.squaredNorm();
        }
        per_cell[c] = acc;
    });
    ScalarQois out;
    for (const auto& a : per_cell) {
        out.e_kin += a.e_kin;
        out.enstrophy += a.enstrophy;
        out.palinstrophy += a.palinstrophy;
    }
    out.e_kin *= 0.5;
    out.enstrophy *= 0.5;
    out.palinstrophy *= 0.5;
    return out;
}

inline QoiRecord qoi_record(const FeSpace& V, std::span<const double> u, double t, double delta0,
                            double u_inf = 1.0) {
    const ScalarQois s = scalar_qois(V, u);
    const auto profile = mean_vorticity_profile(V, u);
    return {t, vorticity_thickness(profile, delta0, u_inf), s.e_kin, s.enstrophy, s.palinstrophy};
}

/// Global L2 projection of omega onto continuous P1 (`P1` is a scalar P1
/// space on the same mesh). Used for export only.
inline Vector project_vorticity_p1(const FeSpace& V, std::span<const double> u, const FeSpace& P1) {
    detail::check_velocity(V, u);
    if (P1.family() != FeFamily::P1 || P1.components() != 1 || !P1.same_mesh(V))
        throw UsageError("projection target must be scalar P1 on the velocity mesh");
    const Mesh& mesh = V.mesh();
    const Quadrature& q = default_quadrature();
    std::vector<Eigen::Triplet<double>> trips;
    Vector rhs = Vector::Zero(P1.ndof());
    ShapeValues sv, sp;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const CellMap map = cell_map(mesh, c);
        const auto dofs = P1.cell_dofs(c);
        for (int p = 0; p < q.size(); ++p) {
            eval_basis(V.family(), map, q.points[p], sv);
            eval_basis(FeFamily::P1, map, q.points[p], sp);
            const double w = 2.0 * map.area * q.weights[p];
            const double omega = detail::curl(V, u, c, sv);
            for (int a = 0; a < 3; ++a) {
                rhs[dofs[a]] += w * omega * sp.value[a];
                for (int b = 0; b < 3; ++b) trips.emplace_back(dofs[a], dofs[b], w * sp.value[a] * sp.value[b]);
            }
        }
    }
    Eigen::SparseMatrix<double> M(P1.ndof(), P1.ndof());
    M.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(M);
    if (ldlt.info() != Eigen::Success) throw DiagnosticError("P1 mass matrix factorization failed");
    return ldlt.solve(rhs);
}

} // namespace vmsfem
