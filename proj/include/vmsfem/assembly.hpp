#pragma once

// Linear system of one semi-implicit BDF2 step,
//
//   (D_t u, v) + nu (grad u, grad v) + ((uhat . grad) u, v)
//     - (p, div v) + (div u, q) + stabilization = (f, v),
//
// with D_t u = (3 u^{n+1} - 4 u^n + u^{n-1}) / (2 dt) and the convection
// field uhat = 2 u^n - u^{n-1} frozen. Unknowns are ordered
// [u_x | u_y | p | lambda], lambda being the multiplier of the zero-mean
// pressure constraint.
//
// Residual-based terms test the momentum residual
//   L(u, p) - g = (a0/dt) u - nu Lap u + (uhat . grad) u + grad p - g,
//   g = f - (a1 u^n + a2 u^{n-1}) / dt,
// against tau_m W(v, q), where W collects the SUPG, PSPG, cross-stress and
// subgrid test functions.

#include "vmsfem/errors.hpp"
#include "vmsfem/fe_basis.hpp"
#include "vmsfem/fe_space.hpp"
#include "vmsfem/lps_projection.hpp"
#include "vmsfem/mesh.hpp"
#include "vmsfem/parallel.hpp"
#include "vmsfem/quadrature.hpp"
#include "vmsfem/stab_coeffs.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <algorithm>
#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vmsfem {

enum class Method { rbvms, supg_gd, lps_onelevel, lps_interp, pspg_gd };
enum class FeMode { eo, iss };

constexpr std::string_view method_name(Method m) {
    switch (m) {
    case Method::rbvms: return "rbvms";
    case Method::supg_gd: return "supg";
    case Method::lps_onelevel: return "lps1";
    case Method::lps_interp: return "lpsint";
    case Method::pspg_gd: return "pspg";
    }
    return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
    for (Method m : {Method::rbvms, Method::supg_gd, Method::lps_onelevel, Method::lps_interp, Method::pspg_gd})
        if (method_name(m) == s) return m;
    return std::nullopt;
}

constexpr std::string_view fe_mode_name(FeMode m) { return m == FeMode::eo ? "eo" : "iss"; }

inline std::optional<FeMode> parse_fe_mode(std::string_view s) {
    if (s == "eo") return FeMode::eo;
    if (s == "iss") return FeMode::iss;
    return std::nullopt;
}

struct MethodKind {
    Method tag = Method::supg_gd;
    FeMode fe_mode = FeMode::eo;

    /// Switch C in front of the pressure-test stabilization terms. Equal-order
    /// pairs need it; PSPG always keeps it.
    double pressure_switch() const {
        if (tag == Method::pspg_gd) return 1.0;
        return fe_mode == FeMode::eo ? 1.0 : 0.0;
    }

    FeFamily velocity_family() const { return tag == Method::lps_onelevel ? FeFamily::P2Bubble : FeFamily::P2; }

    FeFamily pressure_family() const {
        if (fe_mode == FeMode::eo) return velocity_family();
        return tag == Method::lps_onelevel ? FeFamily::P1dc : FeFamily::P1;
    }

    bool is_lps() const { return tag == Method::lps_onelevel || tag == Method::lps_interp; }
};

/// Sparsity pattern and scatter tables shared by every system of one
/// discretization.
struct SystemLayout {
    int n_u = 0;
    int n_p = 0;
    int size = 0;
    int nv_loc = 0;
    int np_loc = 0;
    int n_loc = 0;
    std::vector<int> cell_global;
    std::vector<int> cell_pos;
    Eigen::SparseMatrix<double> pattern;
    Vector pressure_integrals;
    std::vector<int> mean_row_pos;
    std::vector<int> mean_col_pos;
    std::vector<int> constrained_rows;
    std::vector<int> constrained_entry_pos;
    std::vector<int> constrained_diag_pos;

    int multiplier() const { return size - 1; }
};

namespace detail {

inline int find_position(const Eigen::SparseMatrix<double>& m, int row, int col) {
    const int* inner = m.innerIndexPtr();
    const int lo = m.outerIndexPtr()[col];
    const int hi = m.outerIndexPtr()[col + 1];
    const int* it = std::lower_bound(inner + lo, inner + hi, row);
    if (it == inner + hi || *it != row) throw UsageError("entry outside the sparsity pattern");
    return static_cast<int>(it - inner);
}

inline std::shared_ptr<const SystemLayout> build_layout(const FeSpace& velocity, const FeSpace& pressure) {
    auto L = std::make_shared<SystemLayout>();
    const Mesh& mesh = velocity.mesh();
    const int nc = mesh.num_cells();
    L->n_u = velocity.ndof();
    L->n_p = pressure.ndof();
    L->size = L->n_u + L->n_p + 1;
    L->nv_loc = velocity.local_dofs();
    L->np_loc = pressure.local_dofs();
    L->n_loc = 2 * L->nv_loc + L->np_loc;
    const int nl = L->n_loc;

    L->cell_global.resize(static_cast<std::size_t>(nc) * nl);
    for (int c = 0; c < nc; ++c) {
        int* g = L->cell_global.data() + static_cast<std::size_t>(c) * nl;
        const auto vd = velocity.cell_dofs(c);
        const auto pd = pressure.cell_dofs(c);
        for (int a = 0; a < L->nv_loc; ++a) {
            g[a] = velocity.global_dof(vd[a], 0);
            g[L->nv_loc + a] = velocity.global_dof(vd[a], 1);
        }
        for (int a = 0; a < L->np_loc; ++a) g[2 * L->nv_loc + a] = L->n_u + pd[a];
    }

    std::vector<std::vector<int>> rows_of_col(L->size);
    for (int c = 0; c < nc; ++c) {
        const int* g = L->cell_global.data() + static_cast<std::size_t>(c) * nl;
        for (int j = 0; j < nl; ++j)
            for (int i = 0; i < nl; ++i) rows_of_col[g[j]].push_back(g[i]);
    }
    const int lam = L->multiplier();
    for (int p = 0; p < L->n_p; ++p) {
        rows_of_col[L->n_u + p].push_back(lam);
        rows_of_col[lam].push_back(L->n_u + p);
    }
    Eigen::VectorXi nnz(L->size);
    for (int j = 0; j < L->size; ++j) {
        auto& r = rows_of_col[j];
        std::sort(r.begin(), r.end());
        r.erase(std::unique(r.begin(), r.end()), r.end());
        nnz[j] = static_cast<int>(r.size());
    }
    L->pattern.resize(L->size, L->size);
    L->pattern.reserve(nnz);
    for (int j = 0; j < L->size; ++j)
        for (int i : rows_of_col[j]) L->pattern.insert(i, j) = 0.0;
    L->pattern.makeCompressed();
    rows_of_col.clear();

    L->cell_pos.resize(static_cast<std::size_t>(nc) * nl * nl);
    for (int c = 0; c < nc; ++c) {
        const int* g = L->cell_global.data() + static_cast<std::size_t>(c) * nl;
        int* pos = L->cell_pos.data() + static_cast<std::size_t>(c) * nl * nl;
        for (int i = 0; i < nl; ++i)
            for (int j = 0; j < nl; ++j) pos[i * nl + j] = find_position(L->pattern, g[i], g[j]);
    }

    L->pressure_integrals = basis_integrals(pressure);
    L->mean_row_pos.resize(L->n_p);
    L->mean_col_pos.resize(L->n_p);
    for (int p = 0; p < L->n_p; ++p) {
        L->mean_row_pos[p] = find_position(L->pattern, lam, L->n_u + p);
        L->mean_col_pos[p] = find_position(L->pattern, L->n_u + p, lam);
    }

    std::vector<char> constrained(L->size, 0);
    for (const auto& cd : velocity.constrained_dofs()) {
        constrained[cd.dof] = 1;
        L->constrained_rows.push_back(cd.dof);
    }
    for (int j = 0; j < L->size; ++j)
        for (int k = L->pattern.outerIndexPtr()[j]; k < L->pattern.outerIndexPtr()[j + 1]; ++k) {
            const int i = L->pattern.innerIndexPtr()[k];
            if (!constrained[i]) continue;
            if (i == j)
                L->constrained_diag_pos.push_back(k);
            else
                L->constrained_entry_pos.push_back(k);
        }
    return L;
}

} // namespace detail

/// Mesh, method, velocity/pressure spaces and the system layout.
class Discretization {
public:
    Discretization(const Mesh& mesh, MethodKind method)
        : Discretization(mesh, method, method.velocity_family(), method.pressure_family()) {}

    Discretization(const Mesh& mesh, MethodKind method, FeFamily velocity_family, FeFamily pressure_family)
        : method_(method) {
        if (velocity_family == FeFamily::P1dc || velocity_family == FeFamily::P1)
            throw ConfigError("velocity space must be P2 or P2Bubble, got " +
                              std::string(family_name(velocity_family)));
        if (method.tag == Method::lps_onelevel && velocity_family != FeFamily::P2Bubble)
            throw ConfigError("one-level LPS needs the bubble-enriched velocity space P2Bubble");
        velocity_ = build_space(mesh, velocity_family, 2, true);
        pressure_ = build_space(mesh, pressure_family, 1, true);
        layout_ = detail::build_layout(velocity_, pressure_);
    }

    const Mesh& mesh() const { return velocity_.mesh(); }
    const MethodKind& method() const noexcept { return method_; }
    const FeSpace& velocity() const noexcept { return velocity_; }
    const FeSpace& pressure() const noexcept { return pressure_; }
    const SystemLayout& layout() const noexcept { return *layout_; }
    std::shared_ptr<const SystemLayout> layout_ptr() const noexcept { return layout_; }

private:
    MethodKind method_;
    FeSpace velocity_;
    FeSpace pressure_;
    std::shared_ptr<const SystemLayout> layout_;
};

struct SparseSystem {
    std::shared_ptr<const SystemLayout> layout;
    Eigen::SparseMatrix<double> matrix;
    Vector rhs;

    static SparseSystem empty(const Discretization& d) {
        return {d.layout_ptr(), d.layout().pattern, Vector::Zero(d.layout().size)};
    }
};

using ForcingFunction = std::function<Eigen::Vector2d(const Point&, double)>;
/// Forcing known per cell, e.g. built from an FE field; (cell, barycentric point).
using CellForcing = std::function<Eigen::Vector2d(int, const std::array<double, 3>&)>;

enum class PressureExtrapolation {
    /// p_hat = 2 p^n - p^{n-1}
    second_order,
    /// p_hat = 2 p^n - 2 p^{n-1}
    as_printed,
};

/// Known data of one time step. Velocity spans use the velocity space
/// numbering, pressure spans the pressure space numbering.
struct StepInput {
    std::span<const double> u_n;
    std::span<const double> u_nm1;
    std::span<const double> uhat;
    std::span<const double> p_n;
    std::span<const double> p_nm1;
    double dt = 1.0;
    double nu = 0.0;
    double t_next = 0.0;
    /// false drops the time derivative (steady problems).
    bool transient = true;
    /// Backward Euler instead of BDF2 (optional start-up step).
    bool first_order = false;
    ForcingFunction forcing;
    CellForcing cell_forcing;

    double a0() const { return transient ? (first_order ? 1.0 : 1.5) : 0.0; }
    double a1() const { return transient ? (first_order ? -1.0 : -2.0) : 0.0; }
    double a2() const { return transient && !first_order ? 0.5 : 0.0; }
};

struct RbvmsOptions {
    bool cross_stress = true;
    bool subgrid = true;
    PressureExtrapolation pressure_extrapolation = PressureExtrapolation::second_order;
};

namespace detail {

using LocalMatrix = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using LocalVector = Eigen::Map<Eigen::VectorXd>;

struct VelocitySample {
    Eigen::Vector2d value = Eigen::Vector2d::Zero();
    /// grad(c, j) = d u_c / d x_j
    Eigen::Matrix2d grad = Eigen::Matrix2d::Zero();
    Eigen::Vector2d laplacian = Eigen::Vector2d::Zero();
};

inline VelocitySample sample_velocity(const FeSpace& space, std::span<const double> coeffs, int cell,
                                      const ShapeValues& s) {
    VelocitySample out;
    if (coeffs.empty()) return out;
    for (int c = 0; c < 2; ++c) {
        const FieldSample f = sample_field(space, coeffs, cell, c, s);
        out.value[c] = f.value;
        out.grad.row(c) = f.grad.transpose();
        out.laplacian[c] = f.hess.trace();
    }
    return out;
}

inline void check_input(const Discretization& d, const StepInput& in) {
    const int nu = d.velocity().ndof();
    auto check = [&](std::span<const double> s, int n, const char* what) {
        if (!s.empty() && static_cast<int>(s.size()) != n)
            throw UsageError(std::string(what) + " has size " + std::to_string(s.size()) + ", expected " +
                             std::to_string(n));
    };
    check(in.u_n, nu, "u_n");
    check(in.u_nm1, nu, "u_nm1");
    check(in.uhat, nu, "uhat");
    check(in.p_n, d.pressure().ndof(), "p_n");
    check(in.p_nm1, d.pressure().ndof(), "p_nm1");
    if (in.transient && !(in.dt > 0.0)) throw ConfigError("time step must be positive");
}

/// Runs `kernel(cell, local_matrix, local_rhs)` on every cell and adds the
/// results into `sys`. Cells are computed in parallel blocks and scattered
/// in cell order, so the sums do not depend on the worker count.
template <class Kernel>
void assemble_cells(SparseSystem& sys, const Discretization& d, Kernel&& kernel) {
    const SystemLayout& L = d.layout();
    const int nc = d.mesh().num_cells();
    const int nl = L.n_loc;
    const int block = std::min(nc, 2048);
    std::vector<double> mats(static_cast<std::size_t>(block) * nl * nl);
    std::vector<double> vecs(static_cast<std::size_t>(block) * nl);
    double* values = sys.matrix.valuePtr();
    for (int start = 0; start < nc; start += block) {
        const int end = std::min(nc, start + block);
        parallel_for(start, end, [&](int c) {
            LocalMatrix m(mats.data() + static_cast<std::size_t>(c - start) * nl * nl, nl, nl);
            LocalVector f(vecs.data() + static_cast<std::size_t>(c - start) * nl, nl);
            m.setZero();
            f.setZero();
            kernel(c, m, f);
        });
        for (int c = start; c < end; ++c) {
            const double* m = mats.data() + static_cast<std::size_t>(c - start) * nl * nl;
            const double* f = vecs.data() + static_cast<std::size_t>(c - start) * nl;
            const int* pos = L.cell_pos.data() + static_cast<std::size_t>(c) * nl * nl;
            const int* g = L.cell_global.data() + static_cast<std::size_t>(c) * nl;
            for (int k = 0; k < nl * nl; ++k) values[pos[k]] += m[k];
            for (int i = 0; i < nl; ++i) sys.rhs[g[i]] += f[i];
        }
    }
}

inline Eigen::Vector2d forcing_at(const StepInput& in, int cell, const CellMap& map,
                                  const std::array<double, 3>& bary) {
    Eigen::Vector2d f = Eigen::Vector2d::Zero();
    if (in.forcing) f += in.forcing(map.to_physical(bary), in.t_next);
    if (in.cell_forcing) f += in.cell_forcing(cell, bary);
    return f;
}

} // namespace detail

/// Galerkin part: BDF2 mass, viscous, convective, pressure-velocity coupling
/// and the zero-mean multiplier.
inline SparseSystem assemble_galerkin(const Discretization& d, const StepInput& in) {
    detail::check_input(d, in);
    SparseSystem sys = SparseSystem::empty(d);
    const SystemLayout& L = d.layout();
    const FeSpace& V = d.velocity();
    const FeSpace& Q = d.pressure();
    const Quadrature& q = default_quadrature();
    const int nv = L.nv_loc;
    const int np = L.np_loc;
    const double m0 = in.transient ? in.a0() / in.dt : 0.0;
    detail::assemble_cells(sys, d, [&](int cell, detail::LocalMatrix& K, detail::LocalVector& F) {
        const CellMap map = cell_map(d.mesh(), cell);
        ShapeValues sv, sp;
        for (int p = 0; p < q.size(); ++p) {
            eval_basis(V.family(), map, q.points[p], sv);
            eval_basis(Q.family(), map, q.points[p], sp);
            const double w = 2.0 * map.area * q.weights[p];
            const auto uh = detail::sample_velocity(V, in.uhat, cell, sv);
            const auto un = detail::sample_velocity(V, in.u_n, cell, sv);
            const auto unm1 = detail::sample_velocity(V, in.u_nm1, cell, sv);
            Eigen::Vector2d g = detail::forcing_at(in, cell, map, q.points[p]);
            if (in.transient) g -= (in.a1() * un.value + in.a2() * unm1.value) / in.dt;
            for (int a = 0; a < nv; ++a) {
                for (int b = 0; b < nv; ++b) {
                    const double v = w * (m0 * sv.value[b] * sv.value[a] + in.nu * sv.grad[b].dot(sv.grad[a]) +
                                          uh.value.dot(sv.grad[b]) * sv.value[a]);
                    K(a, b) += v;
                    K(nv + a, nv + b) += v;
                }
                for (int c = 0; c < 2; ++c) {
                    F(c * nv + a) += w * g[c] * sv.value[a];
                    for (int b = 0; b < np; ++b) {
                        K(c * nv + a, 2 * nv + b) -= w * sp.value[b] * sv.grad[a][c];
                        K(2 * nv + b, c * nv + a) += w * sv.grad[a][c] * sp.value[b];
                    }
                }
            }
        }
    });
    double* values = sys.matrix.valuePtr();
    for (int p = 0; p < L.n_p; ++p) {
        values[L.mean_row_pos[p]] += L.pressure_integrals[p];
        values[L.mean_col_pos[p]] += L.pressure_integrals[p];
    }
    return sys;
}

namespace detail {

/// Which test functions the residual-based terms use.
struct ResidualTerms {
    bool supg = true;
    bool cross = false;
    bool subgrid = false;
    double pressure_switch = 0.0;
    PressureExtrapolation pressure_extrapolation = PressureExtrapolation::second_order;
};

inline void add_residual_terms(SparseSystem& sys, const Discretization& d, const StepInput& in,
                               const StabCoeffs& tau, const ResidualTerms& terms) {
    check_input(d, in);
    const int nc = d.mesh().num_cells();
    if (static_cast<int>(tau.tau_m.size()) != nc || static_cast<int>(tau.tau_c.size()) != nc)
        throw UsageError("stabilization coefficients do not match the mesh");
    if (terms.subgrid && (in.p_n.empty() || in.p_nm1.empty()))
        throw StateError("the subgrid term needs the pressure history p^n, p^{n-1}");
    const SystemLayout& L = d.layout();
    const FeSpace& V = d.velocity();
    const FeSpace& Q = d.pressure();
    const Quadrature& q = default_quadrature();
    const int nv = L.nv_loc;
    const int np = L.np_loc;
    const int nl = L.n_loc;
    const double m0 = in.transient ? in.a0() / in.dt : 0.0;
    const double C = terms.pressure_switch;
    const double p_weight = terms.pressure_extrapolation == PressureExtrapolation::second_order ? 1.0 : 2.0;
    assemble_cells(sys, d, [&](int cell, LocalMatrix& K, LocalVector& F) {
        const CellMap map = cell_map(d.mesh(), cell);
        const double tm = tau.tau_m[cell];
        const double tc = tau.tau_c[cell];
        ShapeValues sv, sp;
        // W[i] : test function of local dof i; Lc[j] : residual of trial j.
        std::vector<Eigen::Vector2d> W(nl), Lr(nl);
        for (int p = 0; p < q.size(); ++p) {
            eval_basis(V.family(), map, q.points[p], sv);
            eval_basis(Q.family(), map, q.points[p], sp);
            const double w = 2.0 * map.area * q.weights[p];
            const auto uh = sample_velocity(V, in.uhat, cell, sv);
            const auto un = sample_velocity(V, in.u_n, cell, sv);
            const auto unm1 = sample_velocity(V, in.u_nm1, cell, sv);
            const Eigen::Vector2d f = forcing_at(in, cell, map, q.points[p]);
            Eigen::Vector2d g = f;
            if (in.transient) g -= (in.a1() * un.value + in.a2() * unm1.value) / in.dt;

            Eigen::Vector2d rhat = Eigen::Vector2d::Zero();
            if (terms.subgrid) {
                Eigen::Vector2d grad_phat = Eigen::Vector2d::Zero();
                const auto pd = Q.cell_dofs(cell);
                for (int b = 0; b < np; ++b)
                    grad_phat += (2.0 * in.p_n[pd[b]] - p_weight * in.p_nm1[pd[b]]) * sp.grad[b];
                Eigen::Vector2d dt_uhat = Eigen::Vector2d::Zero();
                if (in.transient)
                    dt_uhat = (in.a0() * uh.value + in.a1() * un.value + in.a2() * unm1.value) / in.dt;
                rhat = tm * (f - dt_uhat + in.nu * uh.laplacian - uh.grad * uh.value - grad_phat);
            }

            for (int a = 0; a < nv; ++a) {
                const double stream_a = uh.value.dot(sv.grad[a]);
                const double ell = m0 * sv.value[a] - in.nu * sv.laplacian(a) + stream_a;
                for (int c = 0; c < 2; ++c) {
                    Eigen::Vector2d wt = Eigen::Vector2d::Zero();
                    if (terms.supg) wt[c] += stream_a;
                    double scale = 0.0;
                    if (terms.cross) scale += uh.value[c];
                    if (terms.subgrid) scale += rhat[c];
                    wt += scale * sv.grad[a];
                    W[c * nv + a] = wt;
                    Eigen::Vector2d lr = Eigen::Vector2d::Zero();
                    lr[c] = ell;
                    Lr[c * nv + a] = lr;
                }
            }
            for (int a = 0; a < np; ++a) {
                W[2 * nv + a] = C * sp.grad[a];
                Lr[2 * nv + a] = sp.grad[a];
            }
            for (int i = 0; i < nl; ++i) {
                if (W[i].isZero(0.0)) continue;
                const Eigen::Vector2d wi = w * tm * W[i];
                for (int j = 0; j < nl; ++j) K(i, j) += wi.dot(Lr[j]);
                F(i) += wi.dot(g);
            }
            for (int a = 0; a < nv; ++a)
                for (int b = 0; b < nv; ++b)
                    for (int c = 0; c < 2; ++c)
                        for (int e = 0; e < 2; ++e)
                            K(c * nv + a, e * nv + b) += w * tc * sv.grad[b][e] * sv.grad[a][c];
        }
    });
}

} // namespace detail

/// SUPG (or PSPG) momentum-residual terms plus grad-div.
inline void add_supg_pspg_graddiv(SparseSystem& sys, const Discretization& d, const StepInput& in,
                                  const StabCoeffs& tau) {
    detail::ResidualTerms t;
    t.supg = d.method().tag != Method::pspg_gd;
    t.pressure_switch = d.method().pressure_switch();
    detail::add_residual_terms(sys, d, in, tau, t);
}

/// Full residual-based VMS terms: SUPG/PSPG, second cross-stress term,
/// subgrid term and grad-div.
inline void add_rbvms_terms(SparseSystem& sys, const Discretization& d, const StepInput& in,
                            const StabCoeffs& tau, const RbvmsOptions& options = {}) {
    detail::ResidualTerms t;
    t.supg = true;
    t.cross = options.cross_stress;
    t.subgrid = options.subgrid;
    t.pressure_switch = d.method().pressure_switch();
    t.pressure_extrapolation = options.pressure_extrapolation;
    detail::add_residual_terms(sys, d, in, tau, t);
}

/// Grad-div term (tau_c div u, div v) on its own.
inline void add_graddiv(SparseSystem& sys, const Discretization& d, const StabCoeffs& tau) {
    const int nv = d.layout().nv_loc;
    const Quadrature& q = default_quadrature();
    const FeSpace& V = d.velocity();
    detail::assemble_cells(sys, d, [&](int cell, detail::LocalMatrix& K, detail::LocalVector&) {
        const CellMap map = cell_map(d.mesh(), cell);
        ShapeValues sv;
        for (int p = 0; p < q.size(); ++p) {
            eval_basis(V.family(), map, q.points[p], sv);
            const double w = 2.0 * map.area * q.weights[p] * tau.tau_c[cell];
            for (int a = 0; a < nv; ++a)
                for (int b = 0; b < nv; ++b)
                    for (int c = 0; c < 2; ++c)
                        for (int e = 0; e < 2; ++e) K(c * nv + a, e * nv + b) += w * sv.grad[b][e] * sv.grad[a][c];
        }
    });
}

/// Fluctuation operator matching an LPS method.
inline FluctuationOperator lps_fluctuation(const Discretization& d) {
    switch (d.method().tag) {
    case Method::lps_onelevel:
        if (d.velocity().family() != FeFamily::P2Bubble)
            throw ConfigError("one-level LPS needs a bubble-enriched velocity space");
        return FluctuationOperator(FluctuationVariant::local_l2, d.velocity().family());
    case Method::lps_interp:
        return FluctuationOperator(FluctuationVariant::scott_zhang, d.velocity().family());
    default:
        throw UsageError("method " + std::string(method_name(d.method().tag)) + " has no local projection");
    }
}

/// Local projection terms (tau_m k(uhat.grad u), k(uhat.grad v)),
/// (tau_m k(grad p), k(C grad q)) and grad-div.
inline void add_lps_terms(SparseSystem& sys, const Discretization& d, const StepInput& in, const StabCoeffs& tau) {
    detail::check_input(d, in);
    const FluctuationOperator op = lps_fluctuation(d);
    const SystemLayout& L = d.layout();
    const FeSpace& V = d.velocity();
    const FeSpace& Q = d.pressure();
    const Quadrature& q = op.quadrature();
    const int nq = q.size();
    const int nv = L.nv_loc;
    const int np = L.np_loc;
    const double C = d.method().pressure_switch();
    const bool uses_vertices = op.variant() == FluctuationVariant::scott_zhang;
    detail::assemble_cells(sys, d, [&](int cell, detail::LocalMatrix& K, detail::LocalVector&) {
        const CellMap map = cell_map(d.mesh(), cell);
        const double tm = tau.tau_m[cell];
        const double tc = tau.tau_c[cell];
        ShapeValues sv, sp;
        // Streamline derivatives of the velocity shapes and pressure
        // gradients, sampled at quadrature points (row-major: dof x point).
        Eigen::MatrixXd stream(nv, nq), dpx(np, nq), dpy(np, nq);
        Eigen::MatrixXd stream_v(nv, 3), dpx_v(np, 3), dpy_v(np, 3);
        std::vector<double> w(nq);
        for (int p = 0; p < nq; ++p) {
            eval_basis(V.family(), map, q.points[p], sv);
            eval_basis(Q.family(), map, q.points[p], sp);
            w[p] = 2.0 * map.area * q.weights[p];
            const auto uh = detail::sample_velocity(V, in.uhat, cell, sv);
            for (int a = 0; a < nv; ++a) stream(a, p) = uh.value.dot(sv.grad[a]);
            for (int a = 0; a < np; ++a) {
                dpx(a, p) = sp.grad[a][0];
                dpy(a, p) = sp.grad[a][1];
            }
            for (int a = 0; a < nv; ++a)
                for (int b = 0; b < nv; ++b)
                    for (int c = 0; c < 2; ++c)
                        for (int e = 0; e < 2; ++e)
                            K(c * nv + a, e * nv + b) += w[p] * tc * sv.grad[b][e] * sv.grad[a][c];
        }
        if (uses_vertices) {
            for (int k = 0; k < 3; ++k) {
                std::array<double, 3> bary{0.0, 0.0, 0.0};
                bary[k] = 1.0;
                eval_basis(V.family(), map, bary, sv);
                eval_basis(Q.family(), map, bary, sp);
                const auto uh = detail::sample_velocity(V, in.uhat, cell, sv);
                for (int a = 0; a < nv; ++a) stream_v(a, k) = uh.value.dot(sv.grad[a]);
                for (int a = 0; a < np; ++a) {
                    dpx_v(a, k) = sp.grad[a][0];
                    dpy_v(a, k) = sp.grad[a][1];
                }
            }
        }
        auto fluctuate = [&](const Eigen::MatrixXd& at_qp, const Eigen::MatrixXd& at_v) {
            Eigen::MatrixXd out(at_qp.rows(), nq);
            std::vector<double> row(nq), res(nq);
            for (int a = 0; a < at_qp.rows(); ++a) {
                for (int p = 0; p < nq; ++p) row[p] = at_qp(a, p);
                std::array<double, 3> vt{0.0, 0.0, 0.0};
                if (uses_vertices) vt = {at_v(a, 0), at_v(a, 1), at_v(a, 2)};
                op.apply_local(row, vt, res);
                for (int p = 0; p < nq; ++p) out(a, p) = res[p];
            }
            return out;
        };
        const Eigen::Map<const Eigen::VectorXd> wq(w.data(), nq);
        const Eigen::MatrixXd ks = fluctuate(stream, stream_v);
        const Eigen::MatrixXd conv = tm * ks * wq.asDiagonal() * ks.transpose();
        for (int c = 0; c < 2; ++c) K.block(c * nv, c * nv, nv, nv) += conv;
        if (C != 0.0) {
            const Eigen::MatrixXd kx = fluctuate(dpx, dpx_v);
            const Eigen::MatrixXd ky = fluctuate(dpy, dpy_v);
            K.block(2 * nv, 2 * nv, np, np) +=
                C * tm * (kx * wq.asDiagonal() * kx.transpose() + ky * wq.asDiagonal() * ky.transpose());
        }
    });
}

/// Strong slip condition u_y = 0 on y in {0, 1}: identity rows, zero rhs.
inline void apply_constraints(SparseSystem& sys) {
    const SystemLayout& L = *sys.layout;
    double* values = sys.matrix.valuePtr();
    for (int k : L.constrained_entry_pos) values[k] = 0.0;
    for (int k : L.constrained_diag_pos) values[k] = 1.0;
    for (int r : L.constrained_rows) sys.rhs[r] = 0.0;
}

/// Complete system of one step for the discretization's method.
inline SparseSystem assemble_step(const Discretization& d, const StepInput& in, const StabCoeffs& tau,
                                  const RbvmsOptions& rbvms = {}) {
    SparseSystem sys = assemble_galerkin(d, in);
    switch (d.method().tag) {
    case Method::rbvms: add_rbvms_terms(sys, d, in, tau, rbvms); break;
    case Method::supg_gd:
    case Method::pspg_gd: add_supg_pspg_graddiv(sys, d, in, tau); break;
    case Method::lps_onelevel:
    case Method::lps_interp: add_lps_terms(sys, d, in, tau); break;
    }
    apply_constraints(sys);
    return sys;
}

} // namespace vmsfem
