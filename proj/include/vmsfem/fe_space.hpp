#pragma once

// Global degree-of-freedom numbering with periodic identification in x,
// field interpolation and evaluation.

#include "vmsfem/errors.hpp"
#include "vmsfem/fe_basis.hpp"
#include "vmsfem/mesh.hpp"
#include "vmsfem/quadrature.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace vmsfem {

using Vector = Eigen::VectorXd;

enum class ConstraintKind { slip_normal };

struct ConstrainedDof {
    int dof;
    ConstraintKind kind;
};

/// Scalar or 2-vector finite element space. Vector spaces number all dofs
/// of component 0 first, then component 1. The space keeps a pointer to the
/// mesh, which must outlive it.
class FeSpace {
public:
    FeSpace() = default;

    const Mesh& mesh() const { return *mesh_; }
    FeFamily family() const noexcept { return family_; }
    int components() const noexcept { return components_; }
    bool periodic() const noexcept { return periodic_; }
    int local_dofs() const noexcept { return local_dof_count(family_); }

    /// Dofs of one scalar component.
    int scalar_ndof() const noexcept { return scalar_ndof_; }
    int ndof() const noexcept { return components_ * scalar_ndof_; }

    /// Scalar global dofs of a cell in local shape-function order.
    std::span<const int> cell_dofs(int cell) const {
        return {cell_dofs_.data() + static_cast<std::size_t>(cell) * local_dofs(),
                static_cast<std::size_t>(local_dofs())};
    }

    int global_dof(int scalar_dof, int component) const { return component * scalar_ndof_ + scalar_dof; }

    /// Node of a scalar dof; NaN coordinates for hierarchical bubble dofs.
    const Point& node(int scalar_dof) const { return nodes_[scalar_dof]; }
    bool has_node(int scalar_dof) const { return !std::isnan(nodes_[scalar_dof].x()); }

    /// Scalar dofs on y=0 or y=1.
    const std::vector<int>& wall_dofs() const noexcept { return wall_dofs_; }

    /// Vector dofs subject to strong constraints (normal component on walls).
    std::vector<ConstrainedDof> constrained_dofs() const {
        std::vector<ConstrainedDof> out;
        if (components_ != 2) return out;
        for (int d : wall_dofs_) out.push_back({global_dof(d, 1), ConstraintKind::slip_normal});
        return out;
    }

    bool same_mesh(const FeSpace& other) const { return mesh_ == other.mesh_; }

    friend FeSpace build_space(const Mesh& mesh, FeFamily family, int components, bool periodic_in_x);

private:
    const Mesh* mesh_ = nullptr;
    FeFamily family_ = FeFamily::P1;
    int components_ = 1;
    bool periodic_ = true;
    int scalar_ndof_ = 0;
    std::vector<int> cell_dofs_;
    std::vector<Point> nodes_;
    std::vector<int> wall_dofs_;
};

inline FeSpace build_space(const Mesh& mesh, FeFamily family, int components, bool periodic_in_x) {
    if (components != 1 && components != 2)
        throw UsageError("spaces have 1 or 2 components, got " + std::to_string(components));
    FeSpace s;
    s.mesh_ = &mesh;
    s.family_ = family;
    s.components_ = components;
    s.periodic_ = periodic_in_x;
    const int nloc = local_dof_count(family);
    const int nc = mesh.num_cells();
    s.cell_dofs_.assign(static_cast<std::size_t>(nc) * nloc, -1);
    const Point nan_point(std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN());

    if (family == FeFamily::P1dc) {
        s.scalar_ndof_ = 3 * nc;
        s.nodes_.resize(s.scalar_ndof_);
        for (int c = 0; c < nc; ++c)
            for (int k = 0; k < 3; ++k) {
                s.cell_dofs_[3 * c + k] = 3 * c + k;
                s.nodes_[3 * c + k] = mesh.vertex(mesh.cell(c)[k]);
            }
        return s;
    }

    std::vector<int> vertex_dof(mesh.num_vertices(), -1);
    int next = 0;
    for (int v = 0; v < mesh.num_vertices(); ++v)
        if (!periodic_in_x || mesh.periodic_vertex_partner(v) < 0) {
            vertex_dof[v] = next++;
            s.nodes_.push_back(mesh.vertex(v));
        }
    if (periodic_in_x)
        for (int v = 0; v < mesh.num_vertices(); ++v)
            if (mesh.periodic_vertex_partner(v) >= 0) vertex_dof[v] = vertex_dof[mesh.periodic_vertex_partner(v)];

    std::vector<int> edge_dof;
    if (family != FeFamily::P1) {
        edge_dof.assign(mesh.num_edges(), -1);
        for (int e = 0; e < mesh.num_edges(); ++e)
            if (!periodic_in_x || mesh.periodic_edge_partner(e) < 0) {
                edge_dof[e] = next++;
                const auto& ed = mesh.edge(e);
                s.nodes_.push_back(0.5 * (mesh.vertex(ed.vertices[0]) + mesh.vertex(ed.vertices[1])));
            }
        if (periodic_in_x)
            for (int e = 0; e < mesh.num_edges(); ++e)
                if (mesh.periodic_edge_partner(e) >= 0) edge_dof[e] = edge_dof[mesh.periodic_edge_partner(e)];
    }

    const int first_bubble = next;
    if (family == FeFamily::P2Bubble) {
        next += nc;
        s.nodes_.resize(next, nan_point);
    }
    s.scalar_ndof_ = next;

    for (int c = 0; c < nc; ++c) {
        int* dofs = s.cell_dofs_.data() + static_cast<std::size_t>(c) * nloc;
        for (int k = 0; k < 3; ++k) dofs[k] = vertex_dof[mesh.cell(c)[k]];
        if (family != FeFamily::P1)
            for (int k = 0; k < 3; ++k) dofs[3 + k] = edge_dof[mesh.cell_edges(c)[k]];
        if (family == FeFamily::P2Bubble) dofs[6] = first_bubble + c;
    }

    std::vector<char> on_wall(s.scalar_ndof_, 0);
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        const double y = mesh.vertex(v).y();
        if (y == 0.0 || y == 1.0) on_wall[vertex_dof[v]] = 1;
    }
    if (family != FeFamily::P1)
        for (int e = 0; e < mesh.num_edges(); ++e) {
            const BoundaryTag t = mesh.edge_tag(e);
            if (t == BoundaryTag::bottom || t == BoundaryTag::top) on_wall[edge_dof[e]] = 1;
        }
    for (int d = 0; d < s.scalar_ndof_; ++d)
        if (on_wall[d]) s.wall_dofs_.push_back(d);
    return s;
}

/// Value, gradient and Hessian of one scalar component of an FE field.
struct FieldSample {
    double value = 0.0;
    Eigen::Vector2d grad = Eigen::Vector2d::Zero();
    Eigen::Matrix2d hess = Eigen::Matrix2d::Zero();
};

/// Evaluates component `component` of `coeffs` on `cell` from precomputed
/// shape values.
inline FieldSample sample_field(const FeSpace& space, std::span<const double> coeffs, int cell,
                                int component, const ShapeValues& shapes) {
    FieldSample f;
    const auto dofs = space.cell_dofs(cell);
    const int offset = component * space.scalar_ndof();
    for (int i = 0; i < shapes.count; ++i) {
        const double c = coeffs[offset + dofs[i]];
        f.value += c * shapes.value[i];
        f.grad += c * shapes.grad[i];
        f.hess += c * shapes.hess[i];
    }
    return f;
}

inline FieldSample sample_field(const FeSpace& space, std::span<const double> coeffs, int cell,
                                int component, const std::array<double, 3>& bary) {
    const ShapeValues s = eval_basis(space.family(), cell_map(space.mesh(), cell), bary);
    return sample_field(space, coeffs, cell, component, s);
}

inline std::span<const double> as_span(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

using VectorFunction = std::function<Eigen::Vector2d(const Point&)>;
using ScalarFunction = std::function<double(const Point&)>;

/// Nodal interpolant; bubble coefficients are zero, periodic dofs take the
/// value at their x=0 node.
inline Vector interpolate_function(const FeSpace& space, const VectorFunction& f) {
    if (space.components() != 2) throw UsageError("vector field interpolated into a scalar space");
    Vector out = Vector::Zero(space.ndof());
    for (int d = 0; d < space.scalar_ndof(); ++d) {
        if (!space.has_node(d)) continue;
        const Eigen::Vector2d v = f(space.node(d));
        out[space.global_dof(d, 0)] = v[0];
        out[space.global_dof(d, 1)] = v[1];
    }
    return out;
}

inline Vector interpolate_scalar_function(const FeSpace& space, const ScalarFunction& f) {
    if (space.components() != 1) throw UsageError("scalar field interpolated into a vector space");
    Vector out = Vector::Zero(space.ndof());
    for (int d = 0; d < space.scalar_ndof(); ++d)
        if (space.has_node(d)) out[d] = f(space.node(d));
    return out;
}

/// Scott-Zhang type interpolation of a continuous field into continuous P1.
/// On continuous data the local averaging reduces to nodal evaluation, so
/// each P1 vertex value is the source field at that vertex.
inline Vector scott_zhang_interpolate(const FeSpace& from, const FeSpace& to, std::span<const double> coeffs) {
    if (!from.same_mesh(to)) throw UsageError("interpolation between spaces on different meshes");
    if (from.components() != to.components()) throw UsageError("component count mismatch");
    if (to.family() != FeFamily::P1) throw UsageError("target of the interpolant must be continuous P1");
    if (!is_continuous(from.family())) throw UsageError("source of the interpolant must be continuous");
    if (static_cast<int>(coeffs.size()) != from.ndof()) throw UsageError("coefficient vector size mismatch");
    Vector out = Vector::Zero(to.ndof());
    std::vector<char> done(to.scalar_ndof(), 0);
    const Mesh& mesh = from.mesh();
    ShapeValues s;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const auto tdofs = to.cell_dofs(c);
        const CellMap map = cell_map(mesh, c);
        for (int k = 0; k < 3; ++k) {
            if (done[tdofs[k]]) continue;
            std::array<double, 3> bary{0.0, 0.0, 0.0};
            bary[k] = 1.0;
            eval_basis(from.family(), map, bary, s);
            for (int comp = 0; comp < from.components(); ++comp)
                out[to.global_dof(tdofs[k], comp)] = sample_field(from, coeffs, c, comp, s).value;
            done[tdofs[k]] = 1;
        }
    }
    return out;
}

/// Integrals of every scalar basis function, (phi_i, 1).
inline Vector basis_integrals(const FeSpace& space) {
    if (space.components() != 1) throw UsageError("basis integrals need a scalar space");
    Vector out = Vector::Zero(space.ndof());
    const Quadrature& q = default_quadrature();
    ShapeValues s;
    for (int c = 0; c < space.mesh().num_cells(); ++c) {
        const CellMap map = cell_map(space.mesh(), c);
        const auto dofs = space.cell_dofs(c);
        for (int p = 0; p < q.size(); ++p) {
            eval_basis(space.family(), map, q.points[p], s);
            const double w = 2.0 * map.area * q.weights[p];
            for (int i = 0; i < s.count; ++i) out[dofs[i]] += w * s.value[i];
        }
    }
    return out;
}

} // namespace vmsfem
