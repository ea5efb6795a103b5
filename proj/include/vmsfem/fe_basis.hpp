#pragma once

// Reference shape functions written in barycentric coordinates, mapped to
// physical cells through the (constant) barycentric gradients of the cell.

#include "vmsfem/errors.hpp"
#include "vmsfem/mesh.hpp"

#include <Eigen/Core>

#include <array>
#include <string_view>

namespace vmsfem {

enum class FeFamily { P1, P2, P2Bubble, P1dc };

inline constexpr int max_local_dofs = 7;

constexpr int local_dof_count(FeFamily f) {
    switch (f) {
    case FeFamily::P1: return 3;
    case FeFamily::P2: return 6;
    case FeFamily::P2Bubble: return 7;
    case FeFamily::P1dc: return 3;
    }
    return 0;
}

constexpr bool is_continuous(FeFamily f) { return f != FeFamily::P1dc; }

constexpr int polynomial_degree(FeFamily f) {
    switch (f) {
    case FeFamily::P1:
    case FeFamily::P1dc: return 1;
    case FeFamily::P2: return 2;
    case FeFamily::P2Bubble: return 3;
    }
    return 0;
}

constexpr std::string_view family_name(FeFamily f) {
    switch (f) {
    case FeFamily::P1: return "P1";
    case FeFamily::P2: return "P2";
    case FeFamily::P2Bubble: return "P2Bubble";
    case FeFamily::P1dc: return "P1dc";
    }
    return "?";
}

/// Affine data of one cell: area and the gradients of the barycentric
/// coordinates (rows of `grad_lambda`).
struct CellMap {
    std::array<Point, 3> vertices;
    double area = 0.0;
    double diameter = 0.0;
    Eigen::Matrix<double, 3, 2> grad_lambda;

    Point to_physical(const std::array<double, 3>& bary) const {
        return bary[0] * vertices[0] + bary[1] * vertices[1] + bary[2] * vertices[2];
    }

    std::array<double, 3> to_barycentric(const Point& x) const {
        const double l1 = grad_lambda.row(1).dot(x - vertices[0]);
        const double l2 = grad_lambda.row(2).dot(x - vertices[0]);
        return {1.0 - l1 - l2, l1, l2};
    }
};

inline CellMap cell_map(const Mesh& mesh, int cell) {
    const CellGeometry g = cell_geometry(mesh, cell);
    CellMap m;
    m.vertices = g.vertices;
    m.area = g.area;
    m.diameter = g.diameter;
    for (int i = 0; i < 3; ++i) {
        const Point& pj = g.vertices[(i + 1) % 3];
        const Point& pk = g.vertices[(i + 2) % 3];
        m.grad_lambda(i, 0) = (pj.y() - pk.y()) / (2.0 * g.area);
        m.grad_lambda(i, 1) = (pk.x() - pj.x()) / (2.0 * g.area);
    }
    return m;
}

/// Values, physical gradients and physical Hessians of all local shape
/// functions at one point.
struct ShapeValues {
    int count = 0;
    std::array<double, max_local_dofs> value{};
    std::array<Eigen::Vector2d, max_local_dofs> grad;
    std::array<Eigen::Matrix2d, max_local_dofs> hess;

    double laplacian(int i) const { return hess[i].trace(); }
};

namespace detail {

// Barycentric representation: value, d/dlambda_i, d2/dlambda_i dlambda_j.
struct BaryShape {
    double value = 0.0;
    Eigen::Vector3d d = Eigen::Vector3d::Zero();
    Eigen::Matrix3d dd = Eigen::Matrix3d::Zero();
};

inline void bary_shapes(FeFamily family, const std::array<double, 3>& l,
                        std::array<BaryShape, max_local_dofs>& out) {
    for (auto& s : out) s = BaryShape{};
    switch (family) {
    case FeFamily::P1:
    case FeFamily::P1dc:
        for (int i = 0; i < 3; ++i) {
            out[i].value = l[i];
            out[i].d[i] = 1.0;
        }
        return;
    case FeFamily::P2:
    case FeFamily::P2Bubble:
        for (int i = 0; i < 3; ++i) {
            out[i].value = l[i] * (2.0 * l[i] - 1.0);
            out[i].d[i] = 4.0 * l[i] - 1.0;
            out[i].dd(i, i) = 4.0;
        }
        for (int k = 0; k < 3; ++k) {
            const int a = k;
            const int b = (k + 1) % 3;
            BaryShape& s = out[3 + k];
            s.value = 4.0 * l[a] * l[b];
            s.d[a] = 4.0 * l[b];
            s.d[b] = 4.0 * l[a];
            s.dd(a, b) = s.dd(b, a) = 4.0;
        }
        if (family == FeFamily::P2Bubble) {
            BaryShape& s = out[6];
            s.value = 27.0 * l[0] * l[1] * l[2];
            s.d = 27.0 * Eigen::Vector3d(l[1] * l[2], l[0] * l[2], l[0] * l[1]);
            s.dd(0, 1) = s.dd(1, 0) = 27.0 * l[2];
            s.dd(0, 2) = s.dd(2, 0) = 27.0 * l[1];
            s.dd(1, 2) = s.dd(2, 1) = 27.0 * l[0];
        }
        return;
    }
}

} // namespace detail

/// Shape functions of `family` on the cell described by `map`, evaluated at
/// the barycentric point `bary`.
inline void eval_basis(FeFamily family, const CellMap& map, const std::array<double, 3>& bary,
                       ShapeValues& out) {
    std::array<detail::BaryShape, max_local_dofs> b;
    detail::bary_shapes(family, bary, b);
    const auto& G = map.grad_lambda;
    out.count = local_dof_count(family);
    for (int i = 0; i < out.count; ++i) {
        out.value[i] = b[i].value;
        out.grad[i] = G.transpose() * b[i].d;
        out.hess[i] = G.transpose() * b[i].dd * G;
    }
}

inline ShapeValues eval_basis(FeFamily family, const CellMap& map, const std::array<double, 3>& bary) {
    ShapeValues s;
    eval_basis(family, map, bary, s);
    return s;
}

/// Barycentric coordinates of the Lagrange node of local dof `i`. Returns
/// false for hierarchical (bubble) dofs, which have no node.
inline bool local_node(FeFamily family, int i, std::array<double, 3>& bary) {
    bary = {0.0, 0.0, 0.0};
    if (i < 3) {
        bary[i] = 1.0;
        return true;
    }
    if (family == FeFamily::P1 || family == FeFamily::P1dc) throw UsageError("local dof out of range");
    if (i < 6) {
        bary[i - 3] = 0.5;
        bary[(i - 2) % 3] = 0.5;
        return true;
    }
    return false;
}

} // namespace vmsfem
