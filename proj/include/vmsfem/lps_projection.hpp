#pragma once

// Fluctuation operators k_h = I - pi_h of the two local projection schemes:
//  - local_l2: cell-wise L2 projection onto discontinuous P1,
//  - scott_zhang: nodal P1 interpolant, using the cell's own vertex traces.
// Both act on fields sampled at the quadrature points of a cell. With the
// quadrature inner product the L2 projection matrix is the same on every
// affine cell, so it is built once on the reference triangle.

#include "vmsfem/errors.hpp"
#include "vmsfem/fe_basis.hpp"
#include "vmsfem/fe_space.hpp"
#include "vmsfem/quadrature.hpp"

#include <Eigen/Core>
#include <Eigen/LU>

#include <array>
#include <span>
#include <string>
#include <vector>

namespace vmsfem {

enum class FluctuationVariant { local_l2, scott_zhang };

/// P1 coefficients (barycentric basis) of the local L2 projection of a field
/// given by its values at the quadrature points of one cell.
inline std::array<double, 3> local_l2_project(std::span<const double> at_qp,
                                              const Quadrature& q = default_quadrature()) {
    if (static_cast<int>(at_qp.size()) != q.size()) throw UsageError("sample count does not match quadrature");
    Eigen::Matrix3d mass = Eigen::Matrix3d::Zero();
    Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
    for (int p = 0; p < q.size(); ++p) {
        const Eigen::Vector3d l(q.points[p][0], q.points[p][1], q.points[p][2]);
        mass += q.weights[p] * l * l.transpose();
        rhs += q.weights[p] * at_qp[p] * l;
    }
    const Eigen::FullPivLU<Eigen::Matrix3d> lu(mass);
    if (!lu.isInvertible()) throw MeshError("singular local mass matrix");
    const Eigen::Vector3d c = lu.solve(rhs);
    return {c[0], c[1], c[2]};
}

class FluctuationOperator {
public:
    FluctuationOperator(FluctuationVariant variant, FeFamily source, const Quadrature& q = default_quadrature())
        : variant_(variant), source_(source), quad_(&q) {
        if (variant == FluctuationVariant::scott_zhang && !is_continuous(source))
            throw UsageError("interpolation-based fluctuation needs a continuous source space");
        const int nq = q.size();
        lambda_.resize(nq, 3);
        for (int p = 0; p < nq; ++p)
            for (int i = 0; i < 3; ++i) lambda_(p, i) = q.points[p][i];
        if (variant == FluctuationVariant::local_l2) {
            const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(q.weights.data(), nq);
            const Eigen::Matrix3d mass = lambda_.transpose() * w.asDiagonal() * lambda_;
            const Eigen::MatrixXd proj = lambda_ * mass.inverse() * lambda_.transpose() * w.asDiagonal();
            l2_fluct_ = Eigen::MatrixXd::Identity(nq, nq) - proj;
        }
    }

    FluctuationVariant variant() const noexcept { return variant_; }
    FeFamily source() const noexcept { return source_; }
    FeFamily target() const noexcept {
        return variant_ == FluctuationVariant::local_l2 ? FeFamily::P1dc : FeFamily::P1;
    }
    const Quadrature& quadrature() const noexcept { return *quad_; }

    /// Fluctuation at the quadrature points of one cell. `at_vertices` holds
    /// the cell's own trace of the field at its three vertices and is only
    /// read by the interpolation variant.
    void apply_local(std::span<const double> at_qp, const std::array<double, 3>& at_vertices,
                     std::span<double> out) const {
        const int nq = quad_->size();
        if (static_cast<int>(at_qp.size()) != nq || static_cast<int>(out.size()) != nq)
            throw UsageError("sample count does not match quadrature");
        if (variant_ == FluctuationVariant::local_l2) {
            const Eigen::Map<const Eigen::VectorXd> in(at_qp.data(), nq);
            Eigen::Map<Eigen::VectorXd>(out.data(), nq) = l2_fluct_ * in;
        } else {
            for (int p = 0; p < nq; ++p)
                out[p] = at_qp[p] - (lambda_(p, 0) * at_vertices[0] + lambda_(p, 1) * at_vertices[1] +
                                     lambda_(p, 2) * at_vertices[2]);
        }
    }

    /// Dense nq x nq matrix of the L2 fluctuation (identity minus projection).
    const Eigen::MatrixXd& l2_matrix() const noexcept { return l2_fluct_; }
    const Eigen::MatrixXd& lambda_at_points() const noexcept { return lambda_; }

private:
    FluctuationVariant variant_;
    FeFamily source_;
    const Quadrature* quad_;
    Eigen::MatrixXd lambda_;
    Eigen::MatrixXd l2_fluct_;
};

/// Samples of an FE field component on every cell: `at_qp` is laid out
/// cell-major (num_cells x nq), `at_vertices` is num_cells x 3.
struct CellwiseSamples {
    int nq = 0;
    std::vector<double> at_qp;
    std::vector<std::array<double, 3>> at_vertices;

    std::span<const double> cell(int c) const {
        return {at_qp.data() + static_cast<std::size_t>(c) * nq, static_cast<std::size_t>(nq)};
    }
};

inline CellwiseSamples sample_cellwise(const FeSpace& space, std::span<const double> coeffs, int component,
                                       const Quadrature& q = default_quadrature()) {
    const Mesh& mesh = space.mesh();
    CellwiseSamples s;
    s.nq = q.size();
    s.at_qp.resize(static_cast<std::size_t>(mesh.num_cells()) * q.size());
    s.at_vertices.resize(mesh.num_cells());
    ShapeValues sv;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const CellMap map = cell_map(mesh, c);
        for (int p = 0; p < q.size(); ++p) {
            eval_basis(space.family(), map, q.points[p], sv);
            s.at_qp[static_cast<std::size_t>(c) * q.size() + p] = sample_field(space, coeffs, c, component, sv).value;
        }
        for (int k = 0; k < 3; ++k) {
            std::array<double, 3> bary{0.0, 0.0, 0.0};
            bary[k] = 1.0;
            eval_basis(space.family(), map, bary, sv);
            s.at_vertices[c][k] = sample_field(space, coeffs, c, component, sv).value;
        }
    }
    return s;
}

inline std::vector<double> fluctuation_apply(const FluctuationOperator& op, const CellwiseSamples& s) {
    std::vector<double> out(s.at_qp.size());
    const int nc = static_cast<int>(s.at_vertices.size());
    for (int c = 0; c < nc; ++c)
        op.apply_local(s.cell(c), s.at_vertices[c],
                       {out.data() + static_cast<std::size_t>(c) * s.nq, static_cast<std::size_t>(s.nq)});
    return out;
}

/// k_h applied to one component of an FE field; result sampled at the
/// quadrature points of every cell (cell-major).
inline std::vector<double> fluctuation_apply(const FluctuationOperator& op, const FeSpace& space,
                                             std::span<const double> coeffs, int component = 0) {
    if (space.family() != op.source())
        throw UsageError("field lives in " + std::string(family_name(space.family())) +
                         " but the operator expects " + std::string(family_name(op.source())));
    const CellwiseSamples s = sample_cellwise(space, coeffs, component, op.quadrature());
    return fluctuation_apply(op, s);
}

} // namespace vmsfem
