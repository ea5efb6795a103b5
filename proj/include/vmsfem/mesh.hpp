#pragma once

// Uniformly refined triangulations of the unit square, periodic in x.
//
// Level 0 splits the square along the diagonal (0,0)-(1,1); every further
// level subdivides each triangle into four congruent children through its
// edge midpoints. All coordinates are dyadic rationals, so periodic partners
// and grid lines are matched by exact floating-point comparison.

#include "vmsfem/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace vmsfem {

using Point = Eigen::Vector2d;

enum class BoundaryTag : std::uint8_t { interior, bottom, top, periodic };

struct Edge {
    std::array<int, 2> vertices;
    /// Adjacent cells; the second entry is -1 on boundary and seam edges.
    std::array<int, 2> cells{-1, -1};
    BoundaryTag tag = BoundaryTag::interior;
};

struct CellGeometry {
    double area;
    double diameter;
    std::array<Point, 3> vertices;
};

class Mesh {
public:
    static constexpr int max_level = 10;

    int level() const noexcept { return level_; }
    int num_vertices() const noexcept { return static_cast<int>(vertices_.size()); }
    int num_cells() const noexcept { return static_cast<int>(cells_.size()); }
    int num_edges() const noexcept { return static_cast<int>(edges_.size()); }

    const std::vector<Point>& vertices() const noexcept { return vertices_; }
    const Point& vertex(int v) const { return vertices_[v]; }
    const std::vector<std::array<int, 3>>& cells() const noexcept { return cells_; }
    const std::array<int, 3>& cell(int c) const { return cells_[c]; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    const Edge& edge(int e) const { return edges_[e]; }

    /// Local edge k of a cell joins local vertices k and (k+1)%3.
    const std::array<int, 3>& cell_edges(int c) const { return cell_edges_[c]; }

    /// Partner on x=0 of a vertex lying on x=1, -1 otherwise.
    int periodic_vertex_partner(int v) const { return periodic_vertex_[v]; }
    /// Partner on x=0 of an edge lying on x=1, -1 otherwise.
    int periodic_edge_partner(int e) const { return periodic_edge_[e]; }

    BoundaryTag edge_tag(int e) const { return edges_[e].tag; }

    /// Builds a mesh from explicit vertex and cell lists, deriving edges,
    /// boundary tags and the x-periodic identification.
    static Mesh from_cells(int level, std::vector<Point> vertices,
                           std::vector<std::array<int, 3>> cells);

private:
    void build_topology();

    int level_ = 0;
    std::vector<Point> vertices_;
    std::vector<std::array<int, 3>> cells_;
    std::vector<std::array<int, 3>> cell_edges_;
    std::vector<Edge> edges_;
    std::vector<int> periodic_vertex_;
    std::vector<int> periodic_edge_;
};

namespace detail {

inline std::uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

inline double signed_area(const Point& a, const Point& b, const Point& c) {
    return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

} // namespace detail

inline Mesh Mesh::from_cells(int level, std::vector<Point> vertices,
                             std::vector<std::array<int, 3>> cells) {
    Mesh m;
    m.level_ = level;
    m.vertices_ = std::move(vertices);
    m.cells_ = std::move(cells);
    for (std::size_t c = 0; c < m.cells_.size(); ++c) {
        const auto& t = m.cells_[c];
        if (!(detail::signed_area(m.vertices_[t[0]], m.vertices_[t[1]], m.vertices_[t[2]]) > 0.0))
            throw MeshError("cell " + std::to_string(c) + " is degenerate or clockwise");
    }
    m.build_topology();
    return m;
}

inline void Mesh::build_topology() {
    const int nc = num_cells();
    cell_edges_.assign(nc, {-1, -1, -1});
    edges_.clear();
    std::unordered_map<std::uint64_t, int> lookup;
    lookup.reserve(static_cast<std::size_t>(nc) * 2);
    for (int c = 0; c < nc; ++c) {
        for (int k = 0; k < 3; ++k) {
            const int a = cells_[c][k];
            const int b = cells_[c][(k + 1) % 3];
            auto [it, inserted] = lookup.try_emplace(detail::edge_key(a, b), num_edges());
            if (inserted) {
                Edge e;
                e.vertices = {std::min(a, b), std::max(a, b)};
                e.cells[0] = c;
                edges_.push_back(e);
            } else {
                Edge& e = edges_[it->second];
                if (e.cells[1] != -1)
                    throw MeshError("edge shared by more than two cells");
                e.cells[1] = c;
            }
            cell_edges_[c][k] = it->second;
        }
    }

    for (auto& e : edges_) {
        if (e.cells[1] != -1) continue;
        const Point& p = vertices_[e.vertices[0]];
        const Point& q = vertices_[e.vertices[1]];
        if (p.y() == 0.0 && q.y() == 0.0)
            e.tag = BoundaryTag::bottom;
        else if (p.y() == 1.0 && q.y() == 1.0)
            e.tag = BoundaryTag::top;
        else if ((p.x() == 0.0 && q.x() == 0.0) || (p.x() == 1.0 && q.x() == 1.0))
            e.tag = BoundaryTag::periodic;
        else
            throw MeshError("boundary edge not on the unit square boundary");
    }

    // Identify x=1 with x=0 by exact y-coordinate.
    std::map<double, int> left_vertices;
    for (int v = 0; v < num_vertices(); ++v)
        if (vertices_[v].x() == 0.0) left_vertices.emplace(vertices_[v].y(), v);
    periodic_vertex_.assign(num_vertices(), -1);
    for (int v = 0; v < num_vertices(); ++v) {
        if (vertices_[v].x() != 1.0) continue;
        auto it = left_vertices.find(vertices_[v].y());
        if (it == left_vertices.end())
            throw MeshError("vertex on x=1 without partner on x=0");
        periodic_vertex_[v] = it->second;
    }
    periodic_edge_.assign(num_edges(), -1);
    for (int e = 0; e < num_edges(); ++e) {
        const auto& ed = edges_[e];
        if (ed.tag != BoundaryTag::periodic || vertices_[ed.vertices[0]].x() != 1.0) continue;
        const int a = periodic_vertex_[ed.vertices[0]];
        const int b = periodic_vertex_[ed.vertices[1]];
        auto it = lookup.find(detail::edge_key(a, b));
        if (it == lookup.end())
            throw MeshError("edge on x=1 without partner on x=0");
        periodic_edge_[e] = it->second;
    }
}

/// Splits every triangle into four through its edge midpoints.
inline Mesh refine(const Mesh& coarse) {
    std::vector<Point> vertices = coarse.vertices();
    std::vector<std::array<int, 3>> cells;
    cells.reserve(static_cast<std::size_t>(coarse.num_cells()) * 4);
    std::unordered_map<std::uint64_t, int> midpoints;
    midpoints.reserve(static_cast<std::size_t>(coarse.num_cells()) * 2);
    auto midpoint = [&](int a, int b) {
        auto [it, inserted] = midpoints.try_emplace(detail::edge_key(a, b), static_cast<int>(vertices.size()));
        if (inserted) vertices.push_back(0.5 * (vertices[a] + vertices[b]));
        return it->second;
    };
    for (const auto& t : coarse.cells()) {
        const int m01 = midpoint(t[0], t[1]);
        const int m12 = midpoint(t[1], t[2]);
        const int m20 = midpoint(t[2], t[0]);
        cells.push_back({t[0], m01, m20});
        cells.push_back({m01, t[1], m12});
        cells.push_back({m20, m12, t[2]});
        cells.push_back({m01, m12, m20});
    }
    return Mesh::from_cells(coarse.level() + 1, std::move(vertices), std::move(cells));
}

/// Uniform mesh of the given refinement level (2*4^level cells).
inline Mesh build_uniform(int level) {
    if (level < 0 || level > Mesh::max_level)
        throw ConfigError("mesh level " + std::to_string(level) + " outside [0, " +
                          std::to_string(Mesh::max_level) + "]");
    Mesh m = Mesh::from_cells(0, {Point(0, 0), Point(1, 0), Point(1, 1), Point(0, 1)},
                              {{0, 1, 2}, {0, 2, 3}});
    for (int l = 0; l < level; ++l) m = refine(m);
    return m;
}

inline CellGeometry cell_geometry(const Mesh& mesh, int cell) {
    if (cell < 0 || cell >= mesh.num_cells())
        throw UsageError("cell index " + std::to_string(cell) + " out of range");
    const auto& t = mesh.cell(cell);
    CellGeometry g{0.0, 0.0, {mesh.vertex(t[0]), mesh.vertex(t[1]), mesh.vertex(t[2])}};
    g.area = detail::signed_area(g.vertices[0], g.vertices[1], g.vertices[2]);
    if (!(g.area > 0.0))
        throw MeshError("cell " + std::to_string(cell) + " has zero area");
    for (int k = 0; k < 3; ++k)
        g.diameter = std::max(g.diameter, (g.vertices[(k + 1) % 3] - g.vertices[k]).norm());
    return g;
}

/// Distinct vertex y-coordinates in ascending order. With `with_midrows`
/// the midlines between consecutive rows are added (the P2 node rows).
inline std::vector<double> horizontal_grid_lines(const Mesh& mesh, bool with_midrows = false) {
    std::vector<double> ys;
    ys.reserve(mesh.vertices().size());
    for (const auto& p : mesh.vertices()) ys.push_back(p.y());
    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
    if (!with_midrows) return ys;
    std::vector<double> all;
    all.reserve(2 * ys.size());
    for (std::size_t j = 0; j < ys.size(); ++j) {
        if (j > 0) all.push_back(0.5 * (ys[j - 1] + ys[j]));
        all.push_back(ys[j]);
    }
    return all;
}

} // namespace vmsfem
