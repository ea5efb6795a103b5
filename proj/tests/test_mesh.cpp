#include "vmsfem/mesh.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace vmsfem;

TEST(Mesh, CellCountQuadruplesPerLevel) {
    EXPECT_EQ(build_uniform(0).num_cells(), 2);
    EXPECT_EQ(build_uniform(1).num_cells(), 8);
    for (int L = 0; L <= 6; ++L) EXPECT_EQ(build_uniform(L).num_cells(), 2 * (1 << (2 * L)));
}

TEST(Mesh, LevelZeroGeometry) {
    const Mesh m = build_uniform(0);
    for (int c = 0; c < 2; ++c) {
        const auto g = cell_geometry(m, c);
        EXPECT_DOUBLE_EQ(g.area, 0.5);
        EXPECT_DOUBLE_EQ(g.diameter, std::sqrt(2.0));
    }
}

TEST(Mesh, AreasTileUnitSquareAndDiametersAreUniform) {
    for (int L = 0; L <= 6; ++L) {
        const Mesh m = build_uniform(L);
        double sum = 0.0;
        const double h = std::sqrt(2.0) / (1 << L);
        for (int c = 0; c < m.num_cells(); ++c) {
            const auto g = cell_geometry(m, c);
            EXPECT_GT(g.area, 0.0);
            EXPECT_NEAR(g.diameter, h, 1e-15);
            sum += g.area;
        }
        EXPECT_NEAR(sum, 1.0, 1e-14) << "level " << L;
    }
}

TEST(Mesh, TableMeshSizes) {
    EXPECT_NEAR(cell_geometry(build_uniform(5), 17).diameter, 4.419e-2, 5e-6);
    EXPECT_NEAR(cell_geometry(build_uniform(6), 99).diameter, 2.210e-2, 5e-6);
    EXPECT_NEAR(cell_geometry(build_uniform(7), 1234).diameter, 1.105e-2, 5e-6);
    EXPECT_NEAR(cell_geometry(build_uniform(5), 0).area, std::ldexp(1.0, -11), 1e-18);
}

TEST(Mesh, PeriodicPartnersMatchY) {
    const Mesh m = build_uniform(3);
    std::set<int> partners;
    int right = 0;
    for (int v = 0; v < m.num_vertices(); ++v) {
        const int p = m.periodic_vertex_partner(v);
        if (m.vertex(v).x() == 1.0) {
            ++right;
            ASSERT_GE(p, 0);
            EXPECT_EQ(m.vertex(p).x(), 0.0);
            EXPECT_EQ(m.vertex(p).y(), m.vertex(v).y());
            EXPECT_EQ(m.periodic_vertex_partner(p), -1);
            partners.insert(p);
        } else {
            EXPECT_EQ(p, -1);
        }
    }
    EXPECT_EQ(right, 9);
    EXPECT_EQ(static_cast<int>(partners.size()), right);
    for (int e = 0; e < m.num_edges(); ++e) {
        const int p = m.periodic_edge_partner(e);
        const auto& ed = m.edge(e);
        const bool on_right = m.vertex(ed.vertices[0]).x() == 1.0 && m.vertex(ed.vertices[1]).x() == 1.0;
        EXPECT_EQ(p >= 0, on_right);
        if (p >= 0) EXPECT_EQ(m.edge_tag(p), BoundaryTag::periodic);
    }
}

TEST(Mesh, EdgeAdjacencyAndTags) {
    const Mesh m = build_uniform(2);
    int bottom = 0, top = 0;
    for (const auto& e : m.edges()) {
        const bool boundary = e.tag != BoundaryTag::interior;
        EXPECT_EQ(e.cells[1] < 0, boundary);
        EXPECT_GE(e.cells[0], 0);
        if (e.tag == BoundaryTag::bottom) {
            ++bottom;
            EXPECT_EQ(m.vertex(e.vertices[0]).y(), 0.0);
        }
        if (e.tag == BoundaryTag::top) {
            ++top;
            EXPECT_EQ(m.vertex(e.vertices[1]).y(), 1.0);
        }
    }
    EXPECT_EQ(bottom, 4);
    EXPECT_EQ(top, 4);
}

TEST(Mesh, CellEdgesJoinLocalVertices) {
    const Mesh m = build_uniform(2);
    for (int c = 0; c < m.num_cells(); ++c)
        for (int k = 0; k < 3; ++k) {
            const auto& e = m.edge(m.cell_edges(c)[k]);
            const std::set<int> a{e.vertices[0], e.vertices[1]};
            const std::set<int> b{m.cell(c)[k], m.cell(c)[(k + 1) % 3]};
            EXPECT_EQ(a, b);
        }
}

TEST(Mesh, GridLines) {
    EXPECT_EQ(horizontal_grid_lines(build_uniform(0)), (std::vector<double>{0.0, 1.0}));
    EXPECT_EQ(horizontal_grid_lines(build_uniform(1)), (std::vector<double>{0.0, 0.5, 1.0}));
    const auto ys = horizontal_grid_lines(build_uniform(5), true);
    ASSERT_EQ(ys.size(), 65u);
    for (int j = 0; j <= 64; ++j) EXPECT_EQ(ys[j], j / 64.0);
}

TEST(Mesh, Errors) {
    EXPECT_THROW(build_uniform(11), ConfigError);
    EXPECT_THROW(build_uniform(-1), ConfigError);
    const Mesh m = build_uniform(1);
    EXPECT_THROW(cell_geometry(m, 8), UsageError);
    EXPECT_THROW(Mesh::from_cells(0, {Point(0, 0), Point(1, 0), Point(2, 0)}, {{0, 1, 2}}), MeshError);
}
