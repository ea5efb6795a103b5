#include "vmsfem/assembly.hpp"
#include "vmsfem/linsolve.hpp"
#include "vmsfem/stab_coeffs.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace vmsfem;

namespace {

struct State {
    Vector u_n, u_nm1, uhat, p_n, p_nm1;

    StepInput input(double dt = 0.01, double nu = 0.01) const {
        StepInput in;
        in.u_n = as_span(u_n);
        in.u_nm1 = as_span(u_nm1);
        in.uhat = as_span(uhat);
        in.p_n = as_span(p_n);
        in.p_nm1 = as_span(p_nm1);
        in.dt = dt;
        in.nu = nu;
        return in;
    }
};

State random_state(const Discretization& d, unsigned seed, double scale = 1.0) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> U(-scale, scale);
    auto rnd = [&](int n) {
        Vector v(n);
        for (auto& x : v) x = U(rng);
        return v;
    };
    State s{rnd(d.velocity().ndof()), rnd(d.velocity().ndof()), {}, rnd(d.pressure().ndof()),
            rnd(d.pressure().ndof())};
    s.uhat = 2.0 * s.u_n - s.u_nm1;
    return s;
}

State zero_state(const Discretization& d) {
    const int nu = d.velocity().ndof(), np = d.pressure().ndof();
    return {Vector::Zero(nu), Vector::Zero(nu), Vector::Zero(nu), Vector::Zero(np), Vector::Zero(np)};
}

double max_abs_diff(const Eigen::SparseMatrix<double>& a, const Eigen::SparseMatrix<double>& b) {
    return Eigen::MatrixXd(a - b).cwiseAbs().maxCoeff();
}

const std::vector<MethodKind> all_methods = {
    {Method::rbvms, FeMode::eo},        {Method::rbvms, FeMode::iss},      {Method::supg_gd, FeMode::eo},
    {Method::supg_gd, FeMode::iss},     {Method::lps_onelevel, FeMode::eo}, {Method::lps_onelevel, FeMode::iss},
    {Method::lps_interp, FeMode::eo},   {Method::lps_interp, FeMode::iss}, {Method::pspg_gd, FeMode::eo},
    {Method::pspg_gd, FeMode::iss}};

StabCoeffs tau_for(const Discretization& d, const StepInput& in) {
    return d.method().tag == Method::lps_onelevel ? compute_tau_lps_onelevel(d.mesh())
                                                   : compute_tau(d.velocity(), in.uhat, in.dt, in.nu);
}

} // namespace

TEST(MethodNames, RoundTrip) {
    for (const auto& m : all_methods) {
        EXPECT_EQ(parse_method(method_name(m.tag)), m.tag);
        EXPECT_EQ(parse_fe_mode(fe_mode_name(m.fe_mode)), m.fe_mode);
    }
    EXPECT_FALSE(parse_method("galerkin").has_value());
    EXPECT_FALSE(parse_fe_mode("p3").has_value());
}

TEST(MethodKind, SpacesAndPressureSwitch) {
    EXPECT_EQ(MethodKind({Method::lps_onelevel, FeMode::iss}).velocity_family(), FeFamily::P2Bubble);
    EXPECT_EQ(MethodKind({Method::lps_onelevel, FeMode::iss}).pressure_family(), FeFamily::P1dc);
    EXPECT_EQ(MethodKind({Method::rbvms, FeMode::iss}).pressure_family(), FeFamily::P1);
    EXPECT_EQ(MethodKind({Method::rbvms, FeMode::eo}).pressure_family(), FeFamily::P2);
    EXPECT_EQ(MethodKind({Method::supg_gd, FeMode::iss}).pressure_switch(), 0.0);
    EXPECT_EQ(MethodKind({Method::supg_gd, FeMode::eo}).pressure_switch(), 1.0);
    EXPECT_EQ(MethodKind({Method::pspg_gd, FeMode::iss}).pressure_switch(), 1.0);
}

TEST(Discretization, RejectsInvalidSpaces) {
    const Mesh m = build_uniform(1);
    EXPECT_THROW(Discretization(m, {Method::supg_gd, FeMode::eo}, FeFamily::P1, FeFamily::P1), ConfigError);
    EXPECT_THROW(Discretization(m, {Method::lps_onelevel, FeMode::iss}, FeFamily::P2, FeFamily::P1dc), ConfigError);
}

TEST(Assembly, ZeroTauReducesToGalerkin) {
    const Mesh mesh = build_uniform(2);
    for (const auto& m : all_methods) {
        const Discretization d(mesh, m);
        const State s = random_state(d, 3);
        const StepInput in = s.input();
        SparseSystem g = assemble_galerkin(d, in);
        apply_constraints(g);
        const SparseSystem full = assemble_step(d, in, StabCoeffs::zero(mesh.num_cells()));
        EXPECT_LT(max_abs_diff(full.matrix, g.matrix), 1e-12) << method_name(m.tag);
        EXPECT_LT((full.rhs - g.rhs).cwiseAbs().maxCoeff(), 1e-12) << method_name(m.tag);
    }
}

TEST(Assembly, RbvmsWithoutFineScaleTermsEqualsSupg) {
    const Mesh mesh = build_uniform(2);
    for (FeMode fe : {FeMode::eo, FeMode::iss}) {
        const Discretization dr(mesh, {Method::rbvms, fe});
        const Discretization ds(mesh, {Method::supg_gd, fe});
        const State s = random_state(dr, 5);
        const StepInput in = s.input();
        const StabCoeffs tau = compute_tau(dr.velocity(), in.uhat, in.dt, in.nu);
        RbvmsOptions off;
        off.cross_stress = false;
        off.subgrid = false;
        const SparseSystem a = assemble_step(dr, in, tau, off);
        const SparseSystem b = assemble_step(ds, in, tau);
        EXPECT_LT(max_abs_diff(a.matrix, b.matrix), 1e-12);
        EXPECT_LT((a.rhs - b.rhs).cwiseAbs().maxCoeff(), 1e-12);
        // The full RBVMS operator differs.
        const SparseSystem c = assemble_step(dr, in, tau);
        EXPECT_GT(max_abs_diff(c.matrix, b.matrix), 1e-6);
    }
}

TEST(Assembly, GradDivIsSymmetricPositiveSemidefinite) {
    const Mesh mesh = build_uniform(2);
    const Discretization d(mesh, {Method::supg_gd, FeMode::iss});
    StabCoeffs tau = StabCoeffs::zero(mesh.num_cells());
    std::fill(tau.tau_c.begin(), tau.tau_c.end(), 1.0);
    SparseSystem sys = SparseSystem::empty(d);
    add_graddiv(sys, d, tau);
    const Eigen::MatrixXd G = Eigen::MatrixXd(sys.matrix).topLeftCorner(d.velocity().ndof(), d.velocity().ndof());
    EXPECT_LT((G - G.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
    EXPECT_GT(eig.eigenvalues().minCoeff(), -1e-10);
    // u = (0, y): div u = 1 on the unit square.
    const Vector u = interpolate_function(d.velocity(), [](const Point& x) { return Eigen::Vector2d(0.0, x.y()); });
    EXPECT_NEAR(u.dot(G * u), 1.0, 1e-12);
    // Divergence-free shear flow is in the kernel.
    const Vector v = interpolate_function(d.velocity(), [](const Point& x) { return Eigen::Vector2d(x.y() * x.y(), 0.0); });
    EXPECT_NEAR(v.dot(G * v), 0.0, 1e-12);
}

TEST(Assembly, MassBlockIntegratesOne) {
    const Mesh mesh = build_uniform(3);
    const Discretization d(mesh, {Method::supg_gd, FeMode::iss});
    const State s = zero_state(d);
    StepInput in = s.input(1.0, 0.0);
    const SparseSystem sys = assemble_galerkin(d, in);
    const int n = d.velocity().ndof();
    const Vector one = Vector::Ones(n);
    // a0 = 3/2 on the unit square, two components.
    const Eigen::MatrixXd A = Eigen::MatrixXd(sys.matrix).topLeftCorner(n, n);
    EXPECT_NEAR(one.dot(A * one), 3.0, 1e-12);
}

TEST(Assembly, ZeroStateGivesZeroRhs) {
    const Mesh mesh = build_uniform(2);
    for (const auto& m : all_methods) {
        const Discretization d(mesh, m);
        const State s = zero_state(d);
        const StepInput in = s.input();
        const SparseSystem sys = assemble_step(d, in, tau_for(d, in));
        EXPECT_EQ(sys.rhs.cwiseAbs().maxCoeff(), 0.0) << method_name(m.tag);
    }
}

TEST(Assembly, LpsWithoutConvectionAddsOnlyGradDiv) {
    const Mesh mesh = build_uniform(2);
    for (Method tag : {Method::lps_onelevel, Method::lps_interp}) {
        const Discretization d(mesh, {tag, FeMode::iss});
        State s = random_state(d, 9);
        s.uhat.setZero();
        const StepInput in = s.input();
        const StabCoeffs tau = tau_for(d, in);
        SparseSystem ref = assemble_galerkin(d, in);
        add_graddiv(ref, d, tau);
        apply_constraints(ref);
        const SparseSystem sys = assemble_step(d, in, tau);
        EXPECT_LT(max_abs_diff(sys.matrix, ref.matrix), 1e-12);
    }
}

TEST(Assembly, ConstraintRowsAreIdentity) {
    const Mesh mesh = build_uniform(2);
    const Discretization d(mesh, {Method::rbvms, FeMode::eo});
    const State s = random_state(d, 1);
    const StepInput in = s.input();
    const SparseSystem sys = assemble_step(d, in, tau_for(d, in));
    const Eigen::MatrixXd A(sys.matrix);
    ASSERT_FALSE(d.layout().constrained_rows.empty());
    for (int r : d.layout().constrained_rows) {
        EXPECT_EQ(A(r, r), 1.0);
        EXPECT_EQ(A.row(r).cwiseAbs().sum(), 1.0);
        EXPECT_EQ(sys.rhs[r], 0.0);
    }
    EXPECT_EQ(static_cast<int>(d.layout().constrained_rows.size()), static_cast<int>(d.velocity().wall_dofs().size()));
}

TEST(Assembly, SolutionSatisfiesConstraints) {
    const Mesh mesh = build_uniform(3);
    for (const auto& m : all_methods) {
        const Discretization d(mesh, m);
        const State s = random_state(d, 21, 0.5);
        StepInput in = s.input();
        in.forcing = [](const Point& x, double) { return Eigen::Vector2d(std::cos(2 * M_PI * x.x()), x.y()); };
        const SparseSystem sys = assemble_step(d, in, tau_for(d, in));
        const Vector x = solve(sys);
        const int nu = d.layout().n_u, np = d.layout().n_p;
        for (int dof : d.velocity().wall_dofs()) EXPECT_NEAR(x[d.velocity().global_dof(dof, 1)], 0.0, 1e-14);
        const Vector p = x.segment(nu, np);
        const double mean = d.layout().pressure_integrals.dot(p);
        EXPECT_LE(std::abs(mean), 1e-10 * std::max(1.0, p.norm())) << method_name(m.tag);
        // Discrete divergence against the constant test function vanishes.
        const Vector u = x.head(nu);
        double div = 0.0;
        const Quadrature& q = default_quadrature();
        for (int c = 0; c < mesh.num_cells(); ++c) {
            const CellMap map = cell_map(mesh, c);
            for (int k = 0; k < q.size(); ++k) {
                const ShapeValues sv = eval_basis(d.velocity().family(), map, q.points[k]);
                div += 2.0 * map.area * q.weights[k] *
                       (sample_field(d.velocity(), as_span(u), c, 0, sv).grad.x() +
                        sample_field(d.velocity(), as_span(u), c, 1, sv).grad.y());
            }
        }
        EXPECT_NEAR(div, 0.0, 1e-10) << method_name(m.tag);
    }
}

TEST(Assembly, InputErrors) {
    const Mesh mesh = build_uniform(1);
    const Discretization d(mesh, {Method::rbvms, FeMode::eo});
    State s = zero_state(d);
    StepInput in = s.input();
    const Vector short_u = Vector::Zero(3);
    in.u_n = as_span(short_u);
    EXPECT_THROW(assemble_galerkin(d, in), UsageError);
    in = s.input();
    in.p_n = {};
    const StabCoeffs tau = compute_tau(d.velocity(), in.uhat, in.dt, in.nu);
    EXPECT_THROW(assemble_step(d, in, tau), StateError);
    EXPECT_THROW(assemble_step(d, s.input(), StabCoeffs::zero(1)), UsageError);
}
