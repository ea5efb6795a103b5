#include "vmsfem/bench.hpp"
#include "vmsfem/timestepper.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace vmsfem;

namespace {
constexpr double pi = std::numbers::pi;

Vector constant_vector(int n, double v) { return Vector::Constant(n, v); }
} // namespace

TEST(TimeDerivative, ConstantIsZero) {
    const Vector a = constant_vector(3, 2.5);
    EXPECT_EQ(discrete_time_derivative(a, a, a, 0.1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(TimeDerivative, ExactForQuadratics) {
    const double dt = 0.1, t = 0.7;
    auto at = [](double s) { return constant_vector(2, s * s); };
    const Vector d = discrete_time_derivative(at(t), at(t - dt), at(t - 2 * dt), dt);
    EXPECT_NEAR(d[0], 2 * t, 1e-12);
    auto lin = [](double s) { return constant_vector(2, s); };
    EXPECT_NEAR(discrete_time_derivative(lin(t), lin(t - dt), lin(t - 2 * dt), dt)[1], 1.0, 1e-12);
}

TEST(TimeDerivative, Errors) {
    const Vector a = constant_vector(3, 1.0);
    EXPECT_THROW(discrete_time_derivative(a, a, a, 0.0), ConfigError);
    EXPECT_THROW(discrete_time_derivative(a, constant_vector(2, 1.0), a, 0.1), UsageError);
}

TEST(StepCount, KhRuns) {
    EXPECT_EQ(step_count(7.15, 3.125e-3), 2288);
    EXPECT_EQ(step_count(7.15, 1.25e-2), 572);
    EXPECT_THROW(step_count(1.0, 0.0), ConfigError);
}

TEST(TimeStepper, RejectsBadParameters) {
    const Mesh mesh = build_uniform(1);
    const Discretization d(mesh, {Method::supg_gd, FeMode::eo});
    EXPECT_THROW(TimeStepper(d, 0.0, 0.1), ConfigError);
    EXPECT_THROW(TimeStepper(d, 0.1, -1.0), ConfigError);
    TimeStepper s(d, 0.1, 0.1);
    EXPECT_THROW(s.initialize_from(Vector::Zero(3)), UsageError);
}

TEST(TimeStepper, RestStaysAtRest) {
    const Mesh mesh = build_uniform(2);
    for (Method m : {Method::rbvms, Method::supg_gd, Method::lps_onelevel, Method::lps_interp, Method::pspg_gd}) {
        for (FeMode fe : {FeMode::eo, FeMode::iss}) {
            const Discretization d(mesh, {m, fe});
            TimeStepper ts(d, 0.01, 0.01);
            FlowState s = ts.initialize([](const Point&) { return Eigen::Vector2d::Zero(); });
            EXPECT_EQ(s.p_n.cwiseAbs().maxCoeff(), 0.0);
            EXPECT_EQ(s.uhat, s.u_n);
            for (int k = 0; k < 3; ++k) ts.advance(s);
            EXPECT_LT(s.u_n.cwiseAbs().maxCoeff(), 1e-14) << method_name(m);
            EXPECT_LT(s.p_n.cwiseAbs().maxCoeff(), 1e-12) << method_name(m);
            EXPECT_EQ(s.step, 3);
            EXPECT_NEAR(s.t, 0.03, 1e-15);
        }
    }
}

TEST(TimeStepper, HistoryShiftsAndExtrapolates) {
    const Mesh mesh = build_uniform(2);
    const Discretization d(mesh, {Method::supg_gd, FeMode::iss});
    TimeStepper ts(d, 0.01, 0.01);
    FlowState s = ts.initialize([](const Point& x) { return taylor_green_velocity(x, 0.0, 0.01); });
    const Vector u0 = s.u_n;
    ts.advance(s);
    EXPECT_EQ(s.u_nm1, u0);
    EXPECT_EQ(s.uhat, 2.0 * s.u_n - s.u_nm1);
    const Vector u1 = s.u_n;
    ts.advance(s);
    EXPECT_EQ(s.u_nm1, u1);
}

TEST(TimeStepper, DeterministicRerun) {
    const Mesh mesh = build_uniform(3);
    const Discretization d(mesh, {Method::rbvms, FeMode::eo});
    auto run = [&] {
        TimeStepper ts(d, 0.01, 1e-3);
        FlowState s = ts.initialize([](const Point& x) { return kh_initial_velocity(x.x(), x.y()); });
        for (int k = 0; k < 4; ++k) ts.advance(s);
        return s;
    };
    const FlowState a = run(), b = run();
    EXPECT_EQ(a.u_n, b.u_n);
    EXPECT_EQ(a.p_n, b.p_n);
}

TEST(TimeStepper, StokesPressureConvergesToTaylorGreenPressure) {
    // For the Taylor-Green field (u.grad)u = -grad p with p = (cos 4 pi x + cos 4 pi y) / 4.
    auto error = [](int level) {
        const Mesh mesh = build_uniform(level);
        const Discretization d(mesh, {Method::rbvms, FeMode::iss});
        TimeStepper ts(d, 1e-3, 0.01);
        const Vector u0 =
            interpolate_function(d.velocity(), [](const Point& x) { return taylor_green_velocity(x, 0, 0); });
        const Vector p = ts.stokes_pressure(u0);
        const Vector pex = interpolate_scalar_function(
            d.pressure(), [](const Point& x) { return 0.25 * (std::cos(4 * pi * x.x()) + std::cos(4 * pi * x.y())); });
        return (p - pex).cwiseAbs().maxCoeff();
    };
    const double e3 = error(3), e4 = error(4);
    EXPECT_LT(e4, 0.1);
    EXPECT_LT(e4, e3 / 3.0);
}

TEST(TimeStepper, NonRbvmsStartsWithZeroPressure) {
    const Mesh mesh = build_uniform(2);
    const Discretization d(mesh, {Method::supg_gd, FeMode::eo});
    TimeStepper ts(d, 1e-3, 0.01);
    const FlowState s = ts.initialize([](const Point& x) { return taylor_green_velocity(x, 0, 0); });
    EXPECT_EQ(s.p_n.cwiseAbs().maxCoeff(), 0.0);
}

TEST(TimeStepper, ForcingDrivesUniformAcceleration) {
    // u_t = (1, 0) from rest: u(t) = (t, 0) exactly, also through BDF2.
    const Mesh mesh = build_uniform(2);
    const Discretization d(mesh, {Method::supg_gd, FeMode::iss});
    StepperOptions o;
    o.forcing = [](const Point&, double) { return Eigen::Vector2d(1.0, 0.0); };
    TimeStepper ts(d, 0.1, 0.01, o);
    FlowState s = ts.initialize([](const Point&) { return Eigen::Vector2d::Zero(); });
    // The first (Euler-like) step with dt' = 2/3 dt gives 2/3 dt.
    ts.advance(s);
    const int n = d.velocity().scalar_ndof();
    EXPECT_NEAR(s.u_n.head(n).mean(), 0.1 * 2.0 / 3.0, 1e-12);
    ts.advance(s);
    ts.advance(s);
    // Velocity increments are exact (BDF2 is exact for linear data) once started.
    const Vector du = s.u_n - s.u_nm1;
    EXPECT_NEAR(du.head(n).mean(), 0.1, 0.02);
    EXPECT_LT(s.u_n.tail(n).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TimeStepper, StartupSetsTemporalOrderOfGalerkinScheme) {
    // c0 = 0 turns one-level LPS on the ISS pair into plain Galerkin.
    const Mesh mesh = build_uniform(4);
    const Discretization d(mesh, {Method::lps_onelevel, FeMode::iss});
    const double nu = 0.01, T = 0.1;
    auto final_velocity = [&](double dt, Startup st) {
        StepperOptions o;
        o.constants.c0 = 0.0;
        o.startup = st;
        TimeStepper ts(d, dt, nu, o);
        FlowState s = ts.initialize([&](const Point& x) { return taylor_green_velocity(x, 0.0, nu); });
        for (int k = 0; k < step_count(T, dt); ++k) ts.advance(s);
        return s.u_n;
    };
    auto order = [&](Startup st) {
        const Vector a = final_velocity(4e-3, st), b = final_velocity(2e-3, st), c = final_velocity(1e-3, st);
        return std::log2((a - b).norm() / (b - c).norm());
    };
    EXPECT_GT(order(Startup::backward_euler), 1.9);
    EXPECT_LT(order(Startup::bdf2), 1.2);
}

TEST(Startup, ParsesNames) {
    EXPECT_EQ(parse_startup("bdf2"), Startup::bdf2);
    EXPECT_EQ(parse_startup("euler"), Startup::backward_euler);
    EXPECT_EQ(parse_startup("backward_euler"), Startup::backward_euler);
    EXPECT_EQ(startup_name(Startup::backward_euler), "euler");
    EXPECT_FALSE(parse_startup("bdf1").has_value());
}
