#pragma once

// Semi-implicit BDF2 time loop. By default the history starts with
// u^{-1} = u^0, so the first step is backward Euler with step 2/3 dt.

#include "vmsfem/assembly.hpp"
#include "vmsfem/errors.hpp"
#include "vmsfem/fe_space.hpp"
#include "vmsfem/linsolve.hpp"
#include "vmsfem/stab_coeffs.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace vmsfem {

struct FlowState {
    Vector u_nm1;
    Vector u_n;
    Vector p_nm1;
    Vector p_n;
    Vector uhat;
    double t = 0.0;
    int step = 0;
};

/// (3 u^{n+1} - 4 u^n + u^{n-1}) / (2 dt)
inline Vector discrete_time_derivative(const Vector& u_np1, const Vector& u_n, const Vector& u_nm1, double dt) {
    if (!(dt > 0.0)) throw ConfigError("time step must be positive");
    if (u_np1.size() != u_n.size() || u_n.size() != u_nm1.size())
        throw UsageError("time levels have different sizes");
    return (3.0 * u_np1 - 4.0 * u_n + u_nm1) / (2.0 * dt);
}

/// How the first step gets its missing history.
enum class Startup {
    /// u^{-1} = u^0: the BDF2 formula then acts as Euler with step 2/3 dt.
    /// Leaves an O(dt) error whenever du/dt(0) != 0.
    bdf2,
    /// Backward Euler with the full step, then BDF2.
    backward_euler,
};

inline std::optional<Startup> parse_startup(std::string_view s) {
    if (s == "bdf2") return Startup::bdf2;
    if (s == "euler" || s == "backward_euler") return Startup::backward_euler;
    return std::nullopt;
}

constexpr std::string_view startup_name(Startup s) { return s == Startup::bdf2 ? "bdf2" : "euler"; }

struct StepperOptions {
    SolverConfig solver;
    RbvmsOptions rbvms;
    StabConstants constants;
    ForcingFunction forcing;
    /// Solve a Stokes problem for p^0 (RBVMS only consumes it).
    bool stokes_pressure_init = true;
    Startup startup = Startup::bdf2;
};

class TimeStepper {
public:
    TimeStepper(const Discretization& disc, double dt, double nu, StepperOptions options = {})
        : disc_(&disc), dt_(dt), nu_(nu), options_(std::move(options)), solver_(options_.solver) {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("time step must be positive");
        if (!(nu >= 0.0)) throw ConfigError("viscosity must be nonnegative");
        if (disc.method().tag == Method::lps_onelevel)
            tau_ = compute_tau_lps_onelevel(disc.mesh(), options_.constants);
    }

    const Discretization& discretization() const noexcept { return *disc_; }
    double dt() const noexcept { return dt_; }
    double nu() const noexcept { return nu_; }
    const StabCoeffs& last_tau() const noexcept { return tau_; }
    const SolveReport& last_solve() const noexcept { return solver_.last_report(); }

    FlowState initialize(const VectorFunction& u0, double t0 = 0.0) {
        return initialize_from(interpolate_function(disc_->velocity(), u0), t0);
    }

    /// State from given velocity coefficients; pressure from a Stokes solve
    /// for RBVMS, zero otherwise.
    FlowState initialize_from(const Vector& u0, double t0 = 0.0) {
        if (u0.size() != disc_->velocity().ndof()) throw UsageError("initial velocity does not match the space");
        FlowState s;
        s.u_n = u0;
        s.u_nm1 = u0;
        s.uhat = u0;
        s.t = t0;
        s.p_n = Vector::Zero(disc_->pressure().ndof());
        if (disc_->method().tag == Method::rbvms && options_.stokes_pressure_init) s.p_n = stokes_pressure(u0);
        s.p_nm1 = s.p_n;
        return s;
    }

    /// Pressure of  -nu Lap u + grad p = -(u0 . grad) u0,  div u = 0  with
    /// grad-div, plus PSPG for equal order.
    Vector stokes_pressure(const Vector& u0) {
        const Discretization& d = *disc_;
        const FeSpace& V = d.velocity();
        const auto u0s = as_span(u0);
        StepInput in;
        in.transient = false;
        in.dt = dt_;
        in.nu = nu_;
        in.cell_forcing = [&](int cell, const std::array<double, 3>& bary) -> Eigen::Vector2d {
            const ShapeValues s = eval_basis(V.family(), cell_map(d.mesh(), cell), bary);
            const auto u = detail::sample_velocity(V, u0s, cell, s);
            return -(u.grad * u.value);
        };
        const StabCoeffs tau = d.method().tag == Method::lps_onelevel
                                   ? compute_tau_lps_onelevel(d.mesh(), options_.constants)
                                   : compute_tau(V, u0s, dt_, nu_, options_.constants);
        SparseSystem sys = assemble_galerkin(d, in);
        detail::ResidualTerms terms;
        terms.supg = false;
        terms.pressure_switch = d.method().pressure_switch();
        detail::add_residual_terms(sys, d, in, tau, terms);
        apply_constraints(sys);
        Vector x;
        try {
            LinearSolver solver(options_.solver);
            x = solver.solve(sys);
        } catch (const SolverError& e) {
            throw SolverError(std::string("pressure initialization failed: ") + e.what(), e.iterations(),
                              e.residual());
        }
        return x.segment(d.layout().n_u, d.layout().n_p);
    }

    /// One BDF2 step; shifts the history.
    void advance(FlowState& s) {
        const Discretization& d = *disc_;
        s.uhat = 2.0 * s.u_n - s.u_nm1;
        StepInput in;
        in.u_n = as_span(s.u_n);
        in.u_nm1 = as_span(s.u_nm1);
        in.uhat = as_span(s.uhat);
        in.p_n = as_span(s.p_n);
        in.p_nm1 = as_span(s.p_nm1);
        in.dt = dt_;
        in.nu = nu_;
        in.t_next = s.t + dt_;
        in.forcing = options_.forcing;
        in.first_order = s.step == 0 && options_.startup == Startup::backward_euler;
        if (d.method().tag != Method::lps_onelevel) tau_ = compute_tau(d.velocity(), in.uhat, dt_, nu_, options_.constants);
        const SparseSystem sys = assemble_step(d, in, tau_, options_.rbvms);
        Vector x;
        try {
            x = solver_.solve(sys);
        } catch (const SolverError& e) {
            throw SolverError("step " + std::to_string(s.step + 1) + ": " + e.what(), e.iterations(), e.residual());
        }
        s.u_nm1 = std::move(s.u_n);
        s.u_n = x.head(d.layout().n_u);
        s.p_nm1 = std::move(s.p_n);
        s.p_n = x.segment(d.layout().n_u, d.layout().n_p);
        s.uhat = 2.0 * s.u_n - s.u_nm1;
        s.t = in.t_next;
        ++s.step;
    }

private:
    const Discretization* disc_;
    double dt_;
    double nu_;
    StepperOptions options_;
    LinearSolver solver_;
    StabCoeffs tau_;
};

/// Number of steps to reach T with step dt.
inline int step_count(double T, double dt) {
    if (!(dt > 0.0) || !(T >= 0.0)) throw ConfigError("final time and step must be positive");
    return static_cast<int>(std::llround(T / dt));
}

} // namespace vmsfem
