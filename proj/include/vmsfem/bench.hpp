#pragma once

// Kelvin-Helmholtz benchmark driver, Taylor-Green verification and output
// writers.

#include "vmsfem/assembly.hpp"
#include "vmsfem/diagnostics.hpp"
#include "vmsfem/errors.hpp"
#include "vmsfem/linsolve.hpp"
#include "vmsfem/mesh.hpp"
#include "vmsfem/timestepper.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace vmsfem {

struct KhParams {
    double delta0 = 1.0 / 28.0;
    double u_inf = 1.0;
    double c_n = 1e-3;
    /// Second mode of psi: cos(20 pi y) as printed, or cos(20 pi x).
    bool second_mode_in_x = false;
};

/// Mixing-layer profile plus the curl of the stream function
/// psi = exp(-((y - 1/2)/delta0)^2) (cos 8 pi x + cos 20 pi y), or with cos 20 pi x as the second mode.
inline Eigen::Vector2d kh_initial_velocity(double x, double y, const KhParams& k = {}) {
    constexpr double pi = std::numbers::pi;
    const double s = (y - 0.5) / k.delta0;
    const double e = std::exp(-s * s);
    const double de = -2.0 * s / k.delta0 * e;
    double psi_x, psi_y;
    if (k.second_mode_in_x) {
        psi_y = de * (std::cos(8.0 * pi * x) + std::cos(20.0 * pi * x));
        psi_x = -e * (8.0 * pi * std::sin(8.0 * pi * x) + 20.0 * pi * std::sin(20.0 * pi * x));
    } else {
        psi_y = de * (std::cos(8.0 * pi * x) + std::cos(20.0 * pi * y)) - 20.0 * pi * e * std::sin(20.0 * pi * y);
        psi_x = -8.0 * pi * e * std::sin(8.0 * pi * x);
    }
    return {k.u_inf * std::tanh((2.0 * y - 1.0) / k.delta0) + k.c_n * k.u_inf * psi_y, -k.c_n * k.u_inf * psi_x};
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct RunConfig {
    MethodKind method{Method::supg_gd, FeMode::eo};
    int level = 5;
    double dt = 3.125e-3;
    double T = 7.15;
    double nu = 1.0 / 280000.0;
    KhParams kh;
    /// Snapshot instants in units of t_bar = delta0 / u_inf.
    std::vector<double> snapshots{10, 20, 30, 40, 100, 155, 165, 180, 200};
    std::string outdir;
    SolverConfig solver = SolverConfig::for_level(5);
    bool solver_set = false;
    std::optional<FeFamily> velocity_space;
    std::optional<FeFamily> pressure_space;
    PressureExtrapolation pressure_extrapolation = PressureExtrapolation::second_order;
    Startup startup = Startup::bdf2;

    double t_bar() const { return kh.delta0 / kh.u_inf; }
    double reynolds() const { return kh.u_inf * kh.delta0 / nu; }
    FeFamily velocity_family() const { return velocity_space.value_or(method.velocity_family()); }
    FeFamily pressure_family() const { return pressure_space.value_or(method.pressure_family()); }
};

namespace detail {

inline double parse_number(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
    }
}

inline int parse_int(const std::string& key, const std::string& v) {
    const double d = parse_number(key, v);
    if (d != std::floor(d)) throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
    return static_cast<int>(d);
}

inline std::optional<FeFamily> parse_family(std::string_view s) {
    for (FeFamily f : {FeFamily::P1, FeFamily::P2, FeFamily::P2Bubble, FeFamily::P1dc})
        if (family_name(f) == s) return f;
    return std::nullopt;
}

} // namespace detail

/// Checks ranges and method/space compatibility.
inline void validate(const RunConfig& c) {
    if (c.level < 1 || c.level > 8) throw ConfigError("level must lie in [1, 8]");
    if (!(c.dt > 0.0) || !std::isfinite(c.dt)) throw ConfigError("dt must be positive");
    if (!(c.T >= 0.0) || !std::isfinite(c.T)) throw ConfigError("T must be nonnegative");
    if (!(c.nu >= 0.0)) throw ConfigError("nu must be nonnegative");
    if (!(c.kh.delta0 > 0.0) || !(c.kh.u_inf > 0.0)) throw ConfigError("delta0 and u_inf must be positive");
    const FeFamily v = c.velocity_family();
    const FeFamily p = c.pressure_family();
    if (v != FeFamily::P2 && v != FeFamily::P2Bubble) throw ConfigError("velocity space must be P2 or P2Bubble");
    if (c.method.tag == Method::lps_onelevel && v != FeFamily::P2Bubble)
        throw ConfigError("method lps1 needs the bubble-enriched velocity space P2Bubble");
    if (c.method.fe_mode == FeMode::eo && p != v)
        throw ConfigError("fe=eo needs equal velocity and pressure spaces");
    if (c.method.fe_mode == FeMode::iss && polynomial_degree(p) >= polynomial_degree(v) && p != FeFamily::P1dc)
        throw ConfigError("fe=iss needs a lower-order pressure space");
    c.solver.validate();
}

/// Applies whitespace- or newline-separated key=value tokens to `c`. Lines
/// starting with '#' are comments.
inline void apply_config_text(RunConfig& c, const std::string& text) {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream tokens(line);
        std::string tok;
        while (tokens >> tok) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos || eq == 0) throw ConfigError("expected key=value, got '" + tok + "'");
            const std::string key = tok.substr(0, eq);
            const std::string v = tok.substr(eq + 1);
            if (key == "method") {
                const auto m = parse_method(v);
                if (!m) throw ConfigError("unknown method '" + v + "' (rbvms|supg|lps1|lpsint|pspg)");
                c.method.tag = *m;
            } else if (key == "fe") {
                const auto f = parse_fe_mode(v);
                if (!f) throw ConfigError("unknown fe mode '" + v + "' (eo|iss)");
                c.method.fe_mode = *f;
            } else if (key == "level") {
                c.level = detail::parse_int(key, v);
            } else if (key == "dt") {
                c.dt = detail::parse_number(key, v);
            } else if (key == "T") {
                c.T = detail::parse_number(key, v);
            } else if (key == "nu") {
                c.nu = detail::parse_number(key, v);
            } else if (key == "delta0") {
                c.kh.delta0 = detail::parse_number(key, v);
            } else if (key == "u_inf") {
                c.kh.u_inf = detail::parse_number(key, v);
            } else if (key == "c_n") {
                c.kh.c_n = detail::parse_number(key, v);
            } else if (key == "perturbation") {
                if (v == "y") c.kh.second_mode_in_x = false;
                else if (v == "x") c.kh.second_mode_in_x = true;
                else throw ConfigError("perturbation must be y or x, got '" + std::string(v) + "'");
            } else if (key == "snapshots") {
                c.snapshots.clear();
                if (v != "none" && !v.empty()) {
                    std::istringstream items(v);
                    std::string item;
                    while (std::getline(items, item, ',')) c.snapshots.push_back(detail::parse_number(key, item));
                }
            } else if (key == "outdir") {
                c.outdir = v;
            } else if (key == "solver") {
                const auto k = parse_solver_kind(v);
                if (!k) throw ConfigError("unknown solver '" + v + "' (direct|gmres)");
                c.solver.kind = *k;
                c.solver_set = true;
            } else if (key == "tol") {
                c.solver.tolerance = detail::parse_number(key, v);
            } else if (key == "maxit") {
                c.solver.max_iterations = detail::parse_int(key, v);
            } else if (key == "restart") {
                c.solver.restart = detail::parse_int(key, v);
            } else if (key == "velocity_space" || key == "pressure_space") {
                const auto f = detail::parse_family(v);
                if (!f) throw ConfigError("unknown space '" + v + "' (P1|P2|P2Bubble|P1dc)");
                (key == "velocity_space" ? c.velocity_space : c.pressure_space) = *f;
            } else if (key == "startup") {
                const auto st = parse_startup(v);
                if (!st) throw ConfigError("startup is bdf2 or euler");
                c.startup = *st;
            } else if (key == "pressure_extrapolation") {
                if (v == "2p-p") c.pressure_extrapolation = PressureExtrapolation::second_order;
                else if (v == "2p-2p") c.pressure_extrapolation = PressureExtrapolation::as_printed;
                else throw ConfigError("pressure_extrapolation is 2p-p or 2p-2p");
            } else {
                throw ConfigError("unknown key '" + key + "'");
            }
        }
    }
    if (!c.solver_set) c.solver.kind = SolverConfig::for_level(c.level).kind;
}

inline RunConfig parse_config(const std::string& text) {
    RunConfig c;
    apply_config_text(c, text);
    validate(c);
    return c;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline RunConfig parse_config_file(const std::string& path) { return parse_config(read_text_file(path)); }

/// key=value listing that parse_config reads back to the same config.
inline std::string config_echo(const RunConfig& c) {
    std::ostringstream o;
    o << "method=" << method_name(c.method.tag) << "\n";
    o << "fe=" << fe_mode_name(c.method.fe_mode) << "\n";
    o << "velocity_space=" << family_name(c.velocity_family()) << "\n";
    o << "pressure_space=" << family_name(c.pressure_family()) << "\n";
    o << "level=" << c.level << "\n";
    o << "dt=" << format_double(c.dt) << "\n";
    o << "T=" << format_double(c.T) << "\n";
    o << "nu=" << format_double(c.nu) << "\n";
    o << "delta0=" << format_double(c.kh.delta0) << "\n";
    o << "u_inf=" << format_double(c.kh.u_inf) << "\n";
    o << "c_n=" << format_double(c.kh.c_n) << "\n";
    o << "perturbation=" << (c.kh.second_mode_in_x ? "x" : "y") << "\n";
    o << "snapshots=";
    if (c.snapshots.empty()) o << "none";
    for (std::size_t i = 0; i < c.snapshots.size(); ++i) o << (i ? "," : "") << format_double(c.snapshots[i]);
    o << "\n";
    if (!c.outdir.empty()) o << "outdir=" << c.outdir << "\n";
    o << "solver=" << solver_kind_name(c.solver.kind) << "\n";
    o << "tol=" << format_double(c.solver.tolerance) << "\n";
    o << "maxit=" << c.solver.max_iterations << "\n";
    o << "restart=" << c.solver.restart << "\n";
    o << "pressure_extrapolation="
      << (c.pressure_extrapolation == PressureExtrapolation::second_order ? "2p-p" : "2p-2p") << "\n";
    o << "startup=" << startup_name(c.startup) << "\n";
    return o.str();
}

inline constexpr const char* qoi_csv_header = "t,t_bar,delta_rel,e_kin,enstrophy,palinstrophy";

inline std::string qoi_csv_row(const QoiRecord& r, double t_bar) {
    return format_double(r.t) + "," + format_double(r.t / t_bar) + "," + format_double(r.delta_rel) + "," +
           format_double(r.e_kin) + "," + format_double(r.enstrophy) + "," + format_double(r.palinstrophy);
}

inline void write_qoi_csv(const std::vector<QoiRecord>& records, const std::string& path, double t_bar) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << qoi_csv_header << "\n";
    for (const auto& r : records) out << qoi_csv_row(r, t_bar) << "\n";
    if (!out) throw IoError("write to '" + path + "' failed");
}

/// Reads a file written by write_qoi_csv.
inline std::vector<QoiRecord> read_qoi_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::string line;
    std::getline(in, line);
    if (line != qoi_csv_header) throw IoError("'" + path + "' has an unexpected header");
    std::vector<QoiRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string f;
        std::vector<double> v;
        while (std::getline(ss, f, ',')) v.push_back(std::stod(f));
        if (v.size() != 6) throw IoError("malformed row in '" + path + "'");
        out.push_back({v[0], v[2], v[3], v[4], v[5]});
    }
    return out;
}

/// Legacy ASCII VTK with the mesh vertices as points, so the periodic seam
/// appears twice. Scalars: P1-projected vorticity; vectors: vertex velocity.
inline void write_vtk_snapshot(const FeSpace& V, std::span<const double> u, const std::string& path) {
    detail::check_velocity(V, u);
    const Mesh& mesh = V.mesh();
    const FeSpace P1 = build_space(mesh, FeFamily::P1, 1, V.periodic());
    const Vector omega = project_vorticity_p1(V, u, P1);
    std::vector<double> w(mesh.num_vertices(), 0.0);
    std::vector<Eigen::Vector2d> vel(mesh.num_vertices(), Eigen::Vector2d::Zero());
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const auto pd = P1.cell_dofs(c);
        const auto vd = V.cell_dofs(c);
        for (int k = 0; k < 3; ++k) {
            const int v = mesh.cell(c)[k];
            w[v] = omega[pd[k]];
            vel[v] = {u[V.global_dof(vd[k], 0)], u[V.global_dof(vd[k], 1)]};
        }
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "# vtk DataFile Version 3.0\nvorticity snapshot\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << mesh.num_vertices() << " double\n";
    for (const auto& p : mesh.vertices()) out << format_double(p.x()) << " " << format_double(p.y()) << " 0\n";
    out << "CELLS " << mesh.num_cells() << " " << 4 * mesh.num_cells() << "\n";
    for (const auto& t : mesh.cells()) out << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
    out << "CELL_TYPES " << mesh.num_cells() << "\n";
    for (int c = 0; c < mesh.num_cells(); ++c) out << "5\n";
    out << "POINT_DATA " << mesh.num_vertices() << "\nSCALARS vorticity double 1\nLOOKUP_TABLE default\n";
    for (double x : w) out << format_double(x) << "\n";
    out << "VECTORS velocity double\n";
    for (const auto& x : vel) out << format_double(x[0]) << " " << format_double(x[1]) << " 0\n";
    if (!out) throw IoError("write to '" + path + "' failed");
}

struct RunResult {
    QoiRecord initial;
    std::vector<QoiRecord> records;
    int steps = 0;
    double wall_seconds = 0.0;
};

/// Called after every step with the step index and its record.
using StepObserver = std::function<void(int, const QoiRecord&)>;

inline std::string snapshot_name(double tbar) {
    char buf[64];
    if (tbar == std::floor(tbar) && std::abs(tbar) < 1e9)
        std::snprintf(buf, sizeof buf, "snap_%d.vtk", static_cast<int>(tbar));
    else
        std::snprintf(buf, sizeof buf, "snap_%g.vtk", tbar);
    return buf;
}

/// Kelvin-Helmholtz run. With a nonempty outdir writes qoi.csv (one row per
/// step, flushed as it goes), config.echo and snapshots.
inline RunResult run(const RunConfig& config, const StepObserver& observer = {}) {
    validate(config);
    const auto start = std::chrono::steady_clock::now();
    const Mesh mesh = build_uniform(config.level);
    const Discretization disc(mesh, config.method, config.velocity_family(), config.pressure_family());
    StepperOptions opts;
    opts.solver = config.solver;
    opts.rbvms.pressure_extrapolation = config.pressure_extrapolation;
    opts.startup = config.startup;
    TimeStepper stepper(disc, config.dt, config.nu, opts);
    const KhParams kh = config.kh;
    FlowState state = stepper.initialize([&](const Point& x) { return kh_initial_velocity(x.x(), x.y(), kh); });

    const bool write = !config.outdir.empty();
    const std::string dir = config.outdir;
    std::ofstream csv;
    std::map<int, double> snap_at;
    const int n_steps = step_count(config.T, config.dt);
    if (write) {
        std::ofstream echo(dir + "/config.echo");
        if (!echo) throw IoError("cannot write '" + dir + "/config.echo'");
        echo << config_echo(config);
        csv.open(dir + "/qoi.csv");
        if (!csv) throw IoError("cannot write '" + dir + "/qoi.csv'");
        csv << qoi_csv_header << "\n";
        csv.flush();
        for (double s : config.snapshots) {
            const int n = static_cast<int>(std::llround(s * config.t_bar() / config.dt));
            if (n >= 0 && n <= n_steps) snap_at.emplace(n, s);
        }
    }
    const auto u_span = [&] { return as_span(state.u_n); };
    RunResult result;
    result.initial = qoi_record(disc.velocity(), u_span(), state.t, kh.delta0, kh.u_inf);
    if (write && snap_at.count(0)) write_vtk_snapshot(disc.velocity(), u_span(), dir + "/" + snapshot_name(snap_at[0]));
    for (int n = 1; n <= n_steps; ++n) {
        stepper.advance(state);
        const QoiRecord r = qoi_record(disc.velocity(), u_span(), state.t, kh.delta0, kh.u_inf);
        result.records.push_back(r);
        result.steps = n;
        if (write) {
            csv << qoi_csv_row(r, config.t_bar()) << "\n";
            csv.flush();
            if (auto it = snap_at.find(n); it != snap_at.end())
                write_vtk_snapshot(disc.velocity(), u_span(), dir + "/" + snapshot_name(it->second));
        }
        if (observer) observer(n, r);
    }
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

struct TaylorGreenReport {
    int level = 0;
    double dt = 0.0;
    int steps = 0;
    double l2_error = 0.0;
    double initial_error = 0.0;
    double e_kin_initial = 0.0;
    double e_kin_final = 0.0;
    Vector velocity;
};

inline Eigen::Vector2d taylor_green_velocity(const Point& x, double t, double nu) {
    constexpr double pi = std::numbers::pi;
    const double d = std::exp(-8.0 * pi * pi * nu * t);
    return {std::sin(2 * pi * x.x()) * std::cos(2 * pi * x.y()) * d,
            -std::cos(2 * pi * x.x()) * std::sin(2 * pi * x.y()) * d};
}

/// L2 distance between an FE velocity and an analytic field.
inline double l2_error(const FeSpace& V, std::span<const double> u, const VectorFunction& exact) {
    const Mesh& mesh = V.mesh();
    const Quadrature& q = default_quadrature();
    double sum = 0.0;
    ShapeValues s;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const CellMap map = cell_map(mesh, c);
        for (int p = 0; p < q.size(); ++p) {
            eval_basis(V.family(), map, q.points[p], s);
            const Eigen::Vector2d e = exact(map.to_physical(q.points[p]));
            const double d0 = sample_field(V, u, c, 0, s).value - e[0];
            const double d1 = sample_field(V, u, c, 1, s).value - e[1];
            sum += 2.0 * map.area * q.weights[p] * (d0 * d0 + d1 * d1);
        }
    }
    return std::sqrt(sum);
}

/// Runs the Taylor-Green vortex to T and compares with the closed form.
inline TaylorGreenReport run_taylor_green(MethodKind method, int level, double dt, double nu, double T,
                                          const SolverConfig& solver = {}, Startup startup = Startup::bdf2) {
    if (level < 0 || !(dt > 0.0) || !(nu >= 0.0) || !(T >= 0.0))
        throw ConfigError("Taylor-Green parameters must be positive");
    const Mesh mesh = build_uniform(level);
    const Discretization disc(mesh, method);
    StepperOptions opts;
    opts.solver = solver;
    opts.startup = startup;
    TimeStepper stepper(disc, dt, nu, opts);
    FlowState s = stepper.initialize([&](const Point& x) { return taylor_green_velocity(x, 0.0, nu); });
    TaylorGreenReport rep;
    rep.level = level;
    rep.dt = dt;
    rep.initial_error = l2_error(disc.velocity(), as_span(s.u_n), [&](const Point& x) {
        return taylor_green_velocity(x, 0.0, nu);
    });
    rep.e_kin_initial = scalar_qois(disc.velocity(), as_span(s.u_n)).e_kin;
    const int n = step_count(T, dt);
    // ||u(0)||_L2 = 1/sqrt(2) on the unit square.
    const double blowup = 10.0 * std::sqrt(0.5);
    for (int k = 0; k < n; ++k) {
        stepper.advance(s);
        if (!s.u_n.allFinite() || s.u_n.norm() > 1e12)
            throw SolverError("Taylor-Green run diverged at step " + std::to_string(k + 1));
    }
    rep.steps = n;
    rep.l2_error = l2_error(disc.velocity(), as_span(s.u_n), [&](const Point& x) {
        return taylor_green_velocity(x, s.t, nu);
    });
    if (!(rep.l2_error <= blowup))
        throw SolverError("Taylor-Green error " + std::to_string(rep.l2_error) + " exceeds 10x the initial norm");
    rep.e_kin_final = scalar_qois(disc.velocity(), as_span(s.u_n)).e_kin;
    rep.velocity = s.u_n;
    return rep;
}

} // namespace vmsfem
