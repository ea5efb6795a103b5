// Command-line entry point: Kelvin-Helmholtz runs, sweeps and the
// Taylor-Green check.

#include "vmsfem/vmsfem.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

namespace {

vmsfem::RunConfig build_config(const std::string& file, const std::vector<std::string>& overrides,
                               const std::string& outdir) {
    std::string text = file.empty() ? std::string() : vmsfem::read_text_file(file);
    for (const auto& o : overrides) text += "\n" + o;
    if (!outdir.empty()) text += "\noutdir=" + outdir;
    vmsfem::RunConfig cfg = vmsfem::parse_config(text);
    if (cfg.outdir.empty()) cfg.outdir = "out";
    return cfg;
}

int run_one(const vmsfem::RunConfig& cfg, bool quiet, std::mutex* io) {
    if (!cfg.outdir.empty()) std::filesystem::create_directories(cfg.outdir);
    const int every = std::max(1, vmsfem::step_count(cfg.T, cfg.dt) / 50);
    const auto res = vmsfem::run(cfg, [&](int n, const vmsfem::QoiRecord& r) {
        if (quiet || n % every) return;
        std::unique_lock<std::mutex> lock;
        if (io) lock = std::unique_lock<std::mutex>(*io);
        std::printf("[%s] step %d  t/tbar=%.2f  delta/delta0=%.4f  e_kin=%.8f  enstrophy=%.4f\n",
                    cfg.outdir.c_str(), n, r.t / cfg.t_bar(), r.delta_rel, r.e_kin, r.enstrophy);
        std::fflush(stdout);
    });
    std::printf("[%s] done: %d steps in %.1f s\n", cfg.outdir.c_str(), res.steps, res.wall_seconds);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stabilized finite element Navier-Stokes benchmark"};
    app.require_subcommand(0, 1);
    std::string sweep_flag;
    app.add_option("--sweep", sweep_flag, "same as the sweep subcommand")->check(CLI::ExistingFile);
    bool quiet_top = false;
    app.add_flag("-q,--quiet", quiet_top, "no progress output (with --sweep)");

    auto* run = app.add_subcommand("run", "Kelvin-Helmholtz mixing layer run");
    std::string config_file, outdir;
    std::vector<std::string> overrides;
    bool quiet = false;
    run->add_option("-c,--config", config_file, "key=value config file")->check(CLI::ExistingFile);
    run->add_option("-o,--outdir", outdir, "output directory (overrides the config; default out)");
    run->add_option("overrides", overrides, "key=value overrides, e.g. method=rbvms fe=iss level=6 dt=1.25e-2");
    run->add_flag("-q,--quiet", quiet, "no progress output");

    auto* sweep = app.add_subcommand("sweep", "run every line of a sweep file (one config per line)");
    std::string sweep_file;
    sweep->add_option("file", sweep_file, "file with one whitespace-separated config per line")
        ->required()
        ->check(CLI::ExistingFile);
    sweep->add_flag("-q,--quiet", quiet, "no progress output");

    auto* tg = app.add_subcommand("taylor-green", "convergence check against the Taylor-Green vortex");
    std::string method = "supg", fe = "eo";
    std::vector<int> levels{3, 4, 5};
    std::vector<double> dts{1e-3};
    double nu = 0.01, T = 0.1;
    tg->add_option("--method", method, "rbvms|supg|lps1|lpsint|pspg");
    tg->add_option("--fe", fe, "eo|iss");
    tg->add_option("--levels", levels, "mesh levels");
    tg->add_option("--dt", dts, "time steps");
    tg->add_option("--nu", nu, "viscosity");
    tg->add_option("--T", T, "final time");
    std::string startup = "bdf2";
    tg->add_option("--startup", startup, "first step: bdf2 (u^-1 = u^0) or euler");

    CLI11_PARSE(app, argc, argv);
    if (!sweep_flag.empty()) sweep_file = sweep_flag;
    quiet = quiet || quiet_top;
    if (sweep_file.empty() && app.get_subcommands().empty()) {
        std::cerr << app.help();
        return 1;
    }

    try {
        if (*run) {
            return run_one(build_config(config_file, overrides, outdir), quiet, nullptr);
        }
        if (!sweep_file.empty()) {
            std::vector<vmsfem::RunConfig> configs;
            std::istringstream lines(vmsfem::read_text_file(sweep_file));
            std::string line;
            while (std::getline(lines, line)) {
                if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#')
                    continue;
                vmsfem::RunConfig c = vmsfem::parse_config(line);
                if (c.outdir.empty()) c.outdir = "sweep_" + std::to_string(configs.size());
                configs.push_back(c);
            }
            std::mutex io;
            vmsfem::parallel_for(0, static_cast<int>(configs.size()),
                                 [&](int i) { run_one(configs[i], quiet, &io); });
            return 0;
        }
        if (*tg) {
            const auto m = vmsfem::parse_method(method);
            const auto f = vmsfem::parse_fe_mode(fe);
            const auto st = vmsfem::parse_startup(startup);
            if (!m || !f || !st) throw vmsfem::ConfigError("unknown method, fe mode or startup");
            std::printf("level,dt,steps,l2_error\n");
            double prev = -1.0;
            for (int L : levels)
                for (double dt : dts) {
                    const auto r = vmsfem::run_taylor_green({*m, *f}, L, dt, nu, T, vmsfem::SolverConfig::for_level(L), *st);
                    std::printf("%d,%.6g,%d,%.10e", L, dt, r.steps, r.l2_error);
                    if (prev > 0.0) std::printf("  order %.3f", std::log2(prev / r.l2_error));
                    std::printf("\n");
                    prev = r.l2_error;
                }
            return 0;
        }
    } catch (const vmsfem::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
