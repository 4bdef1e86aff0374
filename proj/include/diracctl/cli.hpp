#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "diracctl/adjoint.hpp"
#include "diracctl/analysis.hpp"
#include "diracctl/optimizer.hpp"
#include "diracctl/problem.hpp"
#include "diracctl/state.hpp"

namespace diracctl::cli {

enum ExitCode : int { ok = 0, config_error = 2, solver_failure = 3, estimate_violation = 4 };

struct RunConfig {
    std::string command;
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::size_t> grid_n;
    double tol = 1e-10;
    std::uint64_t seed = 1;
    std::size_t workers = 1;

    std::vector<double> eta;        // state, kkt
    bool jacobi = false;

    // optimize
    double eps0 = 0.5;
    double factor = 0.5;
    std::size_t stages = 4;
    double lower_bound = 10.0;
    std::vector<double> caps;
    double inner_tol = 1e-8;
    std::size_t max_inner = 500;
    double step = 1.0;

    // kkt / optimize
    double tol_class = 1e-3;
    double tol_res = 1e-2;

    // scan
    std::vector<double> masses;
    double tau = 0.25;
    std::vector<std::size_t> grids;

    // estimates
    std::vector<double> omega;
    std::vector<double> alphas;
    std::vector<double> taus;

    // green-check
    std::size_t samples = 10000;
    std::size_t near_diagonal = 100;
};

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j{{"command", c.command},
                     {"config", c.config_path},
                     {"out", c.out_dir},
                     {"grid_n", c.grid_n ? nlohmann::json(*c.grid_n) : nlohmann::json()},
                     {"tol", c.tol},
                     {"seed", c.seed},
                     {"workers", c.workers},
                     {"jacobi", c.jacobi}};
    if (c.command == "state" || c.command == "kkt") j["eta"] = c.eta;
    if (c.command == "optimize")
        j["path"] = {{"eps0", c.eps0},         {"factor", c.factor},   {"stages", c.stages},
                     {"lower_bound", c.lower_bound}, {"caps", c.caps}, {"inner_tol", c.inner_tol},
                     {"max_inner", c.max_inner}, {"step", c.step}};
    if (c.command == "optimize" || c.command == "kkt")
        j["kkt"] = {{"tol_class", c.tol_class}, {"tol_res", c.tol_res}};
    if (c.command == "scan") j["scan"] = {{"masses", c.masses}, {"tau", c.tau}, {"grids", c.grids}};
    if (c.command == "estimates")
        j["estimates"] = {{"omega", c.omega}, {"alphas", c.alphas}, {"taus", c.taus}};
    if (c.command == "green-check")
        j["green"] = {{"samples", c.samples}, {"near_diagonal", c.near_diagonal}};
    return j;
}

namespace detail {

inline void write_json(const std::filesystem::path& file, const nlohmann::json& j) {
    std::ofstream out(file);
    require(static_cast<bool>(out), "cannot write " + file.string());
    out << j.dump(2) << '\n';
}

inline std::ofstream open_output(const std::filesystem::path& file) {
    std::ofstream out(file);
    require(static_cast<bool>(out), "cannot write " + file.string());
    return out;
}

inline NewtonOptions newton_options(const RunConfig& c) {
    NewtonOptions o;
    o.tol = c.tol;
    o.linear.jacobi = c.jacobi;
    return o;
}

inline ControlVector control_from(const RunConfig& c, const ProblemDocument& doc) {
    if (!c.eta.empty()) {
        require(c.eta.size() == doc.points.size(),
                "--eta needs " + std::to_string(doc.points.size()) + " masses");
        return ControlVector(c.eta);
    }
    if (doc.eta) return *doc.eta;
    return ControlVector::zeros(doc.points.size());
}

inline int run_state(const RunConfig& c, const ProblemDocument& doc,
                     const std::filesystem::path& out) {
    const auto spec = doc.materialize(c.grid_n);
    const ControlVector eta = control_from(c, doc);
    const auto solution = solve_state(spec, eta, newton_options(c));
    {
        auto csv = open_output(out / "state.csv");
        write_csv(solution.y, csv);
    }
    nlohmann::json report = solution.report;
    report["eta"] = eta;
    write_json(out / "newton_report.json", report);
    return solution.report.converged ? ok : solver_failure;
}

inline GradientOptions gradient_options(const RunConfig& c) {
    GradientOptions g;
    g.newton = newton_options(c);
    g.adjoint.jacobi = c.jacobi;
    return g;
}

inline int run_optimize(const RunConfig& c, const ProblemDocument& doc,
                        const std::filesystem::path& out) {
    const auto spec = doc.materialize(c.grid_n);
    PathConfig cfg;
    cfg.eps0 = c.eps0;
    cfg.factor = c.factor;
    cfg.stages = c.stages;
    cfg.lower_bound = c.lower_bound;
    if (!c.caps.empty()) cfg.user_caps = ControlVector(c.caps);
    cfg.inner.inner_tol = c.inner_tol;
    cfg.inner.max_iter = c.max_inner;
    cfg.inner.step = c.step;
    cfg.inner.gradient = gradient_options(c);
    const auto path = regularization_path(spec, cfg);
    {
        auto csv = open_output(out / "iterates.csv");
        write_iterate_csv(path.log, csv);
    }
    nlohmann::json control{{"eta", path.eta}, {"stages", path.stages}};
    if (path.failure) control["failure"] = *path.failure;
    write_json(out / "control.json", control);
    if (path.failure) return solver_failure;

    const double last_eps = c.eps0 * std::pow(c.factor, static_cast<double>(c.stages - 1));
    const BoxBounds box = build_default_box(spec.points.size(), last_eps, cfg.user_caps,
                                            c.lower_bound);
    KktOptions k;
    k.tol_class = c.tol_class;
    k.tol_res = c.tol_res;
    k.newton = newton_options(c);
    k.adjoint.jacobi = c.jacobi;
    write_json(out / "kkt_report.json", verify_kkt(spec, path.eta, k, &box));
    return ok;
}

inline int run_kkt(const RunConfig& c, const ProblemDocument& doc,
                   const std::filesystem::path& out) {
    const auto spec = doc.materialize(c.grid_n);
    KktOptions k;
    k.tol_class = c.tol_class;
    k.tol_res = c.tol_res;
    k.newton = newton_options(c);
    k.adjoint.jacobi = c.jacobi;
    write_json(out / "kkt_report.json", verify_kkt(spec, control_from(c, doc), k));
    return ok;
}

inline int run_scan(const RunConfig& c, const ProblemDocument& doc,
                    const std::filesystem::path& out) {
    require(doc.f0.is_zero(), "scan requires f0 = 0");
    require(!c.masses.empty(), "scan needs --masses");
    std::vector<std::size_t> grids = c.grids;
    if (grids.empty()) grids.push_back(c.grid_n.value_or(doc.n));
    const auto records = threshold_scan({doc.bounds, doc.points}, c.masses, c.tau, grids,
                                        newton_options(c), c.workers);
    auto csv = open_output(out / "scan.csv");
    write_scan_csv(records, csv);
    for (const auto& r : records)
        if (!r.converged) return solver_failure;
    return ok;
}

inline int run_estimates(const RunConfig& c, const ProblemDocument& doc,
                         const std::filesystem::path& out) {
    const auto grid = DomainGrid::build(doc.bounds, c.grid_n.value_or(doc.n));
    const auto points = PointSet::make(grid, doc.points);
    ControlVector omega = !c.omega.empty() ? ControlVector(c.omega)
                          : doc.eta         ? *doc.eta
                                            : ControlVector::filled(points.size(), std::numbers::pi);
    require(omega.size() == points.size(), "--omega needs one mass per point");
    std::vector<double> alphas = c.alphas;
    if (alphas.empty()) alphas = {std::numbers::pi, 2.0 * std::numbers::pi, 3.9 * std::numbers::pi};
    CgOptions lin;
    lin.tol = std::min(c.tol, 1e-10);
    lin.jacobi = c.jacobi;

    nlohmann::json reports = nlohmann::json::array();
    bool all_hold = true;
    for (double alpha : alphas) {
        const auto r = verify_moment_bounds(grid, points, omega, alpha, lin);
        reports.push_back(r.whole);
        all_hold = all_hold && r.whole.holds;
        for (const auto& b : r.balls) {
            reports.push_back(b);
            all_hold = all_hold && b.holds;
        }
    }
    for (double tau : c.taus) {
        const auto r = verify_lp_bound(grid, points, omega, tau, lin);
        reports.push_back(r);
        all_hold = all_hold && r.holds;
    }
    write_json(out / "estimates.json", reports);
    return all_hold ? ok : estimate_violation;
}

inline int run_green_check(const RunConfig& c, const std::filesystem::path& out) {
    GreenCheckOptions g;
    g.samples = c.samples;
    g.near_diagonal = c.near_diagonal;
    g.seed = c.seed;
    const auto report = check_green_bound(g);
    write_json(out / "green_check.json", report);
    return report.holds ? ok : estimate_violation;
}

} // namespace detail

/// Executes one command, writing its artifacts plus manifest.json into
/// out_dir. Failures write error.json and map to the documented exit codes.
inline int run(const RunConfig& config) {
    std::filesystem::path out(config.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    auto fail = [&](int code, const std::string& kind, const std::string& message) {
        try {
            detail::write_json(out / "error.json",
                               {{"status", code}, {"kind", kind}, {"message", message}});
        } catch (...) {
        }
        std::cerr << "error: " << message << '\n';
        return code;
    };
    if (ec) return fail(config_error, "config", "cannot create output directory: " + ec.message());

    try {
        detail::write_json(out / "manifest.json", to_json(config));
        if (config.command == "green-check") return detail::run_green_check(config, out);
        require(!config.config_path.empty(), "--config is required for '" + config.command + "'");
        const ProblemDocument doc = load_problem(config.config_path);
        if (config.command == "state") return detail::run_state(config, doc, out);
        if (config.command == "optimize") return detail::run_optimize(config, doc, out);
        if (config.command == "kkt") return detail::run_kkt(config, doc, out);
        if (config.command == "scan") return detail::run_scan(config, doc, out);
        if (config.command == "estimates") return detail::run_estimates(config, doc, out);
        return fail(config_error, "config", "unknown command '" + config.command + "'");
    } catch (const InvalidInput& e) {
        return fail(config_error, "config", e.what());
    } catch (const SolverFailure& e) {
        return fail(solver_failure, "solver", e.what());
    } catch (const std::exception& e) {
        return fail(solver_failure, "internal", e.what());
    }
}

/// Parses argv into a RunConfig. Returns an exit code when parsing ends the
/// process (help, or a malformed command line).
inline std::optional<int> parse_args(int argc, const char* const* argv, RunConfig& config) {
    CLI::App app{"Sparse Dirac-control solver and estimate checker"};
    app.require_subcommand(1);

    auto common = [&](CLI::App* sub, bool needs_config) {
        auto* opt = sub->add_option("--config", config.config_path, "Problem JSON file");
        if (needs_config) opt->required()->check(CLI::ExistingFile);
        sub->add_option("--out", config.out_dir, "Output directory");
        sub->add_option("--grid-n", config.grid_n, "Override nodes per side")
            ->check(CLI::Range(5, 1 << 14));
        sub->add_option("--tol", config.tol, "Newton tolerance (relative max-norm defect)")
            ->check(CLI::PositiveNumber);
        sub->add_option("--seed", config.seed, "Random seed");
        sub->add_option("--workers", config.workers, "Worker threads")->check(CLI::Range(1, 256));
        sub->add_flag("--jacobi", config.jacobi, "Jacobi-preconditioned CG");
    };

    auto* state = app.add_subcommand("state", "Solve the state equation");
    common(state, true);
    state->add_option("--eta", config.eta, "Masses, one per point")->delimiter(',');

    auto* optimize = app.add_subcommand("optimize", "Follow the eps-regularization path");
    common(optimize, true);
    optimize->add_option("--eps0", config.eps0, "Initial eps")->check(CLI::PositiveNumber);
    optimize->add_option("--factor", config.factor, "Geometric eps decay")->check(CLI::Range(0.0, 1.0));
    optimize->add_option("--stages", config.stages, "Number of path stages")->check(CLI::Range(1, 100));
    optimize->add_option("--lower-bound", config.lower_bound, "Lower box bound magnitude A")
        ->check(CLI::PositiveNumber);
    optimize->add_option("--caps", config.caps, "Per-point upper caps")->delimiter(',');
    optimize->add_option("--inner-tol", config.inner_tol, "Stopping tolerance on |d eta|_inf")
        ->check(CLI::PositiveNumber);
    optimize->add_option("--max-inner", config.max_inner, "Iteration cap per stage");
    optimize->add_option("--step", config.step, "Initial step size")->check(CLI::PositiveNumber);
    optimize->add_option("--tol-class", config.tol_class, "KKT classification tolerance");
    optimize->add_option("--tol-res", config.tol_res, "KKT residual tolerance");

    auto* kkt = app.add_subcommand("kkt", "Check first-order conditions at a control");
    common(kkt, true);
    kkt->add_option("--eta", config.eta, "Masses, one per point")->delimiter(',');
    kkt->add_option("--tol-class", config.tol_class, "Classification tolerance");
    kkt->add_option("--tol-res", config.tol_res, "Residual tolerance");

    auto* scan = app.add_subcommand("scan", "Integrability scan over masses and grids");
    common(scan, true);
    scan->add_option("--masses", config.masses, "Masses applied to every point")
        ->delimiter(',')
        ->required();
    scan->add_option("--tau", config.tau, "Exponent offset tau")->check(CLI::NonNegativeNumber);
    scan->add_option("--grids", config.grids, "Grid sizes")->delimiter(',');

    auto* estimates = app.add_subcommand("estimates", "Exponential-moment estimates");
    common(estimates, true);
    estimates->add_option("--omega", config.omega, "Positive masses")->delimiter(',');
    estimates->add_option("--alphas", config.alphas, "alpha values in (0, 4 pi)")->delimiter(',');
    estimates->add_option("--taus", config.taus, "tau values for the L^{1+tau} bound")->delimiter(',');

    auto* green = app.add_subcommand("green-check", "Unit-disk Green function bound");
    common(green, false);
    green->add_option("--samples", config.samples, "Random pairs")->check(CLI::Range(1, 100000000));
    green->add_option("--near-diagonal", config.near_diagonal, "Near-diagonal pairs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return config_error;
    }
    for (auto* sub : app.get_subcommands()) config.command = sub->get_name();
    return std::nullopt;
}

} // namespace diracctl::cli
