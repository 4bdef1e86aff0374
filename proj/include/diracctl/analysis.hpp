#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diracctl/elliptic.hpp"
#include "diracctl/mesh.hpp"
#include "diracctl/state.hpp"

namespace diracctl {

/// One side-by-side evaluation of an inequality lhs <= rhs.
struct EstimateReport {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;
    double slack = 0.0;
    bool holds = false;
    nlohmann::json config = nlohmann::json::object();
};

inline EstimateReport make_estimate(std::string name, double lhs, double rhs, double slack,
                                    nlohmann::json config) {
    EstimateReport r{std::move(name), lhs, rhs, rhs - lhs, slack, false, std::move(config)};
    r.holds = lhs <= rhs * (1.0 + slack);
    return r;
}

inline void to_json(nlohmann::json& j, const EstimateReport& r) {
    j = nlohmann::json{{"name", r.name},     {"lhs", r.lhs},     {"rhs", r.rhs},
                       {"margin", r.margin}, {"slack", r.slack}, {"holds", r.holds},
                       {"config", r.config}};
}

namespace detail {

inline void require_positive_masses(const ControlVector& omega) {
    require(omega.size() > 0, "mass vector must be nonempty");
    for (double w : omega.masses()) require(w > 0.0, "estimate requires positive masses");
}

inline void require_alpha(double alpha) {
    require(alpha > 0.0 && alpha < 4.0 * std::numbers::pi, "alpha must lie in (0, 4 pi)");
}

} // namespace detail

/// Upper bound for the whole-domain exponential moment of the Poisson
/// potential of positive point masses:
///   pi (2R/r0)^{(2 - alpha/2pi) sum w_i/w_max}
///     [(R^2 - k r0^2) + 2 r0^2 sum (2 - (2 - alpha/2pi) w_i/w_max)^{-1}].
inline double moment_bound_whole(const ControlVector& omega, double alpha, double R, double r0) {
    detail::require_positive_masses(omega);
    detail::require_alpha(alpha);
    require(R > 0.0 && r0 > 0.0, "R and r0 must be positive");
    const double pi = std::numbers::pi;
    const double k = static_cast<double>(omega.size());
    require(k * r0 * r0 <= R * R, "balls of radius r0 cannot fit in the domain");
    const double w_max = omega.max();
    const double beta = 2.0 - alpha / (2.0 * pi);
    double ratio_sum = 0.0;
    double bracket = R * R - k * r0 * r0;
    for (double w : omega.masses()) {
        ratio_sum += w / w_max;
        const double denom = 2.0 - beta * w / w_max;
        require(denom > 0.0, "nonpositive bracket denominator");
        bracket += 2.0 * r0 * r0 / denom;
    }
    return pi * std::pow(2.0 * R / r0, beta * ratio_sum) * bracket;
}

/// Upper bound for the moment on B(x_j, r0):
///   (4 pi^2 r0^2 / alpha) (2R/r0)^{(2 - alpha/2pi) sum w_i/w_j}.
inline double moment_bound_ball(const ControlVector& omega, std::size_t j, double alpha, double R,
                              double r0) {
    detail::require_positive_masses(omega);
    detail::require_alpha(alpha);
    require(j < omega.size(), "ball index out of range");
    require(R > 0.0 && r0 > 0.0, "R and r0 must be positive");
    const double pi = std::numbers::pi;
    double ratio_sum = 0.0;
    for (double w : omega.masses()) ratio_sum += w / omega[j];
    return 4.0 * pi * pi * r0 * r0 / alpha *
           std::pow(2.0 * R / r0, (2.0 - alpha / (2.0 * pi)) * ratio_sum);
}

/// L^{1+tau} bound on e^y for the zero-forcing Poisson potential:
///   pi^{1/(1+tau)} (2R/r0)^{2k} [R^2 + k(1+tau) w_max r0^2 / (4 pi - (1+tau) w_max)]^{1/(1+tau)}.
inline double lp_bound_zero_forcing(double tau, double omega_max, std::size_t k, double R,
                                           double r0) {
    const double pi = std::numbers::pi;
    require(omega_max > 0.0 && omega_max < 4.0 * pi, "omega_max must lie in (0, 4 pi)");
    require(tau >= 0.0 && tau < 4.0 * pi / omega_max - 1.0,
            "tau must lie in [0, 4 pi / omega_max - 1)");
    require(k >= 1 && R > 0.0 && r0 > 0.0, "invalid geometry for the bound");
    const double q = 1.0 + tau;
    const double kk = static_cast<double>(k);
    const double bracket = R * R + kk * q * omega_max * r0 * r0 / (4.0 * pi - q * omega_max);
    return std::pow(pi, 1.0 / q) * std::pow(2.0 * R / r0, 2.0 * kk) * std::pow(bracket, 1.0 / q);
}

/// Discrete potential of positive point masses: -Lap_h y = sum w_i delta_h(x_i).
inline GridField poisson_potential(const DomainGrid& grid, const PointSet& points,
                                   const ControlVector& omega, const CgOptions& opts = {}) {
    const ShiftedLaplacian laplace(grid);
    std::vector<double> y(grid.size(), 0.0);
    const auto report = cg_solve(laplace, dirac_source(grid, points, omega), y, opts);
    if (!report.converged) throw SolverFailure("poisson_potential: CG did not converge");
    return GridField(grid, std::move(y));
}

struct MomentBoundReports {
    EstimateReport whole;
    std::vector<EstimateReport> balls;
};

/// Compares the discrete exponential moments of the Poisson potential with
/// both closed-form bounds (whole domain, and each ball B(x_j, r0)).
inline MomentBoundReports verify_moment_bounds(const DomainGrid& grid, const PointSet& points,
                                   const ControlVector& omega, double alpha,
                                   const CgOptions& opts = {}) {
    detail::require_positive_masses(omega);
    detail::require_alpha(alpha);
    const GridField y = poisson_potential(grid, points, omega, opts);
    const double R = grid.radius();
    const double r0 = points.r0();
    const double pi = std::numbers::pi;
    const double w_max = omega.max();

    auto config = [&](const std::string& region) {
        return nlohmann::json{{"omega", omega}, {"alpha", alpha}, {"n", grid.n()},
                              {"R", R},         {"r0", r0},       {"region", region}};
    };

    std::vector<double> integrand(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k)
        integrand[k] = std::exp((4.0 * pi - alpha) * std::abs(y[k]) / w_max);
    MomentBoundReports out{make_estimate("moment_bound_whole", integrate(grid, integrand),
                                    moment_bound_whole(omega, alpha, R, r0), 0.0, config("domain")),
                      {}};

    for (std::size_t j = 0; j < points.size(); ++j) {
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const bool inside = distance(grid.node(k), points[j]) < r0;
            integrand[k] = inside ? std::exp((4.0 * pi - alpha) * std::abs(y[k]) / omega[j]) : 0.0;
        }
        out.balls.push_back(make_estimate("moment_bound_ball", integrate(grid, integrand),
                                          moment_bound_ball(omega, j, alpha, R, r0), 0.0,
                                          config("ball " + std::to_string(j))));
    }
    return out;
}

/// |e^y|_{L^{1+tau}} for the Poisson potential versus the zero-forcing bound.
inline EstimateReport verify_lp_bound(const DomainGrid& grid, const PointSet& points,
                                         const ControlVector& omega, double tau,
                                         const CgOptions& opts = {}) {
    const double w_max = omega.max();
    const double rhs = lp_bound_zero_forcing(tau, w_max, points.size(), grid.radius(),
                                                    points.r0());
    const GridField y = poisson_potential(grid, points, omega, opts);
    std::vector<double> e(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) e[k] = std::exp(y[k]);
    const double lhs = lp_norm(GridField(grid, std::move(e)), 1.0 + tau);
    return make_estimate("lp_bound_zero_forcing", lhs, rhs, 0.0,
                         {{"omega", omega}, {"tau", tau}, {"n", grid.n()},
                          {"R", grid.radius()}, {"r0", points.r0()}});
}

struct ScanRecord {
    double mass = 0.0;
    double tau = 0.0;
    std::size_t n = 0;
    double norm = 0.0;
    bool converged = false;
};

inline void write_scan_csv(const std::vector<ScanRecord>& records, std::ostream& os) {
    os << "mass,tau,n,norm,converged\n";
    for (const auto& r : records)
        os << format_double(r.mass) << ',' << format_double(r.tau) << ',' << r.n << ','
           << format_double(r.norm) << ',' << (r.converged ? "true" : "false") << '\n';
}

/// Geometry of a zero-forcing threshold scan; grids are rebuilt per entry.
struct ScanProblem {
    Rect bounds;
    std::vector<Point2> points;
};

/// |e^{S(mass 1)}|_{L^{1+tau}} for every (mass, n) pair, masses outermost.
/// Entries are independent and spread over `workers` threads; the output
/// order does not depend on the worker count.
inline std::vector<ScanRecord> threshold_scan(const ScanProblem& problem,
                                              std::span<const double> masses, double tau,
                                              std::span<const std::size_t> grid_sizes,
                                              const NewtonOptions& opts = {},
                                              std::size_t workers = 1) {
    require(tau >= 0.0, "tau must be nonnegative");
    require(workers >= 1, "worker count must be positive");
    struct Job {
        double mass;
        std::size_t n;
    };
    std::vector<Job> jobs;
    for (double m : masses)
        for (std::size_t n : grid_sizes) jobs.push_back({m, n});

    // Validate every grid up front so errors surface before any solve.
    for (std::size_t n : grid_sizes) {
        const auto grid = DomainGrid::build(problem.bounds, n);
        (void)PointSet::make(grid, problem.points);
    }

    auto run_job = [&](const Job& job) {
        const auto grid = DomainGrid::build(problem.bounds, job.n);
        ProblemSpec spec{grid, PointSet::make(grid, problem.points), GridField(grid),
                         GridField(grid), 1.0};
        ScanRecord rec{job.mass, tau, job.n, std::numeric_limits<double>::quiet_NaN(), false};
        try {
            const auto state =
                solve_state(spec, ControlVector::filled(problem.points.size(), job.mass), opts);
            rec.converged = state.report.converged;
            std::vector<double> e(grid.size());
            for (std::size_t k = 0; k < grid.size(); ++k) e[k] = std::exp(state.y[k]);
            rec.norm = lp_norm(GridField(grid, std::move(e)), 1.0 + tau);
        } catch (const SolverFailure&) {
            rec.converged = false;
        }
        return rec;
    };

    std::vector<ScanRecord> records(jobs.size());
    if (workers == 1) {
        for (std::size_t j = 0; j < jobs.size(); ++j) records[j] = run_job(jobs[j]);
        return records;
    }
    std::vector<std::future<void>> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.push_back(std::async(std::launch::async, [&, w] {
            for (std::size_t j = w; j < jobs.size(); j += workers) records[j] = run_job(jobs[j]);
        }));
    for (auto& f : pool) f.get();
    return records;
}

/// Least-squares slope of the angular mean against ln(1/r).
inline double log_slope(const GridField& field, Point2 center, std::span<const double> radii,
                        std::size_t samples = 64) {
    require(radii.size() >= 2, "log_slope needs at least two radii");
    const auto means = angular_mean(field, center, radii, samples);
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < radii.size(); ++i) {
        const double x = std::log(1.0 / radii[i]);
        sx += x;
        sy += means[i];
        sxx += x * x;
        sxy += x * means[i];
    }
    const double m = static_cast<double>(radii.size());
    const double denom = m * sxx - sx * sx;
    require(denom > 0.0, "log_slope needs distinct radii");
    return (m * sxy - sx * sy) / denom;
}

/// Geometric ladder of radii from r_min up to r_max with ratio `growth`.
inline std::vector<double> radius_ladder(double r_min, double r_max, double growth = 1.1) {
    require(r_min > 0.0 && r_max > r_min && growth > 1.0, "invalid radius ladder");
    std::vector<double> radii;
    for (double r = r_min; r <= r_max * (1.0 + 1e-12); r *= growth) radii.push_back(r);
    return radii;
}

/// Dirichlet Green function of -Lap on the unit disk,
/// written as (1/4pi) ln(1 + (1-|x|^2)(1-|x'|^2)/|x-x'|^2).
inline double green_unit_ball(Point2 x, Point2 xp) {
    const double rx2 = x.x * x.x + x.y * x.y;
    const double rp2 = xp.x * xp.x + xp.y * xp.y;
    require(rx2 < 1.0 && rp2 < 1.0, "green_unit_ball needs points in the open unit disk");
    const double dx = x.x - xp.x;
    const double dy = x.y - xp.y;
    const double d2 = dx * dx + dy * dy;
    require(d2 > 0.0, "green_unit_ball is singular at coincident points");
    return std::log1p((1.0 - rx2) * (1.0 - rp2) / d2) / (4.0 * std::numbers::pi);
}

/// The same kernel in its two-case textbook form; used as a cross-check.
inline double green_unit_ball_textbook(Point2 x, Point2 xp) {
    const double pi = std::numbers::pi;
    const double rx = std::hypot(x.x, x.y);
    if (rx == 0.0) return -std::log(std::hypot(xp.x, xp.y)) / (2.0 * pi);
    const Point2 reflected{x.x / rx - rx * xp.x, x.y / rx - rx * xp.y};
    return -(std::log(distance(x, xp)) - std::log(std::hypot(reflected.x, reflected.y))) /
           (2.0 * pi);
}

inline Point2 sample_unit_disk(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double r = std::sqrt(u(rng));
    const double theta = 2.0 * std::numbers::pi * u(rng);
    // Strictly inside the open disk.
    const double rr = std::min(r, 1.0 - 1e-12);
    return {rr * std::cos(theta), rr * std::sin(theta)};
}

struct GreenCheckOptions {
    std::size_t samples = 10000;
    std::size_t near_diagonal = 100;
    double near_distance = 1e-8;
    std::uint64_t seed = 1;
    double tolerance = 1e-12;
};

/// Samples pairs and checks 0 <= G(x,x') <= (1/2pi) ln(2/|x-x'|) and symmetry.
/// lhs is the largest violation observed; rhs is the allowed tolerance.
inline EstimateReport check_green_bound(const GreenCheckOptions& opts = {}) {
    require(opts.samples >= 1, "green check needs at least one sample");
    std::mt19937_64 rng(opts.seed);
    const double pi = std::numbers::pi;
    double worst_lower = 0.0, worst_upper = 0.0, worst_symmetry = 0.0;
    std::size_t checked = 0;

    auto check_pair = [&](Point2 x, Point2 xp) {
        const double g = green_unit_ball(x, xp);
        const double bound = std::log(2.0 / distance(x, xp)) / (2.0 * pi);
        worst_lower = std::max(worst_lower, -g);
        worst_upper = std::max(worst_upper, g - bound);
        const double swapped = green_unit_ball(xp, x);
        worst_symmetry =
            std::max(worst_symmetry, std::abs(g - swapped) / std::max(1.0, std::abs(g)));
        ++checked;
    };

    for (std::size_t s = 0; s < opts.samples; ++s) check_pair(sample_unit_disk(rng), sample_unit_disk(rng));
    std::uniform_real_distribution<double> angle(0.0, 2.0 * pi);
    for (std::size_t s = 0; s < opts.near_diagonal; ++s) {
        Point2 x = sample_unit_disk(rng);
        const double r = std::hypot(x.x, x.y);
        if (r > 1.0 - 2.0 * opts.near_distance) {
            x.x *= 0.5;
            x.y *= 0.5;
        }
        const double a = angle(rng);
        check_pair(x, {x.x + opts.near_distance * std::cos(a), x.y + opts.near_distance * std::sin(a)});
    }

    const double worst = std::max({worst_lower, worst_upper, worst_symmetry});
    auto report = make_estimate("green_unit_ball_bound", worst, opts.tolerance, 0.0,
                                {{"samples", opts.samples},
                                 {"near_diagonal", opts.near_diagonal},
                                 {"near_distance", opts.near_distance},
                                 {"seed", opts.seed},
                                 {"pairs_checked", checked},
                                 {"max_lower_violation", worst_lower},
                                 {"max_upper_violation", worst_upper},
                                 {"max_symmetry_defect", worst_symmetry}});
    return report;
}

} // namespace diracctl
