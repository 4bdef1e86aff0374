#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numbers>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "diracctl/elliptic.hpp"
#include "diracctl/errors.hpp"
#include "diracctl/mesh.hpp"

namespace diracctl {

inline constexpr double kCriticalMass = 4.0 * std::numbers::pi;

/// Masses of the k Dirac atoms.
class ControlVector {
public:
    ControlVector() = default;
    explicit ControlVector(std::vector<double> masses) : masses_(std::move(masses)) {
        for (double m : masses_) require(std::isfinite(m), "control masses must be finite");
    }
    ControlVector(std::initializer_list<double> masses)
        : ControlVector(std::vector<double>(masses)) {}

    static ControlVector zeros(std::size_t k) { return ControlVector(std::vector<double>(k, 0.0)); }
    static ControlVector filled(std::size_t k, double value) {
        return ControlVector(std::vector<double>(k, value));
    }

    std::size_t size() const noexcept { return masses_.size(); }
    double operator[](std::size_t i) const noexcept { return masses_[i]; }
    std::span<const double> masses() const noexcept { return masses_; }

    double max() const {
        require(!masses_.empty(), "empty control has no maximum");
        return *std::max_element(masses_.begin(), masses_.end());
    }
    double l1_norm() const noexcept {
        double s = 0.0;
        for (double m : masses_) s += std::abs(m);
        return s;
    }
    double linf_norm() const noexcept {
        double s = 0.0;
        for (double m : masses_) s = std::max(s, std::abs(m));
        return s;
    }
    ControlVector positive_part() const {
        std::vector<double> out(masses_);
        for (double& m : out) m = std::max(m, 0.0);
        return ControlVector(std::move(out));
    }
    ControlVector negative_part() const {
        std::vector<double> out(masses_);
        for (double& m : out) m = std::max(-m, 0.0);
        return ControlVector(std::move(out));
    }
    ControlVector scaled(double factor) const {
        std::vector<double> out(masses_);
        for (double& m : out) m *= factor;
        return ControlVector(std::move(out));
    }

    friend bool operator==(const ControlVector&, const ControlVector&) = default;

private:
    std::vector<double> masses_;
};

inline void to_json(nlohmann::json& j, const ControlVector& c) {
    j = std::vector<double>(c.masses().begin(), c.masses().end());
}

struct ProblemSpec {
    DomainGrid grid;
    PointSet points;
    GridField f0;
    GridField y_d;
    double kappa = 1.0;

    void validate() const {
        require(kappa > 0.0 && std::isfinite(kappa), "kappa must be positive");
        require(f0.grid() == grid, "f0 lives on a different grid");
        require(y_d.grid() == grid, "y_d lives on a different grid");
        for (const auto& p : points.points())
            require(grid.distance_to_boundary(p) > 2.0 * grid.h(),
                    "point set does not fit the grid");
    }
};

/// Sum of eta_i * delta_h(x_i) as a raw node array.
inline std::vector<double> dirac_source(const DomainGrid& grid, const PointSet& points,
                                        const ControlVector& eta) {
    require(eta.size() == points.size(), "control length " + std::to_string(eta.size()) +
                                             " does not match " + std::to_string(points.size()) +
                                             " points");
    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t i = 0; i < points.size(); ++i) add_dirac(grid, points[i], eta[i], out);
    return out;
}

struct NewtonOptions {
    double tol = 1e-10;
    std::size_t max_newton = 50;
    std::size_t max_halvings = 30;
    /// Continuation starts when eta_max exceeds this mass.
    double continuation_trigger = 2.0 * std::numbers::pi;
    /// Largest increase of eta_max between continuation stages.
    double continuation_step = std::numbers::pi;
    /// Tolerance for intermediate continuation stages.
    double stage_tol = 1e-6;
    CgOptions linear{};
};

struct NewtonReport {
    bool converged = false;
    std::size_t iterations = 0;
    std::size_t stages = 0;
    double final_residual = 0.0;
    bool above_threshold = false;
    std::vector<double> history;
    std::size_t linear_iterations = 0;
};

inline void to_json(nlohmann::json& j, const NewtonReport& r) {
    j = nlohmann::json{{"converged", r.converged},
                       {"iterations", r.iterations},
                       {"continuation_stages", r.stages},
                       {"final_residual", r.final_residual},
                       {"above_threshold", r.above_threshold},
                       {"residual_history", r.history},
                       {"linear_iterations", r.linear_iterations}};
}

struct StateSolution {
    GridField y;
    NewtonReport report;
};

/// Increasing mass scale factors ending at 1. A single stage unless
/// eta_max > trigger; otherwise ceil(eta_max / step) equal steps.
inline std::vector<double> continuation_schedule(const ControlVector& eta,
                                                 double trigger = 2.0 * std::numbers::pi,
                                                 double step = std::numbers::pi) {
    require(step > 0.0, "continuation step must be positive");
    if (eta.size() == 0 || eta.max() <= trigger) return {1.0};
    const auto stages = static_cast<std::size_t>(std::ceil(eta.max() / step));
    std::vector<double> factors;
    factors.reserve(stages);
    for (std::size_t s = 1; s <= stages; ++s)
        factors.push_back(s == stages ? 1.0 : static_cast<double>(s) / static_cast<double>(stages));
    return factors;
}

namespace detail {

/// F(y) = -Lap_h y + e^y - 1 - source on interior nodes, zero on the boundary.
/// Returns false if any entry overflows.
inline bool state_defect(const ShiftedLaplacian& laplace, std::span<const double> y,
                         std::span<const double> source, std::vector<double>& out) {
    const DomainGrid& grid = laplace.grid();
    out.resize(grid.size());
    laplace.apply(y, out);
    const std::size_t n = grid.n();
    for (std::size_t j = 1; j + 1 < n; ++j)
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const std::size_t k = j * n + i;
            out[k] += std::expm1(y[k]) - source[k];
            if (!std::isfinite(out[k])) return false;
        }
    return true;
}

inline double interior_max_abs(const DomainGrid& grid, std::span<const double> v) {
    const std::size_t n = grid.n();
    double m = 0.0;
    for (std::size_t j = 1; j + 1 < n; ++j)
        for (std::size_t i = 1; i + 1 < n; ++i) m = std::max(m, std::abs(v[j * n + i]));
    return m;
}

inline double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

/// Damped Newton for one source; `y` is the warm start and the result.
inline bool newton_stage(const DomainGrid& grid, std::span<const double> source, double tol,
                         const NewtonOptions& opts, std::vector<double>& y, NewtonReport& report) {
    const ShiftedLaplacian laplace(grid);
    const double scale = 1.0 + interior_max_abs(grid, source);
    std::vector<double> defect, trial(grid.size()), trial_defect, step, reaction(grid.size());
    if (!state_defect(laplace, y, source, defect))
        throw SolverFailure("solve_state: warm start overflows the exponential");
    double rel = interior_max_abs(grid, defect) / scale;
    double merit = norm2(defect);
    report.final_residual = rel;
    if (report.history.empty()) report.history.push_back(rel);

    std::size_t local = 0;
    while (rel > tol) {
        if (local >= opts.max_newton) return false;
        ++local;
        ++report.iterations;

        for (std::size_t k = 0; k < grid.size(); ++k) reaction[k] = std::exp(y[k]);
        const ShiftedLaplacian jacobian(grid, reaction);
        std::vector<double> rhs(defect.size());
        for (std::size_t k = 0; k < defect.size(); ++k) rhs[k] = -defect[k];
        CgOptions lin = opts.linear;
        lin.tol = std::max(opts.linear.tol, std::min(1e-2, 0.1 * rel));
        step.assign(grid.size(), 0.0);
        const auto lr = cg_solve(jacobian, rhs, step, lin);
        report.linear_iterations += lr.iterations;

        double lambda = 1.0;
        bool accepted = false;
        for (std::size_t halving = 0; halving <= opts.max_halvings; ++halving) {
            for (std::size_t k = 0; k < grid.size(); ++k) trial[k] = y[k] + lambda * step[k];
            if (state_defect(laplace, trial, source, trial_defect)) {
                const double trial_merit = norm2(trial_defect);
                if (trial_merit < (1.0 - 1e-4 * lambda) * merit || trial_merit == 0.0) {
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if (!accepted) return false;
        y.swap(trial);
        defect.swap(trial_defect);
        merit = norm2(defect);
        rel = interior_max_abs(grid, defect) / scale;
        report.final_residual = rel;
        report.history.push_back(rel);
    }
    return true;
}

} // namespace detail

/// Relative max-norm defect of the discrete state equation.
inline double residual(const ProblemSpec& spec, const ControlVector& eta, const GridField& y) {
    require(y.grid() == spec.grid, "residual: state lives on a different grid");
    std::vector<double> source = dirac_source(spec.grid, spec.points, eta);
    for (std::size_t k = 0; k < source.size(); ++k) source[k] += spec.f0[k];
    std::vector<double> defect;
    if (!detail::state_defect(ShiftedLaplacian(spec.grid), y.values(), source, defect))
        return std::numeric_limits<double>::infinity();
    return detail::interior_max_abs(spec.grid, defect) /
           (1.0 + detail::interior_max_abs(spec.grid, source));
}

/// Solves -Lap_h y + (e^y - 1) = f0 + sum eta_i delta_h(x_i), y = 0 on the boundary.
/// A warm start skips continuation; if that attempt fails the solve restarts
/// from zero with continuation. Non-convergence is reported, not thrown.
inline StateSolution solve_state(const ProblemSpec& spec, const ControlVector& eta,
                                 const NewtonOptions& opts = {},
                                 const GridField* warm_start = nullptr) {
    spec.validate();
    require(opts.tol > 0.0, "newton tolerance must be positive");
    const DomainGrid& grid = spec.grid;
    const std::vector<double> dirac = dirac_source(grid, spec.points, eta);

    NewtonReport report;
    report.above_threshold = eta.size() > 0 && eta.max() > kCriticalMass;
    std::vector<double> source(grid.size());
    auto fill_source = [&](double factor) {
        for (std::size_t k = 0; k < grid.size(); ++k) source[k] = spec.f0[k] + factor * dirac[k];
    };

    std::vector<double> y(grid.size(), 0.0);
    if (warm_start != nullptr) {
        require(warm_start->grid() == grid, "warm start lives on a different grid");
        y.assign(warm_start->values().begin(), warm_start->values().end());
        for (std::size_t k = 0; k < grid.size(); ++k)
            if (grid.is_boundary(k)) y[k] = 0.0;
        fill_source(1.0);
        report.stages = 1;
        if (detail::newton_stage(grid, source, opts.tol, opts, y, report)) {
            report.converged = true;
            return {GridField(grid, std::move(y)), report};
        }
        y.assign(grid.size(), 0.0);
        report.history.clear();
    }

    const auto schedule = continuation_schedule(eta, opts.continuation_trigger,
                                                opts.continuation_step);
    std::vector<double> last_good = y;
    for (std::size_t s = 0; s < schedule.size(); ++s) {
        fill_source(schedule[s]);
        ++report.stages;
        const bool final_stage = s + 1 == schedule.size();
        const double tol = final_stage ? opts.tol : std::max(opts.tol, opts.stage_tol);
        if (!detail::newton_stage(grid, source, tol, opts, y, report)) {
            report.converged = false;
            for (double v : y)
                if (!std::isfinite(v)) {
                    y = last_good;
                    break;
                }
            return {GridField(grid, std::move(y)), report};
        }
        last_good = y;
    }
    report.converged = true;
    return {GridField(grid, std::move(y)), report};
}

} // namespace diracctl
