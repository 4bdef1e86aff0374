#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "diracctl/elliptic.hpp"
#include "diracctl/mesh.hpp"
#include "diracctl/state.hpp"

namespace diracctl {

/// g_i = phi(x_i), the smooth-part gradient of the reduced objective.
struct GradientVector {
    std::vector<double> components;

    std::size_t size() const noexcept { return components.size(); }
    double operator[](std::size_t i) const noexcept { return components[i]; }
};

inline void to_json(nlohmann::json& j, const GradientVector& g) { j = g.components; }

/// The Newton matrix -Lap_h + diag(e^y) at a computed state.
inline ShiftedLaplacian linearized_operator(const GridField& y) {
    std::vector<double> reaction(y.size());
    for (std::size_t k = 0; k < y.size(); ++k) reaction[k] = std::exp(y[k]);
    return ShiftedLaplacian(y.grid(), std::move(reaction));
}

namespace detail {

inline GridField checked_solve(const ShiftedLaplacian& op, const std::vector<double>& rhs,
                               const CgOptions& opts, const char* what) {
    std::vector<double> x(op.grid().size(), 0.0);
    const auto report = cg_solve(op, rhs, x, opts);
    if (!report.converged)
        throw SolverFailure(std::string(what) + ": CG stalled at relative residual " +
                            format_double(report.residual));
    return GridField(op.grid(), std::move(x));
}

} // namespace detail

/// z with (-Lap_h + e^y) z = sum omega_i delta_h(x_i): the derivative of the
/// control-to-state map in direction omega.
inline GridField solve_linearized(const DomainGrid& grid, const GridField& y,
                                  const PointSet& points, const ControlVector& omega,
                                  const CgOptions& opts = {}) {
    require(y.grid() == grid, "solve_linearized: state lives on a different grid");
    return detail::checked_solve(linearized_operator(y), dirac_source(grid, points, omega), opts,
                                 "solve_linearized");
}

/// phi with (-Lap_h + e^y) phi = y - y_d.
inline GridField solve_adjoint(const DomainGrid& grid, const GridField& y, const GridField& y_d,
                               const CgOptions& opts = {}) {
    require(y.grid() == grid && y_d.grid() == grid,
            "solve_adjoint: fields live on a different grid");
    std::vector<double> rhs(grid.size());
    for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] = y[k] - y_d[k];
    return detail::checked_solve(linearized_operator(y), rhs, opts, "solve_adjoint");
}

/// T(y) = 1/2 integral (y - y_d)^2 with the nodal quadrature.
inline double tracking_term(const GridField& y, const GridField& y_d) {
    require_same_grid(y, y_d);
    std::vector<double> sq(y.size());
    for (std::size_t k = 0; k < sq.size(); ++k) sq[k] = (y[k] - y_d[k]) * (y[k] - y_d[k]);
    return 0.5 * integrate(y.grid(), sq);
}

inline GradientVector point_values(const GridField& phi, const PointSet& points) {
    GradientVector g;
    g.components.reserve(points.size());
    for (const auto& p : points.points()) g.components.push_back(point_eval(phi, p));
    return g;
}

struct GradientOptions {
    NewtonOptions newton{};
    CgOptions adjoint{};
};

struct GradientEvaluation {
    StateSolution state;
    GridField adjoint;
    GradientVector gradient;
};

/// State, adjoint and gradient at eta; `warm_start` seeds the state solve.
inline GradientEvaluation evaluate_gradient(const ProblemSpec& spec, const ControlVector& eta,
                                            const GradientOptions& opts = {},
                                            const GridField* warm_start = nullptr) {
    require(eta.size() == spec.points.size(), "control length does not match point count");
    require(eta.max() < kCriticalMass, "smooth_gradient requires eta_max < 4 pi");
    auto state = solve_state(spec, eta, opts.newton, warm_start);
    if (!state.report.converged)
        throw SolverFailure("smooth_gradient: state solve did not converge (residual " +
                            format_double(state.report.final_residual) + ")");
    GridField phi = solve_adjoint(spec.grid, state.y, spec.y_d, opts.adjoint);
    GradientVector g = point_values(phi, spec.points);
    return {std::move(state), std::move(phi), std::move(g)};
}

inline GradientVector smooth_gradient(const ProblemSpec& spec, const ControlVector& eta,
                                      const GradientOptions& opts = {}) {
    return evaluate_gradient(spec, eta, opts).gradient;
}

} // namespace diracctl
