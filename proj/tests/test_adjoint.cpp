#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "diracctl/adjoint.hpp"

namespace diracctl {
namespace {

const Rect kUnitSquare{0.0, 1.0, 0.0, 1.0};
constexpr double kPi = std::numbers::pi;

ProblemSpec three_atoms(std::size_t n) {
    const auto g = DomainGrid::build(kUnitSquare, n);
    const auto f0 = GridField::sample(g, [](double x, double y) { return 2.0 * std::sin(3.0 * x) * y; });
    const auto yd = GridField::sample(g, [](double x, double y) { return 0.4 + x * y - y * y; });
    return {g, PointSet::make(g, {{0.3, 0.3}, {0.7, 0.4}, {0.45, 0.72}}), f0, yd, 1e-2};
}

NewtonOptions tight() {
    NewtonOptions o;
    o.tol = 1e-14;
    o.linear.tol = 1e-13;
    return o;
}

CgOptions tight_cg() { return {1e-13, 20000, false}; }

double l2_distance(const GridField& a, const GridField& b) {
    std::vector<double> d(a.size());
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = a[k] - b[k];
    return lp_norm(GridField(a.grid(), d), 2.0);
}

TEST(SolveLinearized, ZeroDirection) {
    const auto spec = three_atoms(33);
    const auto y = solve_state(spec, ControlVector{1.0, -2.0, 3.0}).y;
    EXPECT_EQ(solve_linearized(spec.grid, y, spec.points, ControlVector::zeros(3)).max_abs(), 0.0);
}

TEST(SolveLinearized, MatchesStateDifferenceQuotients) {
    const auto spec = three_atoms(65);
    const ControlVector eta{1.0, -2.0, 3.0}, omega{0.7, 1.3, -0.4};
    const auto base = solve_state(spec, eta, tight());
    ASSERT_TRUE(base.report.converged);
    const auto z = solve_linearized(spec.grid, base.y, spec.points, omega, tight_cg());
    std::vector<double> errors;
    for (double delta : {1e-2, 1e-3, 1e-4}) {
        std::vector<double> shifted(3);
        for (std::size_t i = 0; i < 3; ++i) shifted[i] = eta[i] + delta * omega[i];
        const auto moved = solve_state(spec, ControlVector(shifted), tight(), &base.y);
        std::vector<double> quotient(z.size());
        for (std::size_t k = 0; k < z.size(); ++k) quotient[k] = (moved.y[k] - base.y[k]) / delta;
        errors.push_back(l2_distance(GridField(spec.grid, quotient), z));
    }
    // First-order consistency: each tenfold step reduction cuts the error ~tenfold.
    EXPECT_LT(errors[1], 0.2 * errors[0]);
    EXPECT_LT(errors[2], 0.2 * errors[1]);
    EXPECT_LT(errors[2] / lp_norm(z, 2.0), 1e-3);
}

TEST(SolveLinearized, AgreesWithDenseOracle) {
    const auto spec = three_atoms(17);
    const auto y = solve_state(spec, ControlVector{1.0, -2.0, 3.0}, tight()).y;
    const ControlVector omega{0.3, -1.1, 2.0};
    const auto z = solve_linearized(spec.grid, y, spec.points, omega, {1e-15, 20000, false});
    const GridField rhs(spec.grid, dirac_source(spec.grid, spec.points, omega));
    const auto ref = dense_solve(linearized_operator(y), rhs);
    for (std::size_t k = 0; k < z.size(); ++k) EXPECT_NEAR(z[k], ref[k], 1e-10);
}

TEST(SolveAdjoint, VanishesWhenTargetIsReached) {
    const auto spec = three_atoms(33);
    const auto y = solve_state(spec, ControlVector{1.0, -2.0, 3.0}).y;
    EXPECT_EQ(solve_adjoint(spec.grid, y, y).max_abs(), 0.0);
}

TEST(SolveAdjoint, MirrorSymmetricProblemGivesSymmetricAdjoint) {
    const auto g = DomainGrid::build(kUnitSquare, 65);
    const auto f0 = GridField::sample(g, [](double x, double y) { return std::cos(kPi * (x - 0.5)) * y; });
    const auto yd = GridField::sample(g, [](double x, double y) { return (x - 0.5) * (x - 0.5) + y; });
    const ProblemSpec spec{g, PointSet::make(g, {{0.5, 0.5}}), f0, yd, 1.0};
    const auto y = solve_state(spec, ControlVector{5.0}, tight()).y;
    const auto phi = solve_adjoint(g, y, yd, tight_cg());
    for (std::size_t j = 0; j < g.n(); ++j)
        for (std::size_t i = 0; i < g.n(); ++i)
            EXPECT_NEAR(phi.at(i, j), phi.at(g.n() - 1 - i, j), 1e-9);
}

TEST(SolveAdjoint, AgreesWithDenseOracle) {
    const auto spec = three_atoms(17);
    const auto y = solve_state(spec, ControlVector{1.0, -2.0, 3.0}, tight()).y;
    const auto phi = solve_adjoint(spec.grid, y, spec.y_d, {1e-15, 20000, false});
    std::vector<double> rhs(y.size());
    for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] = y[k] - spec.y_d[k];
    const auto ref = dense_solve(linearized_operator(y), GridField(spec.grid, rhs));
    for (std::size_t k = 0; k < phi.size(); ++k) EXPECT_NEAR(phi[k], ref[k], 1e-10);
}

TEST(SmoothGradient, ZeroAtExactTarget) {
    auto spec = three_atoms(33);
    const ControlVector eta{1.0, -2.0, 3.0};
    spec.y_d = solve_state(spec, eta, tight()).y;
    for (double g : smooth_gradient(spec, eta).components) EXPECT_NEAR(g, 0.0, 1e-8);
}

TEST(SmoothGradient, MatchesCentralDifferences) {
    const auto spec = three_atoms(65);
    const ControlVector eta{1.0, -2.0, 3.0};
    GradientOptions opts;
    opts.newton = tight();
    opts.adjoint = tight_cg();
    const auto g = smooth_gradient(spec, eta, opts);
    const double step = 1e-4;
    auto tracking = [&](const ControlVector& c) {
        return tracking_term(solve_state(spec, c, tight()).y, spec.y_d);
    };
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        std::vector<double> plus(eta.masses().begin(), eta.masses().end()), minus = plus;
        plus[i] += step;
        minus[i] -= step;
        const double fd = (tracking(ControlVector(plus)) - tracking(ControlVector(minus))) / (2 * step);
        num += (fd - g[i]) * (fd - g[i]);
        den += fd * fd;
    }
    EXPECT_LE(std::sqrt(num / den), 1e-3);
}

TEST(SmoothGradient, DualityIdentityHoldsToSolverTolerance) {
    const auto spec = three_atoms(65);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    GradientOptions opts;
    opts.newton = tight();
    opts.adjoint = tight_cg();
    for (int t = 0; t < 3; ++t) {
        const ControlVector eta{u(rng), u(rng), u(rng)}, omega{u(rng), u(rng), u(rng)};
        const auto eval = evaluate_gradient(spec, eta, opts);
        const auto z = solve_linearized(spec.grid, eval.state.y, spec.points, omega, tight_cg());
        std::vector<double> prod(z.size());
        for (std::size_t k = 0; k < z.size(); ++k) prod[k] = (eval.state.y[k] - spec.y_d[k]) * z[k];
        const double lhs = integrate(spec.grid, prod);
        double rhs = 0.0;
        for (std::size_t i = 0; i < 3; ++i) rhs += eval.gradient[i] * omega[i];
        EXPECT_NEAR(lhs, rhs, 1e-8 * std::abs(rhs));
    }
}

TEST(SmoothGradient, RejectsCriticalMasses) {
    const auto spec = three_atoms(33);
    EXPECT_THROW(smooth_gradient(spec, ControlVector{4.0 * kPi, 0.0, 0.0}), InvalidInput);
}

TEST(Properties, GradientErrorShrinksWithStep) {
    const auto spec = three_atoms(33);
    const ControlVector eta{2.0 * kPi, -1.0, 3.0 * kPi};
    GradientOptions opts;
    opts.newton = tight();
    opts.adjoint = tight_cg();
    const auto g = smooth_gradient(spec, eta, opts);
    auto tracking = [&](const ControlVector& c) {
        return tracking_term(solve_state(spec, c, tight()).y, spec.y_d);
    };
    double previous = std::numeric_limits<double>::infinity();
    for (double step : {1e-2, 1e-3, 1e-4}) {
        std::vector<double> plus(eta.masses().begin(), eta.masses().end()), minus = plus;
        plus[2] += step;
        minus[2] -= step;
        const double fd = (tracking(ControlVector(plus)) - tracking(ControlVector(minus))) / (2 * step);
        const double err = std::abs(fd - g[2]) / std::abs(g[2]);
        EXPECT_LT(err, previous);
        previous = err;
    }
}

TEST(Properties, AdjointBoundStableUnderRefinement) {
    std::vector<double> ratios;
    for (std::size_t n : {33u, 65u, 129u}) {
        const auto spec = three_atoms(n);
        const auto eval = evaluate_gradient(spec, ControlVector{1.0, -2.0, 3.0});
        std::vector<double> diff(eval.state.y.size());
        for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = eval.state.y[k] - spec.y_d[k];
        ratios.push_back(eval.adjoint.max_abs() / lp_norm(GridField(spec.grid, diff), 2.0));
    }
    for (double r : ratios) EXPECT_NEAR(r / ratios.back(), 1.0, 0.1);
}

} // namespace
} // namespace diracctl
