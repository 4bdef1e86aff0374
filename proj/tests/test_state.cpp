#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "diracctl/analysis.hpp"
#include "diracctl/state.hpp"

namespace diracctl {
namespace {

const Rect kUnitSquare{0.0, 1.0, 0.0, 1.0};
constexpr double kPi = std::numbers::pi;

ProblemSpec make_spec(std::size_t n, std::vector<Point2> points) {
    const auto g = DomainGrid::build(kUnitSquare, n);
    return {g, PointSet::make(g, std::move(points)), GridField(g), GridField(g), 1.0};
}

double manufactured_error(std::size_t n) {
    const auto g = DomainGrid::build(kUnitSquare, n);
    auto exact = [](double x, double y) { return std::sin(kPi * x) * std::sin(kPi * y); };
    const auto f0 = GridField::sample(g, [&](double x, double y) {
        const double u = exact(x, y);
        return 2.0 * kPi * kPi * u + std::expm1(u);
    });
    ProblemSpec spec{g, PointSet::make(g, {{0.5, 0.5}}), f0, GridField(g), 1.0};
    const auto sol = solve_state(spec, ControlVector{0.0});
    EXPECT_TRUE(sol.report.converged);
    double err = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        const Point2 p = g.node(k);
        err = std::max(err, std::abs(sol.y[k] - exact(p.x, p.y)));
    }
    return err;
}

TEST(ControlVector, Helpers) {
    const ControlVector eta{1.5, -2.0, 0.5};
    EXPECT_DOUBLE_EQ(eta.max(), 1.5);
    EXPECT_DOUBLE_EQ(eta.l1_norm(), 4.0);
    const auto plus = eta.positive_part(), minus = eta.negative_part();
    for (std::size_t i = 0; i < eta.size(); ++i) {
        EXPECT_GE(plus[i], 0.0);
        EXPECT_GE(minus[i], 0.0);
        EXPECT_DOUBLE_EQ(plus[i] - minus[i], eta[i]);
    }
}

TEST(ContinuationSchedule, Examples) {
    EXPECT_EQ(continuation_schedule(ControlVector{kPi}), std::vector<double>{1.0});
    EXPECT_EQ(continuation_schedule(ControlVector{2.0 * kPi, -9.0}), std::vector<double>{1.0});
    const auto four = continuation_schedule(ControlVector{4.0 * kPi, 0.0});
    ASSERT_EQ(four.size(), 4u);
    for (std::size_t s = 0; s < 4; ++s) EXPECT_DOUBLE_EQ(four[s], 0.25 * static_cast<double>(s + 1));
    const auto two_half = continuation_schedule(ControlVector{2.5 * kPi});
    ASSERT_EQ(two_half.size(), 3u);
    EXPECT_DOUBLE_EQ(two_half[0], 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(two_half[1], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(two_half[2], 1.0);
}

TEST(ContinuationSchedule, StepsNeverExceedPi) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(2.0 * kPi + 1e-9, 20.0 * kPi);
    for (int t = 0; t < 200; ++t) {
        const ControlVector eta{u(rng)};
        const auto s = continuation_schedule(eta);
        EXPECT_DOUBLE_EQ(s.back(), 1.0);
        double prev = 0.0;
        for (double f : s) {
            EXPECT_GT(f, prev);
            EXPECT_LE((f - prev) * eta.max(), kPi * (1.0 + 1e-12));
            prev = f;
        }
    }
}

TEST(SolveState, TrivialRoot) {
    const auto spec = make_spec(129, {{0.5, 0.5}});
    const auto sol = solve_state(spec, ControlVector{0.0});
    EXPECT_TRUE(sol.report.converged);
    EXPECT_LE(sol.report.iterations, 2u);
    EXPECT_LE(sol.y.max_abs(), 1e-12);
    EXPECT_FALSE(sol.report.above_threshold);
}

TEST(SolveState, ManufacturedSolutionIsSecondOrder) {
    const double ratio = manufactured_error(65) / manufactured_error(129);
    EXPECT_GE(ratio, 3.6);
    EXPECT_LE(ratio, 4.4);
}

TEST(SolveState, ConvergedResidualMeetsTolerance) {
    const auto spec = make_spec(65, {{0.3, 0.4}, {0.7, 0.6}});
    const ControlVector eta{3.0 * kPi, -5.0};
    NewtonOptions opts;
    opts.tol = 1e-11;
    const auto sol = solve_state(spec, eta, opts);
    ASSERT_TRUE(sol.report.converged);
    EXPECT_EQ(sol.report.stages, 3u);
    EXPECT_LE(sol.report.final_residual, 1e-11);
    EXPECT_LE(residual(spec, eta, sol.y), 1e-11);
    EXPECT_TRUE(sol.y.boundary_is_zero());
}

TEST(SolveState, AboveThresholdIsFlaggedButSolved) {
    const auto spec = make_spec(65, {{0.5, 0.5}});
    const auto sol = solve_state(spec, ControlVector{4.5 * kPi});
    EXPECT_TRUE(sol.report.above_threshold);
    EXPECT_TRUE(sol.report.converged);
    EXPECT_FALSE(solve_state(spec, ControlVector{4.0 * kPi}).report.above_threshold);
}

TEST(SolveState, WarmStartConvergesQuickly) {
    const auto spec = make_spec(65, {{0.3, 0.4}, {0.7, 0.6}});
    const auto cold = solve_state(spec, ControlVector{2.0, -1.0});
    const auto warm = solve_state(spec, ControlVector{2.01, -1.0}, {}, &cold.y);
    ASSERT_TRUE(warm.report.converged);
    EXPECT_LT(warm.report.iterations, cold.report.iterations);
    EXPECT_EQ(warm.report.stages, 1u);
}

TEST(SolveState, ReportsNonConvergence) {
    const auto spec = make_spec(65, {{0.5, 0.5}});
    NewtonOptions opts;
    opts.max_newton = 1;
    const auto sol = solve_state(spec, ControlVector{3.0 * kPi}, opts);
    EXPECT_FALSE(sol.report.converged);
    for (double v : sol.y.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(SolveState, RejectsMismatchedControl) {
    const auto spec = make_spec(33, {{0.5, 0.5}});
    EXPECT_THROW(solve_state(spec, ControlVector{1.0, 2.0}), InvalidInput);
}

TEST(Residual, Examples) {
    const auto spec = make_spec(33, {{0.5, 0.5}});
    const auto& g = spec.grid;
    EXPECT_EQ(residual(spec, ControlVector{0.0}, GridField(g)), 0.0);
    // Constant y: the stencil part vanishes and the defect is e - 1 everywhere.
    const auto ones = GridField::sample(g, [](double, double) { return 1.0; });
    EXPECT_NEAR(residual(spec, ControlVector{0.0}, ones), std::expm1(1.0), 1e-12);
}

TEST(Properties, ComparisonPrinciple) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-2.0 * kPi, 2.5 * kPi), bump(0.0, 2.0);
    const auto spec = make_spec(65, {{0.3, 0.3}, {0.6, 0.7}, {0.75, 0.35}});
    for (int t = 0; t < 5; ++t) {
        const ControlVector low{u(rng), u(rng), u(rng)};
        const ControlVector high{low[0] + bump(rng), low[1] + bump(rng), low[2] + bump(rng)};
        const auto a = solve_state(spec, low), b = solve_state(spec, high);
        ASSERT_TRUE(a.report.converged && b.report.converged);
        for (std::size_t k = 0; k < a.y.size(); ++k) EXPECT_LE(a.y[k], b.y[k] + 1e-10);
    }
}

TEST(Properties, NonpositiveControlsGiveNonpositiveState) {
    const auto spec = make_spec(65, {{0.3, 0.3}, {0.6, 0.7}});
    const auto sol = solve_state(spec, ControlVector{-7.0, -0.5});
    ASSERT_TRUE(sol.report.converged);
    for (double v : sol.y.values()) {
        EXPECT_LE(v, 1e-10);
        EXPECT_LE(std::exp(v), 1.0 + 1e-9);
    }
}

TEST(Properties, LipschitzStabilityInL2) {
    // Monotonicity bounds |y_w - y_e| by the Poisson potential of |w - e|, so
    // the constant is fitted on the linear single-atom instances.
    const auto spec = make_spec(65, {{0.3, 0.3}, {0.6, 0.7}, {0.75, 0.35}});
    double c_fit = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        std::vector<double> unit(3, 0.0);
        unit[i] = 1.0;
        c_fit = std::max(c_fit, lp_norm(poisson_potential(spec.grid, spec.points,
                                                          ControlVector(unit)), 2.0));
    }
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> u(-2.0 * kPi, 2.0 * kPi);
    for (int t = 0; t < 10; ++t) {
        const ControlVector a{u(rng), u(rng), u(rng)}, b{u(rng), u(rng), u(rng)};
        const auto ya = solve_state(spec, a), yb = solve_state(spec, b);
        std::vector<double> diff(ya.y.size());
        double dl1 = 0.0;
        for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = ya.y[k] - yb.y[k];
        for (std::size_t i = 0; i < 3; ++i) dl1 += std::abs(a[i] - b[i]);
        EXPECT_LE(lp_norm(GridField(spec.grid, diff), 2.0), 1.2 * c_fit * dl1);
    }
}

TEST(Properties, ExponentialL1Contraction) {
    std::mt19937_64 rng(44);
    std::uniform_real_distribution<double> u(-3.0 * kPi, 3.0 * kPi);
    const auto spec = make_spec(65, {{0.3, 0.3}, {0.6, 0.7}});
    for (int t = 0; t < 5; ++t) {
        const ControlVector a{u(rng), u(rng)}, b{u(rng), u(rng)};
        const auto ya = solve_state(spec, a), yb = solve_state(spec, b);
        std::vector<double> diff(ya.y.size());
        for (std::size_t k = 0; k < diff.size(); ++k)
            diff[k] = std::abs(std::exp(ya.y[k]) - std::exp(yb.y[k]));
        const double dl1 = std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]);
        EXPECT_LE(integrate(spec.grid, diff), 1.02 * dl1);
    }
}

TEST(NewtonReport, SerializesToJson) {
    const auto spec = make_spec(17, {{0.5, 0.5}});
    const nlohmann::json j = solve_state(spec, ControlVector{1.0}).report;
    EXPECT_TRUE(j.at("converged").get<bool>());
    EXPECT_FALSE(j.at("above_threshold").get<bool>());
    EXPECT_TRUE(j.at("residual_history").is_array());
}

} // namespace
} // namespace diracctl
