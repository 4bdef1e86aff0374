#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "diracctl/errors.hpp"
#include "diracctl/format.hpp"

namespace diracctl {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct Rect {
    double x_min = 0.0;
    double x_max = 1.0;
    double y_min = 0.0;
    double y_max = 1.0;

    friend bool operator==(const Rect&, const Rect&) = default;
};

/// Uniform n-by-n node lattice on a rectangle with square cells.
/// Node (i, j) sits at (x_min + i h, y_min + j h) and is stored at j n + i.
class DomainGrid {
public:
    static DomainGrid build(const Rect& bounds, std::size_t n) {
        require(n >= 5, "grid needs at least 5 nodes per side, got " + std::to_string(n));
        require(bounds.x_max > bounds.x_min && bounds.y_max > bounds.y_min,
                "domain bounds must satisfy min < max");
        const double h = (bounds.x_max - bounds.x_min) / static_cast<double>(n - 1);
        const double hy = (bounds.y_max - bounds.y_min) / static_cast<double>(n - 1);
        require(std::abs(hy - h) <= 1e-12 * h, "grid cells must be square: hx=" + format_double(h) +
                                                   " hy=" + format_double(hy));
        return DomainGrid(bounds, n, h);
    }

    const Rect& bounds() const noexcept { return bounds_; }
    std::size_t n() const noexcept { return n_; }
    std::size_t size() const noexcept { return n_ * n_; }
    double h() const noexcept { return h_; }
    double cell_area() const noexcept { return h_ * h_; }
    double area() const noexcept {
        return (bounds_.x_max - bounds_.x_min) * (bounds_.y_max - bounds_.y_min);
    }
    /// Half the diameter of the rectangle.
    double radius() const noexcept {
        return 0.5 * std::hypot(bounds_.x_max - bounds_.x_min, bounds_.y_max - bounds_.y_min);
    }

    std::size_t index(std::size_t i, std::size_t j) const noexcept { return j * n_ + i; }
    Point2 node(std::size_t i, std::size_t j) const noexcept {
        return {bounds_.x_min + static_cast<double>(i) * h_,
                bounds_.y_min + static_cast<double>(j) * h_};
    }
    Point2 node(std::size_t idx) const noexcept { return node(idx % n_, idx / n_); }

    bool is_boundary(std::size_t i, std::size_t j) const noexcept {
        return i == 0 || j == 0 || i + 1 == n_ || j + 1 == n_;
    }
    bool is_boundary(std::size_t idx) const noexcept { return is_boundary(idx % n_, idx / n_); }

    bool contains(Point2 p) const noexcept {
        return p.x >= bounds_.x_min && p.x <= bounds_.x_max && p.y >= bounds_.y_min &&
               p.y <= bounds_.y_max;
    }
    double distance_to_boundary(Point2 p) const noexcept {
        return std::min({p.x - bounds_.x_min, bounds_.x_max - p.x, p.y - bounds_.y_min,
                         bounds_.y_max - p.y});
    }

    /// Trapezoidal quadrature weight of a node.
    double weight(std::size_t i, std::size_t j) const noexcept {
        double w = cell_area();
        if (i == 0 || i + 1 == n_) w *= 0.5;
        if (j == 0 || j + 1 == n_) w *= 0.5;
        return w;
    }

    friend bool operator==(const DomainGrid&, const DomainGrid&) = default;

private:
    DomainGrid(const Rect& bounds, std::size_t n, double h) : bounds_(bounds), n_(n), h_(h) {}

    Rect bounds_;
    std::size_t n_;
    double h_;
};

/// Real values on every node of a grid, row-major.
class GridField {
public:
    explicit GridField(const DomainGrid& grid) : grid_(grid), values_(grid.size(), 0.0) {}

    GridField(const DomainGrid& grid, std::vector<double> values)
        : grid_(grid), values_(std::move(values)) {
        require(values_.size() == grid_.size(), "field length does not match grid");
        for (double v : values_) require(std::isfinite(v), "field values must be finite");
    }

    template <typename Fn>
    static GridField sample(const DomainGrid& grid, Fn&& fn) {
        std::vector<double> values(grid.size());
        for (std::size_t j = 0; j < grid.n(); ++j)
            for (std::size_t i = 0; i < grid.n(); ++i) {
                const Point2 p = grid.node(i, j);
                values[grid.index(i, j)] = fn(p.x, p.y);
            }
        return GridField(grid, std::move(values));
    }

    /// Like sample(), but boundary nodes are set to zero.
    template <typename Fn>
    static GridField sample_dirichlet(const DomainGrid& grid, Fn&& fn) {
        GridField f = sample(grid, std::forward<Fn>(fn));
        f.zero_boundary();
        return f;
    }

    const DomainGrid& grid() const noexcept { return grid_; }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t idx) const noexcept { return values_[idx]; }
    double at(std::size_t i, std::size_t j) const noexcept { return values_[grid_.index(i, j)]; }
    std::size_t size() const noexcept { return values_.size(); }

    bool boundary_is_zero() const noexcept {
        const std::size_t n = grid_.n();
        for (std::size_t k = 0; k < n; ++k) {
            if (values_[grid_.index(k, 0)] != 0.0 || values_[grid_.index(k, n - 1)] != 0.0 ||
                values_[grid_.index(0, k)] != 0.0 || values_[grid_.index(n - 1, k)] != 0.0)
                return false;
        }
        return true;
    }

    double max_abs() const noexcept {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

    std::vector<double> release() && { return std::move(values_); }

private:
    void zero_boundary() {
        const std::size_t n = grid_.n();
        for (std::size_t k = 0; k < n; ++k) {
            values_[grid_.index(k, 0)] = 0.0;
            values_[grid_.index(k, n - 1)] = 0.0;
            values_[grid_.index(0, k)] = 0.0;
            values_[grid_.index(n - 1, k)] = 0.0;
        }
    }

    DomainGrid grid_;
    std::vector<double> values_;
};

inline void require_same_grid(const GridField& a, const GridField& b) {
    require(a.grid() == b.grid(), "fields live on different grids");
}

/// Distinct interior atom locations together with their separation radius.
class PointSet {
public:
    static PointSet make(const DomainGrid& grid, std::vector<Point2> points) {
        require(!points.empty(), "point set must contain at least one point");
        const double margin = 2.0 * grid.h();
        for (std::size_t i = 0; i < points.size(); ++i) {
            require(std::isfinite(points[i].x) && std::isfinite(points[i].y),
                    "point " + std::to_string(i) + " has non-finite coordinates");
            require(grid.distance_to_boundary(points[i]) > margin,
                    "point " + std::to_string(i) + " (" + format_double(points[i].x) + ", " +
                        format_double(points[i].y) + ") is not more than 2h from the boundary");
        }
        double r0 = grid.distance_to_boundary(points[0]);
        for (std::size_t i = 0; i < points.size(); ++i) {
            r0 = std::min(r0, grid.distance_to_boundary(points[i]));
            for (std::size_t j = i + 1; j < points.size(); ++j) {
                const double d = distance(points[i], points[j]);
                require(d > 0.0, "points " + std::to_string(i) + " and " + std::to_string(j) +
                                     " coincide");
                r0 = std::min(r0, 0.5 * d);
            }
        }
        return PointSet(std::move(points), r0);
    }

    std::span<const Point2> points() const noexcept { return points_; }
    const Point2& operator[](std::size_t i) const noexcept { return points_[i]; }
    std::size_t size() const noexcept { return points_.size(); }
    double r0() const noexcept { return r0_; }

private:
    PointSet(std::vector<Point2> points, double r0) : points_(std::move(points)), r0_(r0) {}

    std::vector<Point2> points_;
    double r0_;
};

/// Bilinear allocation of a unit point mass onto the corners of its cell.
/// weights carry units of 1/area so that sum(weight * h^2) == 1.
struct DiracDiscretization {
    std::array<std::size_t, 4> nodes{};
    std::array<double, 4> weights{};
    std::size_t count = 0;
};

namespace detail {

struct CellCoordinates {
    std::size_t i = 0;
    std::size_t j = 0;
    double s = 0.0;
    double t = 0.0;
};

inline CellCoordinates locate(const DomainGrid& grid, Point2 p) {
    const double u = (p.x - grid.bounds().x_min) / grid.h();
    const double v = (p.y - grid.bounds().y_min) / grid.h();
    const auto last_cell = static_cast<double>(grid.n() - 2);
    const double fi = std::clamp(std::floor(u), 0.0, last_cell);
    const double fj = std::clamp(std::floor(v), 0.0, last_cell);
    return {static_cast<std::size_t>(fi), static_cast<std::size_t>(fj),
            std::clamp(u - fi, 0.0, 1.0), std::clamp(v - fj, 0.0, 1.0)};
}

} // namespace detail

inline DiracDiscretization dirac_stencil(const DomainGrid& grid, Point2 point) {
    require(grid.distance_to_boundary(point) > 2.0 * grid.h(),
            "Dirac point must lie more than 2h inside the domain");
    const auto c = detail::locate(grid, point);
    const std::array<std::size_t, 4> corners{grid.index(c.i, c.j), grid.index(c.i + 1, c.j),
                                             grid.index(c.i, c.j + 1),
                                             grid.index(c.i + 1, c.j + 1)};
    const std::array<double, 4> shares{(1 - c.s) * (1 - c.t), c.s * (1 - c.t), (1 - c.s) * c.t,
                                       c.s * c.t};
    DiracDiscretization d;
    for (std::size_t k = 0; k < 4; ++k) {
        if (shares[k] == 0.0) continue;
        d.nodes[d.count] = corners[k];
        d.weights[d.count] = shares[k] / grid.cell_area();
        ++d.count;
    }
    return d;
}

/// Adds mass * delta_h(point) into a raw node array.
inline void add_dirac(const DomainGrid& grid, Point2 point, double mass, std::span<double> out) {
    const auto d = dirac_stencil(grid, point);
    for (std::size_t k = 0; k < d.count; ++k) out[d.nodes[k]] += mass * d.weights[k];
}

inline GridField discretize_dirac(const DomainGrid& grid, Point2 point, double mass) {
    std::vector<double> values(grid.size(), 0.0);
    add_dirac(grid, point, mass, values);
    return GridField(grid, std::move(values));
}

/// Trapezoidal (mass-lumped) quadrature over raw node values.
inline double integrate(const DomainGrid& grid, std::span<const double> values) {
    const std::size_t n = grid.n();
    double interior = 0.0;
    double edges = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const bool row_edge = j == 0 || j + 1 == n;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = values[grid.index(i, j)];
            const bool col_edge = i == 0 || i + 1 == n;
            if (!row_edge && !col_edge)
                interior += v;
            else if (row_edge && col_edge)
                edges += 0.25 * v;
            else
                edges += 0.5 * v;
        }
    }
    return (interior + edges) * grid.cell_area();
}

inline double integrate(const GridField& field) { return integrate(field.grid(), field.values()); }

inline double lp_norm(const GridField& field, double p) {
    require(p >= 1.0, "lp_norm needs p >= 1");
    std::vector<double> powered(field.size());
    std::transform(field.values().begin(), field.values().end(), powered.begin(),
                   [p](double v) { return std::pow(std::abs(v), p); });
    return std::pow(integrate(field.grid(), powered), 1.0 / p);
}

inline double point_eval(const DomainGrid& grid, std::span<const double> values, Point2 x) {
    require(grid.contains(x), "point_eval outside the domain");
    const auto c = detail::locate(grid, x);
    const double v00 = values[grid.index(c.i, c.j)];
    const double v10 = values[grid.index(c.i + 1, c.j)];
    const double v01 = values[grid.index(c.i, c.j + 1)];
    const double v11 = values[grid.index(c.i + 1, c.j + 1)];
    return (1 - c.s) * (1 - c.t) * v00 + c.s * (1 - c.t) * v10 + (1 - c.s) * c.t * v01 +
           c.s * c.t * v11;
}

inline double point_eval(const GridField& field, Point2 x) {
    return point_eval(field.grid(), field.values(), x);
}

/// Average of the interpolant over `samples` equispaced angles on each circle.
inline std::vector<double> angular_mean(const GridField& field, Point2 center,
                                        std::span<const double> radii, std::size_t samples = 64) {
    require(samples >= 3, "angular_mean needs at least 3 samples");
    const DomainGrid& grid = field.grid();
    std::vector<double> means;
    means.reserve(radii.size());
    for (double r : radii) {
        require(r > 0.0 && grid.distance_to_boundary(center) >= r,
                "circle of radius " + format_double(r) + " leaves the domain");
        double sum = 0.0;
        for (std::size_t m = 0; m < samples; ++m) {
            const double theta = 2.0 * std::numbers::pi * static_cast<double>(m) /
                                 static_cast<double>(samples);
            sum += point_eval(field, {center.x + r * std::cos(theta), center.y + r * std::sin(theta)});
        }
        means.push_back(sum / static_cast<double>(samples));
    }
    return means;
}

inline void write_csv(const GridField& field, std::ostream& os) {
    const DomainGrid& grid = field.grid();
    os << "x,y,value\n";
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
        const Point2 p = grid.node(idx);
        os << format_double(p.x) << ',' << format_double(p.y) << ',' << format_double(field[idx])
           << '\n';
    }
}

/// Reads an `x,y,value` snapshot; every node of `grid` must appear exactly once.
inline GridField read_csv(const DomainGrid& grid, std::istream& is) {
    std::string line;
    require(static_cast<bool>(std::getline(is, line)), "field CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    require(line == "x,y,value", "field CSV must start with header 'x,y,value'");
    std::vector<double> values(grid.size(), 0.0);
    std::vector<char> seen(grid.size(), 0);
    const double tol = 1e-9 * grid.h();
    std::size_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        std::array<double, 3> cols{};
        std::size_t start = 0;
        for (std::size_t c = 0; c < 3; ++c) {
            const std::size_t comma = c < 2 ? line.find(',', start) : line.size();
            require(comma != std::string::npos &&
                        parse_double(std::string_view(line).substr(start, comma - start), cols[c]),
                    "field CSV row " + std::to_string(row) + " is malformed");
            start = comma + 1;
        }
        const double u = (cols[0] - grid.bounds().x_min) / grid.h();
        const double v = (cols[1] - grid.bounds().y_min) / grid.h();
        const double ui = std::round(u);
        const double vi = std::round(v);
        require(ui >= 0 && vi >= 0 && ui < static_cast<double>(grid.n()) &&
                    vi < static_cast<double>(grid.n()) && std::abs(u - ui) * grid.h() <= tol &&
                    std::abs(v - vi) * grid.h() <= tol,
                "field CSV row " + std::to_string(row) + " is not a node of the run grid");
        const std::size_t idx = grid.index(static_cast<std::size_t>(ui), static_cast<std::size_t>(vi));
        require(!seen[idx], "field CSV row " + std::to_string(row) + " repeats a node");
        seen[idx] = 1;
        values[idx] = cols[2];
    }
    require(std::all_of(seen.begin(), seen.end(), [](char s) { return s != 0; }),
            "field CSV does not cover every node of the run grid");
    return GridField(grid, std::move(values));
}

inline GridField read_csv(const DomainGrid& grid, const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open field CSV '" + path + "'");
    return read_csv(grid, in);
}

} // namespace diracctl
