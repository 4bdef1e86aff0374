#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diracctl/errors.hpp"
#include "diracctl/mesh.hpp"
#include "diracctl/state.hpp"

namespace diracctl {

struct GaussianTerm {
    Point2 center;
    double amplitude = 0.0;
    double width = 1.0;
};

/// Source description for f0 and y_d.
///   constant:     value
///   gaussian_sum: sum_k amplitude_k exp(-|x - c_k|^2 / (2 width_k^2))
///   file:         x,y,value CSV on the run grid
struct FieldSpec {
    enum class Kind { constant, gaussian_sum, file };
    Kind kind = Kind::constant;
    double value = 0.0;
    std::vector<GaussianTerm> terms;
    std::string path;

    static FieldSpec constant(double v) { return FieldSpec{Kind::constant, v, {}, {}}; }

    bool is_zero() const { return kind == Kind::constant && value == 0.0; }

    GridField materialize(const DomainGrid& grid) const {
        switch (kind) {
        case Kind::constant:
            return GridField::sample(grid, [v = value](double, double) { return v; });
        case Kind::gaussian_sum:
            return GridField::sample(grid, [this](double x, double y) {
                double s = 0.0;
                for (const auto& t : terms) {
                    const double dx = x - t.center.x, dy = y - t.center.y;
                    s += t.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * t.width * t.width));
                }
                return s;
            });
        case Kind::file:
            return read_csv(grid, path);
        }
        throw InvalidInput("unknown field kind");
    }
};

/// Parsed problem file, kept resolution-independent so it can be rebuilt
/// on other grids.
struct ProblemDocument {
    Rect bounds;
    std::size_t n = 0;
    std::vector<Point2> points;
    FieldSpec f0;
    FieldSpec y_d;
    double kappa = 1.0;
    std::optional<ControlVector> eta;

    ProblemSpec materialize(std::optional<std::size_t> grid_n = std::nullopt) const {
        const auto grid = DomainGrid::build(bounds, grid_n.value_or(n));
        ProblemSpec spec{grid, PointSet::make(grid, points), f0.materialize(grid),
                         y_d.materialize(grid), kappa};
        spec.validate();
        return spec;
    }
};

namespace detail {

using nlohmann::json;

[[noreturn]] inline void schema_error(const std::string& path, const std::string& what) {
    throw InvalidInput(path + ": " + what);
}

inline const json& member(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) schema_error(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) schema_error(path + "." + key, "missing required key");
    return *it;
}

inline double number(const json& j, const std::string& path) {
    if (!j.is_number()) schema_error(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) schema_error(path, "expected a finite number");
    return v;
}

inline Point2 point(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2) schema_error(path, "expected [x, y]");
    return {number(j[0], path + "[0]"), number(j[1], path + "[1]")};
}

inline FieldSpec field_spec(const json& j, const std::string& path,
                            const std::filesystem::path& base) {
    if (j.is_number()) return FieldSpec::constant(number(j, path));
    const json& kind = member(j, "kind", path);
    if (!kind.is_string()) schema_error(path + ".kind", "expected a string");
    const auto k = kind.get<std::string>();
    FieldSpec spec;
    if (k == "constant") {
        spec.kind = FieldSpec::Kind::constant;
        spec.value = number(member(j, "value", path), path + ".value");
    } else if (k == "gaussian_sum") {
        spec.kind = FieldSpec::Kind::gaussian_sum;
        const json& terms = member(j, "terms", path);
        if (!terms.is_array()) schema_error(path + ".terms", "expected an array");
        for (std::size_t t = 0; t < terms.size(); ++t) {
            const std::string tp = path + ".terms[" + std::to_string(t) + "]";
            GaussianTerm term{point(member(terms[t], "center", tp), tp + ".center"),
                              number(member(terms[t], "amplitude", tp), tp + ".amplitude"),
                              number(member(terms[t], "width", tp), tp + ".width")};
            if (!(term.width > 0.0)) schema_error(tp + ".width", "width must be positive");
            spec.terms.push_back(term);
        }
    } else if (k == "file") {
        spec.kind = FieldSpec::Kind::file;
        const json& p = member(j, "path", path);
        if (!p.is_string()) schema_error(path + ".path", "expected a string");
        std::filesystem::path file(p.get<std::string>());
        if (file.is_relative()) file = base / file;
        if (!std::filesystem::exists(file)) schema_error(path + ".path", "file does not exist: " + file.string());
        spec.path = file.string();
    } else {
        schema_error(path + ".kind", "unknown field kind '" + k + "'");
    }
    return spec;
}

} // namespace detail

/// Validates a problem document. Relative file paths resolve against `base`.
inline ProblemDocument parse_problem_json(const nlohmann::json& doc,
                                          const std::filesystem::path& base = ".") {
    using detail::member;
    using detail::number;
    using detail::schema_error;
    ProblemDocument out;

    const auto& bounds = member(member(doc, "domain", "$"), "bounds", "$.domain");
    if (!bounds.is_array() || bounds.size() != 4)
        schema_error("$.domain.bounds", "expected [x_min, x_max, y_min, y_max]");
    out.bounds = {number(bounds[0], "$.domain.bounds[0]"), number(bounds[1], "$.domain.bounds[1]"),
                  number(bounds[2], "$.domain.bounds[2]"), number(bounds[3], "$.domain.bounds[3]")};

    const auto& n = member(member(doc, "grid", "$"), "n", "$.grid");
    if (!n.is_number_integer() || n.get<long long>() < 5)
        schema_error("$.grid.n", "expected an integer >= 5");
    out.n = n.get<std::size_t>();

    const auto& points = member(doc, "points", "$");
    if (!points.is_array() || points.empty())
        schema_error("$.points", "expected a nonempty array of [x, y]");
    for (std::size_t i = 0; i < points.size(); ++i)
        out.points.push_back(detail::point(points[i], "$.points[" + std::to_string(i) + "]"));

    out.f0 = detail::field_spec(member(doc, "f0", "$"), "$.f0", base);
    out.y_d = detail::field_spec(member(doc, "y_d", "$"), "$.y_d", base);
    out.kappa = number(member(doc, "kappa", "$"), "$.kappa");
    if (!(out.kappa > 0.0)) schema_error("$.kappa", "kappa must be > 0");

    if (doc.contains("eta")) {
        const auto& eta = doc["eta"];
        if (!eta.is_array() || eta.size() != out.points.size())
            schema_error("$.eta", "expected one mass per point");
        std::vector<double> masses;
        for (std::size_t i = 0; i < eta.size(); ++i)
            masses.push_back(number(eta[i], "$.eta[" + std::to_string(i) + "]"));
        out.eta = ControlVector(std::move(masses));
    }

    // Point placement against the declared grid.
    const auto grid = DomainGrid::build(out.bounds, out.n);
    for (std::size_t i = 0; i < out.points.size(); ++i) {
        if (grid.distance_to_boundary(out.points[i]) <= 2.0 * grid.h())
            schema_error("$.points[" + std::to_string(i) + "]",
                         "point must lie more than 2h inside the domain");
        for (std::size_t j = 0; j < i; ++j)
            if (out.points[i] == out.points[j])
                schema_error("$.points[" + std::to_string(i) + "]",
                             "duplicates point " + std::to_string(j));
    }
    return out;
}

inline ProblemDocument load_problem(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open problem file '" + path + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidInput("$: invalid JSON: " + std::string(e.what()));
    }
    return parse_problem_json(doc, std::filesystem::path(path).parent_path());
}

/// Reads and fully materializes a problem file.
inline ProblemSpec parse_problem(const std::string& path) { return load_problem(path).materialize(); }

} // namespace diracctl
