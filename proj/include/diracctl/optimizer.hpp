#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diracctl/adjoint.hpp"
#include "diracctl/state.hpp"

namespace diracctl {

/// Reduced objective 1/2 |S(eta) - y_d|^2 + kappa |eta|_1.
inline double objective(const ProblemSpec& spec, const ControlVector& eta,
                        const NewtonOptions& opts = {}) {
    require(eta.size() == spec.points.size(), "control length does not match point count");
    require(eta.max() <= kCriticalMass, "objective is undefined for eta_max > 4 pi");
    const auto state = solve_state(spec, eta, opts);
    if (!state.report.converged)
        throw SolverFailure("objective: state solve did not converge");
    return tracking_term(state.y, spec.y_d) + spec.kappa * eta.l1_norm();
}

/// Componentwise soft threshold sign(v) max(|v| - lambda, 0).
inline std::vector<double> prox_l1(std::span<const double> v, double lambda) {
    require(lambda >= 0.0, "prox_l1 needs lambda >= 0");
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double shrunk = std::abs(v[i]) - lambda;
        out[i] = shrunk > 0.0 ? std::copysign(shrunk, v[i]) : 0.0;
    }
    return out;
}

struct BoxBounds {
    ControlVector lower;
    ControlVector upper;

    void validate() const {
        require(lower.size() == upper.size(), "box bounds have different lengths");
        for (std::size_t i = 0; i < lower.size(); ++i)
            require(lower[i] < upper[i], "box bound " + std::to_string(i) + " is empty");
    }
    bool contains(const ControlVector& eta) const {
        if (eta.size() != lower.size()) return false;
        for (std::size_t i = 0; i < eta.size(); ++i)
            if (eta[i] < lower[i] || eta[i] > upper[i]) return false;
        return true;
    }
};

inline ControlVector project_box(const ControlVector& eta, const BoxBounds& box) {
    box.validate();
    require(eta.size() == box.lower.size(), "control length does not match box");
    std::vector<double> out(eta.size());
    for (std::size_t i = 0; i < eta.size(); ++i)
        out[i] = std::clamp(eta[i], box.lower[i], box.upper[i]);
    return ControlVector(std::move(out));
}

/// Box [-A, min(cap_i, 4 pi - eps)] for every atom.
inline BoxBounds build_default_box(std::size_t k, double eps,
                                   const std::optional<ControlVector>& user_caps, double A) {
    require(eps > 0.0 && eps < kCriticalMass, "eps must lie in (0, 4 pi)");
    require(A > 0.0, "lower-bound magnitude A must be positive");
    if (user_caps) require(user_caps->size() == k, "user caps length does not match point count");
    std::vector<double> lower(k, -A), upper(k, kCriticalMass - eps);
    if (user_caps)
        for (std::size_t i = 0; i < k; ++i) upper[i] = std::min(upper[i], (*user_caps)[i]);
    BoxBounds box{ControlVector(std::move(lower)), ControlVector(std::move(upper))};
    box.validate();
    return box;
}

struct ProxGradientOptions {
    /// Initial trial step s.
    double step = 1.0;
    /// Factor applied to the accepted step before the next iteration.
    double step_growth = 2.0;
    std::size_t max_halvings = 30;
    double inner_tol = 1e-8;
    std::size_t max_iter = 500;
    GradientOptions gradient{};
};

struct IterateRecord {
    std::size_t stage = 0;
    std::size_t iteration = 0;
    double objective = 0.0;
    double step = 0.0;
    double delta_inf = 0.0;
    ControlVector eta;
};

struct RegularizedResult {
    ControlVector eta;
    std::vector<IterateRecord> log;
    bool converged = false;
    /// Set when the iteration ended early because a state or adjoint solve failed.
    std::optional<std::string> failure;
};

/// Projected proximal gradient with backtracking for
/// min T(eta) + kappa |eta|_1 over the box.
inline RegularizedResult solve_regularized(const ProblemSpec& spec, const BoxBounds& box,
                                           const ControlVector& init,
                                           const ProxGradientOptions& opts = {},
                                           std::size_t stage = 0) {
    box.validate();
    require(box.lower.size() == spec.points.size(), "box length does not match point count");
    require(box.upper.max() < kCriticalMass, "box upper bounds must stay below 4 pi");
    require(box.contains(init), "initial control lies outside the box");
    require(opts.step > 0.0 && opts.step_growth >= 1.0, "invalid step-size options");

    RegularizedResult result{init, {}, false, std::nullopt};
    std::optional<GradientEvaluation> current;
    try {
        current = evaluate_gradient(spec, init, opts.gradient);
    } catch (const std::exception& e) {
        result.failure = std::string("initial evaluation: ") + e.what();
        return result;
    }
    double value = tracking_term(current->state.y, spec.y_d) + spec.kappa * init.l1_norm();
    result.log.push_back({stage, 0, value, 0.0, 0.0, init});

    double step = opts.step;
    for (std::size_t it = 1; it <= opts.max_iter; ++it) {
        const ControlVector& eta = result.eta;
        std::vector<double> moved(eta.size());
        bool accepted = false;
        ControlVector candidate;
        std::optional<StateSolution> candidate_state;
        double candidate_value = value;
        double delta = 0.0;
        for (std::size_t halving = 0; halving <= opts.max_halvings; ++halving) {
            for (std::size_t i = 0; i < eta.size(); ++i)
                moved[i] = eta[i] - step * current->gradient[i];
            candidate = project_box(ControlVector(prox_l1(moved, step * spec.kappa)), box);
            delta = 0.0;
            for (std::size_t i = 0; i < eta.size(); ++i)
                delta = std::max(delta, std::abs(candidate[i] - eta[i]));
            if (delta == 0.0) {
                result.converged = true;
                return result;
            }
            auto trial = solve_state(spec, candidate, opts.gradient.newton, &current->state.y);
            if (!trial.report.converged) {
                result.failure = "state solve failed at iteration " + std::to_string(it);
                return result;
            }
            const double trial_value =
                tracking_term(trial.y, spec.y_d) + spec.kappa * candidate.l1_norm();
            const bool decreased = trial_value < value;
            const bool final_step =
                halving == 0 && delta < opts.inner_tol && trial_value <= value + 1e-12;
            if (decreased || final_step) {
                accepted = true;
                candidate_state = std::move(trial);
                candidate_value = trial_value;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        try {
            GridField phi = solve_adjoint(spec.grid, candidate_state->y, spec.y_d,
                                          opts.gradient.adjoint);
            GradientVector g = point_values(phi, spec.points);
            current = GradientEvaluation{std::move(*candidate_state), std::move(phi), std::move(g)};
        } catch (const std::exception& e) {
            result.failure = "adjoint solve failed at iteration " + std::to_string(it) + ": " +
                             e.what();
            result.eta = candidate;
            return result;
        }
        result.eta = candidate;
        value = candidate_value;
        result.log.push_back({stage, it, value, step, delta, candidate});
        if (delta < opts.inner_tol) {
            result.converged = true;
            break;
        }
        step *= opts.step_growth;
    }
    return result;
}

struct PathConfig {
    double eps0 = 0.5;
    double factor = 0.5;
    std::size_t stages = 4;
    double lower_bound = 10.0;
    std::optional<ControlVector> user_caps;
    ProxGradientOptions inner{};

    void validate() const {
        require(eps0 > 0.0 && eps0 < kCriticalMass, "eps0 must lie in (0, 4 pi)");
        require(factor > 0.0 && factor < 1.0, "path factor must lie in (0, 1)");
        require(stages >= 1, "path needs at least one stage");
        require(lower_bound > 0.0, "lower-bound magnitude must be positive");
    }
};

struct StageRecord {
    std::size_t stage = 0;
    double eps = 0.0;
    ControlVector eta;
    double objective = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

struct PathResult {
    ControlVector eta;
    std::vector<StageRecord> stages;
    std::vector<IterateRecord> log;
    std::optional<std::string> failure;
};

/// Solves the box-capped problems for eps_j = eps0 factor^j, warm-starting
/// each stage from the previous minimizer.
inline PathResult regularization_path(const ProblemSpec& spec, const PathConfig& cfg,
                                      std::optional<ControlVector> init = std::nullopt) {
    cfg.validate();
    const std::size_t k = spec.points.size();
    PathResult path;
    ControlVector eta = init ? *init : ControlVector::zeros(k);
    double eps = cfg.eps0;
    for (std::size_t j = 0; j < cfg.stages; ++j, eps *= cfg.factor) {
        const BoxBounds box = build_default_box(k, eps, cfg.user_caps, cfg.lower_bound);
        auto stage = solve_regularized(spec, box, project_box(eta, box), cfg.inner, j);
        path.log.insert(path.log.end(), stage.log.begin(), stage.log.end());
        if (stage.failure) {
            path.failure = "stage " + std::to_string(j) + ": " + *stage.failure;
            path.eta = stage.eta;
            return path;
        }
        eta = stage.eta;
        path.stages.push_back({j, eps, eta, stage.log.empty() ? 0.0 : stage.log.back().objective,
                               stage.log.empty() ? 0 : stage.log.back().iteration,
                               stage.converged});
    }
    path.eta = eta;
    return path;
}

inline void write_iterate_csv(const std::vector<IterateRecord>& log, std::ostream& os) {
    os << "stage,iteration,objective,step,delta_inf\n";
    for (const auto& r : log)
        os << r.stage << ',' << r.iteration << ',' << format_double(r.objective) << ','
           << format_double(r.step) << ',' << format_double(r.delta_inf) << '\n';
}

inline void to_json(nlohmann::json& j, const StageRecord& s) {
    j = nlohmann::json{{"stage", s.stage},           {"eps", s.eps},
                       {"eta", s.eta},               {"objective", s.objective},
                       {"iterations", s.iterations}, {"converged", s.converged}};
}

enum class KktClass { interior_positive, interior_negative, zero, capped_4pi, at_box_bound };

inline const char* to_string(KktClass c) {
    switch (c) {
    case KktClass::interior_positive: return "interior_positive";
    case KktClass::interior_negative: return "interior_negative";
    case KktClass::zero: return "zero";
    case KktClass::capped_4pi: return "capped_4pi";
    case KktClass::at_box_bound: return "at_box_bound";
    }
    return "unknown";
}

struct KktEntry {
    std::size_t index = 0;
    double eta = 0.0;
    KktClass kind = KktClass::zero;
    /// -phi(x_i) / kappa
    double value = 0.0;
    bool checked = true;
    double residual = 0.0;
};

struct KktReport {
    std::vector<KktEntry> entries;
    bool all_satisfied = false;
    double max_residual = 0.0;
    std::vector<std::size_t> capped_indices;
};

inline void to_json(nlohmann::json& j, const KktReport& r) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : r.entries) {
        entries.push_back({{"index", e.index},
                           {"eta", e.eta},
                           {"class", to_string(e.kind)},
                           {"value", e.value},
                           {"checked", e.checked},
                           {"residual", e.checked ? nlohmann::json(e.residual) : nlohmann::json()}});
    }
    j = nlohmann::json{{"entries", entries},
                       {"all_satisfied", r.all_satisfied},
                       {"max_residual", r.max_residual},
                       {"capped_indices", r.capped_indices}};
}

/// Classifies each atom and measures the violated part of its sign condition,
/// given the adjoint values phi(x_i). Capped atoms (eta_i = 4 pi) carry no condition.
inline KktReport classify_kkt(const ControlVector& eta, std::span<const double> phi_at_points,
                              double kappa, double tol_class, double tol_res,
                              const BoxBounds* box = nullptr) {
    require(phi_at_points.size() == eta.size(), "adjoint values do not match control length");
    require(kappa > 0.0, "kappa must be positive");
    KktReport report;
    report.all_satisfied = true;
    for (std::size_t i = 0; i < eta.size(); ++i) {
        KktEntry e{i, eta[i], KktClass::zero, -phi_at_points[i] / kappa, true, 0.0};
        const bool on_box = box != nullptr && (std::abs(eta[i] - box->upper[i]) <= tol_class ||
                                               std::abs(eta[i] - box->lower[i]) <= tol_class);
        if (std::abs(eta[i] - kCriticalMass) <= tol_class) {
            e.kind = KktClass::capped_4pi;
            e.checked = false;
            report.capped_indices.push_back(i);
        } else if (std::abs(eta[i]) <= tol_class) {
            e.kind = KktClass::zero;
            e.residual = std::max(std::abs(e.value) - 1.0, 0.0);
        } else if (on_box) {
            e.kind = KktClass::at_box_bound;
            e.residual = eta[i] > 0.0 ? std::max(1.0 - e.value, 0.0) : std::max(e.value + 1.0, 0.0);
        } else if (eta[i] > 0.0) {
            e.kind = KktClass::interior_positive;
            e.residual = std::abs(e.value - 1.0);
        } else {
            e.kind = KktClass::interior_negative;
            e.residual = std::abs(e.value + 1.0);
        }
        if (e.checked) {
            report.max_residual = std::max(report.max_residual, e.residual);
            if (!(e.residual <= tol_res)) report.all_satisfied = false;
        }
        report.entries.push_back(e);
    }
    return report;
}

struct KktOptions {
    double tol_class = 1e-3;
    double tol_res = 1e-2;
    NewtonOptions newton{};
    CgOptions adjoint{};
};

/// Evaluates the first-order system at eta: state, adjoint, then classification.
inline KktReport verify_kkt(const ProblemSpec& spec, const ControlVector& eta,
                            const KktOptions& opts = {}, const BoxBounds* box = nullptr) {
    require(eta.size() == spec.points.size(), "control length does not match point count");
    require(eta.max() <= kCriticalMass, "verify_kkt requires eta_max <= 4 pi");
    const auto state = solve_state(spec, eta, opts.newton);
    if (!state.report.converged) throw SolverFailure("verify_kkt: state solve did not converge");
    const GridField phi = solve_adjoint(spec.grid, state.y, spec.y_d, opts.adjoint);
    const GradientVector g = point_values(phi, spec.points);
    return classify_kkt(eta, g.components, spec.kappa, opts.tol_class, opts.tol_res, box);
}

} // namespace diracctl
