#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "diracctl/errors.hpp"
#include "diracctl/mesh.hpp"

namespace diracctl {

/// Five-point -Laplace_h plus a nonnegative nodal reaction term, acting on
/// Dirichlet fields. Boundary rows are identically zero.
class ShiftedLaplacian {
public:
    explicit ShiftedLaplacian(const DomainGrid& grid)
        : grid_(grid), reaction_(grid.size(), 0.0) {}

    ShiftedLaplacian(const DomainGrid& grid, std::vector<double> reaction)
        : grid_(grid), reaction_(std::move(reaction)) {
        require(reaction_.size() == grid_.size(), "reaction coefficient length mismatch");
        for (std::size_t idx = 0; idx < reaction_.size(); ++idx) {
            if (grid_.is_boundary(idx)) {
                reaction_[idx] = 0.0;
                continue;
            }
            require(std::isfinite(reaction_[idx]) && reaction_[idx] >= 0.0,
                    "reaction coefficient must be finite and nonnegative");
        }
    }

    ShiftedLaplacian(const DomainGrid& grid, const GridField& reaction)
        : ShiftedLaplacian(grid, std::vector<double>(reaction.values().begin(),
                                                     reaction.values().end())) {
        require(reaction.grid() == grid, "reaction field lives on a different grid");
    }

    const DomainGrid& grid() const noexcept { return grid_; }
    std::span<const double> reaction() const noexcept { return reaction_; }

    void apply(std::span<const double> v, std::span<double> out) const noexcept {
        const std::size_t n = grid_.n();
        const double inv_h2 = 1.0 / grid_.cell_area();
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = 0.0;
            out[(n - 1) * n + i] = 0.0;
        }
        for (std::size_t j = 1; j + 1 < n; ++j) {
            const std::size_t row = j * n;
            out[row] = 0.0;
            out[row + n - 1] = 0.0;
            for (std::size_t i = 1; i + 1 < n; ++i) {
                const std::size_t k = row + i;
                out[k] = (4.0 * v[k] - v[k - 1] - v[k + 1] - v[k - n] - v[k + n]) * inv_h2 +
                         reaction_[k] * v[k];
            }
        }
    }

    GridField apply(const GridField& v) const {
        require(v.grid() == grid_, "apply: field lives on a different grid");
        std::vector<double> out(grid_.size());
        apply(v.values(), out);
        return GridField(grid_, std::move(out));
    }

    double diagonal(std::size_t idx) const noexcept {
        return 4.0 / grid_.cell_area() + reaction_[idx];
    }

private:
    DomainGrid grid_;
    std::vector<double> reaction_;
};

struct LinearSolveReport {
    std::size_t iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

inline void to_json(nlohmann::json& j, const LinearSolveReport& r) {
    j = nlohmann::json{{"iterations", r.iterations}, {"residual", r.residual},
                       {"converged", r.converged}};
}

struct CgOptions {
    double tol = 1e-10;
    std::size_t max_iter = 20000;
    bool jacobi = false;
};

/// Conjugate gradients on the interior unknowns. `x` holds the initial guess
/// on entry and the iterate on exit; its boundary entries are forced to zero.
inline LinearSolveReport cg_solve(const ShiftedLaplacian& op, std::span<const double> rhs,
                                  std::vector<double>& x, const CgOptions& opts = {}) {
    require(opts.tol > 0.0, "cg tolerance must be positive");
    const DomainGrid& grid = op.grid();
    const std::size_t size = grid.size();
    require(rhs.size() == size, "cg rhs length mismatch");
    x.resize(size, 0.0);

    std::vector<double> r(size, 0.0), z(size, 0.0), p(size, 0.0), q(size, 0.0);
    double rhs_norm2 = 0.0;
    for (std::size_t k = 0; k < size; ++k) {
        if (grid.is_boundary(k)) {
            x[k] = 0.0;
            continue;
        }
        rhs_norm2 += rhs[k] * rhs[k];
    }
    LinearSolveReport report;
    if (rhs_norm2 == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        report.converged = true;
        return report;
    }
    const double rhs_norm = std::sqrt(rhs_norm2);

    std::vector<double> inv_diag;
    if (opts.jacobi) {
        inv_diag.assign(size, 0.0);
        for (std::size_t k = 0; k < size; ++k)
            if (!grid.is_boundary(k)) inv_diag[k] = 1.0 / op.diagonal(k);
    }
    auto precondition = [&](const std::vector<double>& in, std::vector<double>& out) {
        if (opts.jacobi)
            for (std::size_t k = 0; k < size; ++k) out[k] = inv_diag[k] * in[k];
        else
            out = in;
    };

    op.apply(x, q);
    double r_norm2 = 0.0;
    for (std::size_t k = 0; k < size; ++k) {
        r[k] = grid.is_boundary(k) ? 0.0 : rhs[k] - q[k];
        r_norm2 += r[k] * r[k];
    }
    precondition(r, z);
    p = z;
    double rz = 0.0;
    for (std::size_t k = 0; k < size; ++k) rz += r[k] * z[k];

    const double target = opts.tol * rhs_norm;
    std::size_t it = 0;
    while (std::sqrt(r_norm2) > target && it < opts.max_iter) {
        op.apply(p, q);
        double pq = 0.0;
        for (std::size_t k = 0; k < size; ++k) pq += p[k] * q[k];
        if (!(pq > 0.0)) break;
        const double alpha = rz / pq;
        r_norm2 = 0.0;
        for (std::size_t k = 0; k < size; ++k) {
            x[k] += alpha * p[k];
            r[k] -= alpha * q[k];
            r_norm2 += r[k] * r[k];
        }
        ++it;
        precondition(r, z);
        double rz_next = 0.0;
        for (std::size_t k = 0; k < size; ++k) rz_next += r[k] * z[k];
        const double beta = rz_next / rz;
        rz = rz_next;
        for (std::size_t k = 0; k < size; ++k) p[k] = z[k] + beta * p[k];
    }
    report.iterations = it;
    report.residual = std::sqrt(r_norm2) / rhs_norm;
    report.converged = report.residual <= opts.tol;
    return report;
}

inline std::pair<GridField, LinearSolveReport> cg_solve(const ShiftedLaplacian& op,
                                                        const GridField& rhs,
                                                        const CgOptions& opts = {}) {
    require(rhs.grid() == op.grid(), "cg_solve: rhs lives on a different grid");
    std::vector<double> x(op.grid().size(), 0.0);
    auto report = cg_solve(op, rhs.values(), x, opts);
    return {GridField(op.grid(), std::move(x)), report};
}

/// Direct Cholesky solve of the assembled interior matrix; oracle for small grids.
inline GridField dense_solve(const ShiftedLaplacian& op, const GridField& rhs) {
    const DomainGrid& grid = op.grid();
    require(rhs.grid() == grid, "dense_solve: rhs lives on a different grid");
    require(grid.n() <= 33, "dense_solve is limited to n <= 33");
    const std::size_t n = grid.n();
    const std::size_t m = n - 2;
    const double inv_h2 = 1.0 / grid.cell_area();
    auto unknown = [m](std::size_t i, std::size_t j) { return (j - 1) * m + (i - 1); };

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m * m),
                                              static_cast<Eigen::Index>(m * m));
    Eigen::VectorXd b(static_cast<Eigen::Index>(m * m));
    for (std::size_t j = 1; j + 1 < n; ++j)
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const auto row = static_cast<Eigen::Index>(unknown(i, j));
            a(row, row) = op.diagonal(grid.index(i, j));
            b(row) = rhs.at(i, j);
            const std::pair<std::size_t, std::size_t> nbrs[] = {
                {i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
            for (auto [ni, nj] : nbrs)
                if (!grid.is_boundary(ni, nj))
                    a(row, static_cast<Eigen::Index>(unknown(ni, nj))) = -inv_h2;
        }
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw SolverFailure("dense_solve: matrix is not SPD");
    const Eigen::VectorXd sol = llt.solve(b);

    std::vector<double> x(grid.size(), 0.0);
    for (std::size_t j = 1; j + 1 < n; ++j)
        for (std::size_t i = 1; i + 1 < n; ++i)
            x[grid.index(i, j)] = sol(static_cast<Eigen::Index>(unknown(i, j)));
    return GridField(grid, std::move(x));
}

} // namespace diracctl
