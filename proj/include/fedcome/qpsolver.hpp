#pragma once

#include "fedcome/numerics.hpp"

#include <cstddef>
#include <span>
#include <string>

namespace fedcome::qp {

/// minimize 1/2 a^T Q a + c^T a  subject to  A a <= h.
/// Q must be symmetric positive semidefinite; A may have zero rows.
struct QpProblem {
    Matrix Q;
    Vector c;
    Matrix A;
    Vector h;

    std::size_t num_vars() const noexcept { return c.size(); }
    std::size_t num_constraints() const noexcept { return h.size(); }

    /// Throws ProblemError on nonconformable shapes, asymmetric Q or
    /// non-finite data.
    void validate() const;
    double objective(std::span<const double> a) const;
};

enum class QpStatus { optimal, max_iter, infeasible };

std::string to_string(QpStatus s);

struct QpSolution {
    Vector a;
    Vector dual; // one multiplier per constraint, >= 0
    QpStatus status = QpStatus::max_iter;
    /// max(stationarity / max(1, |c|_inf), primal infeasibility, complementarity)
    double kkt_residual = 0.0;
    std::size_t iterations = 0;
    /// True when Q was numerically singular and a ridge was added to its
    /// spectrum for the dual solve.
    bool regularized = false;
};

inline constexpr double kDefaultTol = 1e-8;
inline constexpr std::size_t kDefaultMaxIter = 10000;

/// Solves the problem through its Lagrange dual, a nonnegativity-constrained
/// QP in the multipliers, with an exact active-set method. `warm_dual`, if
/// non-empty, seeds the multipliers.
QpSolution solve(const QpProblem& problem, double tol = kDefaultTol, std::size_t max_iter = kDefaultMaxIter,
                 std::span<const double> warm_dual = {});

struct KktReport {
    double stationarity = 0.0;        // |Q a + c + A^T lambda|_inf
    double stationarity_bound = 0.0;  // tol * max(1, |c|_inf)
    double primal_infeasibility = 0.0; // max(0, max_j (A a - h)_j)
    double complementarity = 0.0;     // max_j |lambda_j (A a - h)_j|
    double min_dual = 0.0;
    bool stationarity_ok = false;
    bool primal_ok = false;
    bool complementarity_ok = false;
    bool dual_ok = false;

    bool passed() const noexcept { return stationarity_ok && primal_ok && complementarity_ok && dual_ok; }
};

/// Recomputes the KKT residuals of `solution` from the problem data alone.
KktReport certify_kkt(const QpProblem& problem, const QpSolution& solution, double tol);

/// Exhaustive grid search over [-box, box]^M with spacing `step`; returns
/// the feasible grid point of least objective. Only for M <= 3. Throws
/// OracleError when no grid point is feasible.
Vector brute_force_oracle(const QpProblem& problem, double box, double step);

} // namespace fedcome::qp
