#include "fedcome/qpsolver.hpp"

#include "fedcome/error.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <vector>

namespace fedcome::qp {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kRidge = 1e-10;        // relative to trace(Q)/M
constexpr double kSingularRatio = 1e-12; // min/max eigenvalue below which Q counts as singular
constexpr double kPinvRatio = 1e-12;     // eigenvalue cutoff inside the free-set solves

MatrixXd to_eigen(const Matrix& m) {
    MatrixXd out(static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m(r, c);
        }
    }
    return out;
}

VectorXd to_eigen(const Vector& v) {
    VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t k = 0; k < v.size(); ++k) {
        out(static_cast<Eigen::Index>(k)) = v[k];
    }
    return out;
}

Vector from_eigen(const VectorXd& v) {
    Vector out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        out[static_cast<std::size_t>(k)] = v(k);
    }
    return out;
}

// Dual of the primal problem with Q replaced by V diag(ell) V^T:
//   minimize 1/2 l^T D l + b^T l  subject to  l >= 0,
// with D = A Q^-1 A^T and b = h + A Q^-1 c. At any l, the primal point is
// a(l) = -Q^-1 (c + A^T l) and D l + b = h - A a(l) is the constraint slack.
struct DualForm {
    MatrixXd V;
    VectorXd inv_ell;
    MatrixXd AV; // A V
    VectorXd Vc; // V^T c
    MatrixXd D;
    VectorXd b;
    bool regularized = false;
};

DualForm build_dual(const QpProblem& p) {
    const auto m = static_cast<Eigen::Index>(p.num_vars());
    MatrixXd q = to_eigen(p.Q);
    q = 0.5 * (q + q.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(q);
    VectorXd ell = eig.eigenvalues().cwiseMax(0.0);

    DualForm f;
    f.V = eig.eigenvectors();
    const double trace = q.trace();
    const double max_ell = ell.maxCoeff();
    if (max_ell <= 0.0 || ell.minCoeff() <= kSingularRatio * max_ell) {
        // Ridge only the (numerically) null part of the spectrum, so the
        // well-determined directions are solved exactly.
        const double ridge = kRidge * (trace > 0.0 ? trace / static_cast<double>(m) : 1.0);
        ell = ell.cwiseMax(ridge);
        f.regularized = true;
    }
    f.inv_ell = ell.cwiseInverse();
    f.Vc = f.V.transpose() * to_eigen(p.c);
    if (p.num_constraints() > 0) {
        f.AV = to_eigen(p.A) * f.V;
        const MatrixXd scaled = f.AV * f.inv_ell.asDiagonal();
        f.D = scaled * f.AV.transpose();
        f.D = 0.5 * (f.D + f.D.transpose()).eval();
        f.b = to_eigen(p.h) + scaled * f.Vc;
    } else {
        f.AV = MatrixXd(0, m);
        f.D = MatrixXd(0, 0);
        f.b = VectorXd(0);
    }
    return f;
}

VectorXd primal_from_dual(const DualForm& f, const VectorXd& lambda) {
    VectorXd rhs = f.Vc;
    if (lambda.size() > 0) {
        rhs += f.AV.transpose() * lambda;
    }
    return -(f.V * f.inv_ell.cwiseProduct(rhs));
}

enum class DualOutcome { optimal, max_iter, unbounded };

struct FreeSolve {
    VectorXd z;          // minimum-norm minimizer over the free set (if consistent)
    VectorXd descent;    // null-space descent direction (if inconsistent)
    bool consistent = true;
};

FreeSolve solve_free(const MatrixXd& d_ff, const VectorXd& b_f) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(d_ff);
    const VectorXd& mu = eig.eigenvalues();
    const MatrixXd& u = eig.eigenvectors();
    const double mu_max = std::max(mu.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    const VectorXd proj = u.transpose() * b_f;

    FreeSolve out;
    out.z = VectorXd::Zero(b_f.size());
    VectorXd null_part = VectorXd::Zero(b_f.size());
    for (Eigen::Index k = 0; k < mu.size(); ++k) {
        if (mu(k) > kPinvRatio * mu_max) {
            out.z -= u.col(k) * (proj(k) / mu(k));
        } else {
            null_part += u.col(k) * proj(k);
        }
    }
    // The free-set objective is unbounded below unless b_F lies in range(D_FF).
    const double scale = std::max(1.0, b_f.cwiseAbs().maxCoeff());
    if (null_part.cwiseAbs().maxCoeff() > 1e-10 * scale) {
        out.consistent = false;
        out.descent = -null_part;
    }
    return out;
}

struct DualResult {
    VectorXd lambda;
    DualOutcome outcome = DualOutcome::max_iter;
    std::size_t iterations = 0;
};

// Active-set method for min 1/2 l^T D l + b^T l, l >= 0 (Lawson-Hanson
// structure): keep the free set's subproblem solved, then free the bound
// variable with the most negative gradient until none is negative.
DualResult solve_nonneg(const MatrixXd& d, const VectorXd& b, double grad_tol, std::size_t max_iter,
                        std::span<const double> warm) {
    const Eigen::Index p = b.size();
    DualResult res;
    res.lambda = VectorXd::Zero(p);
    std::vector<bool> free(static_cast<std::size_t>(p), false);
    if (static_cast<Eigen::Index>(warm.size()) == p) {
        for (Eigen::Index j = 0; j < p; ++j) {
            const double v = warm[static_cast<std::size_t>(j)];
            if (std::isfinite(v) && v > 0.0) {
                res.lambda(j) = v;
                free[static_cast<std::size_t>(j)] = true;
            }
        }
    }

    auto free_indices = [&] {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (free[static_cast<std::size_t>(j)]) {
                idx.push_back(j);
            }
        }
        return idx;
    };

    while (true) {
        // Inner loop: make lambda optimal on the current free set.
        while (true) {
            const auto idx = free_indices();
            if (idx.empty()) {
                break;
            }
            if (++res.iterations > max_iter) {
                res.outcome = DualOutcome::max_iter;
                return res;
            }
            const auto nf = static_cast<Eigen::Index>(idx.size());
            MatrixXd d_ff(nf, nf);
            VectorXd b_f(nf);
            VectorXd l_f(nf);
            for (Eigen::Index r = 0; r < nf; ++r) {
                b_f(r) = b(idx[static_cast<std::size_t>(r)]);
                l_f(r) = res.lambda(idx[static_cast<std::size_t>(r)]);
                for (Eigen::Index c = 0; c < nf; ++c) {
                    d_ff(r, c) = d(idx[static_cast<std::size_t>(r)], idx[static_cast<std::size_t>(c)]);
                }
            }
            const FreeSolve fs = solve_free(d_ff, b_f);

            VectorXd direction;
            double step = 1.0;
            if (fs.consistent) {
                if ((fs.z.array() > 0.0).all()) {
                    for (Eigen::Index r = 0; r < nf; ++r) {
                        res.lambda(idx[static_cast<std::size_t>(r)]) = fs.z(r);
                    }
                    break;
                }
                direction = fs.z - l_f;
            } else {
                direction = fs.descent;
                if ((direction.array() >= 0.0).all()) {
                    // A ray of unbounded dual descent: the primal is infeasible.
                    res.outcome = DualOutcome::unbounded;
                    return res;
                }
                step = std::numeric_limits<double>::infinity();
            }

            // Ratio test against the nonnegativity bounds.
            Eigen::Index blocking = -1;
            for (Eigen::Index r = 0; r < nf; ++r) {
                if (direction(r) < 0.0) {
                    const double t = l_f(r) / -direction(r);
                    if (t < step) {
                        step = t;
                        blocking = r;
                    }
                }
            }
            for (Eigen::Index r = 0; r < nf; ++r) {
                const Eigen::Index j = idx[static_cast<std::size_t>(r)];
                res.lambda(j) = l_f(r) + step * direction(r);
                if (r == blocking || res.lambda(j) <= 0.0) {
                    res.lambda(j) = 0.0;
                    free[static_cast<std::size_t>(j)] = false;
                }
            }
        }

        const VectorXd w = d * res.lambda + b;
        Eigen::Index enter = -1;
        double most_negative = -grad_tol;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (!free[static_cast<std::size_t>(j)] && w(j) < most_negative) {
                most_negative = w(j);
                enter = j;
            }
        }
        if (enter < 0) {
            res.outcome = DualOutcome::optimal;
            return res;
        }
        if (++res.iterations > max_iter) {
            res.outcome = DualOutcome::max_iter;
            return res;
        }
        free[static_cast<std::size_t>(enter)] = true;
    }
}

} // namespace

std::string to_string(QpStatus s) {
    switch (s) {
    case QpStatus::optimal:
        return "optimal";
    case QpStatus::max_iter:
        return "max_iter";
    case QpStatus::infeasible:
        return "infeasible";
    }
    return "unknown";
}

void QpProblem::validate() const {
    const std::size_t m = c.size();
    if (m == 0) {
        throw ProblemError("qp: problem has no variables");
    }
    if (Q.rows() != m || Q.cols() != m) {
        throw ProblemError(fmt::format("qp: Q is {}x{}, expected {}x{}", Q.rows(), Q.cols(), m, m));
    }
    const std::size_t p = h.size();
    if (A.rows() != p || (p > 0 && A.cols() != m)) {
        throw ProblemError(fmt::format("qp: A is {}x{}, expected {}x{}", A.rows(), A.cols(), p, m));
    }
    if (!all_finite(Q.flat()) || !all_finite(c.span()) || !all_finite(A.flat()) || !all_finite(h.span())) {
        throw ProblemError("qp: non-finite problem data");
    }
    const double scale = std::max(1.0, norm_inf(Q.flat()));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            if (std::abs(Q(i, j) - Q(j, i)) > 1e-12 * scale) {
                throw ProblemError(fmt::format("qp: Q is not symmetric at ({}, {})", i, j));
            }
        }
    }
}

double QpProblem::objective(std::span<const double> a) const {
    const Vector qa = matvec(Q, a);
    return 0.5 * dot(a, qa.span()) + dot(c.span(), a);
}

namespace {

// Solves the equality-constrained KKT system on the constraints the dual
// marks active, using the true Hessian. When Q is singular the ridge puts
// 1/ridge into the primal recovery and the result can miss the tolerance by
// rounding alone; this removes that error.
QpSolution polish(const QpProblem& p, const QpSolution& base) {
    const auto m = static_cast<Eigen::Index>(p.num_vars());
    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < base.dual.size(); ++j) {
        if (base.dual[j] > 0.0) {
            active.push_back(j);
        }
    }
    const auto w = static_cast<Eigen::Index>(active.size());
    MatrixXd kkt = MatrixXd::Zero(m + w, m + w);
    VectorXd rhs(m + w);
    kkt.topLeftCorner(m, m) = to_eigen(p.Q);
    rhs.head(m) = -to_eigen(p.c);
    for (Eigen::Index r = 0; r < w; ++r) {
        const std::size_t j = active[static_cast<std::size_t>(r)];
        for (Eigen::Index c = 0; c < m; ++c) {
            kkt(m + r, c) = p.A(j, static_cast<std::size_t>(c));
            kkt(c, m + r) = p.A(j, static_cast<std::size_t>(c));
        }
        rhs(m + r) = p.h[j];
    }
    const VectorXd x = kkt.completeOrthogonalDecomposition().solve(rhs);
    QpSolution out = base;
    out.a = from_eigen(x.head(m));
    out.dual = Vector(base.dual.size());
    for (Eigen::Index r = 0; r < w; ++r) {
        out.dual[active[static_cast<std::size_t>(r)]] = x(m + r);
    }
    return out;
}

double residual(const QpProblem& p, const KktReport& k) {
    return std::max({k.stationarity / std::max(1.0, norm_inf(p.c.span())), k.primal_infeasibility, k.complementarity});
}

} // namespace

QpSolution solve(const QpProblem& problem, double tol, std::size_t max_iter, std::span<const double> warm_dual) {
    problem.validate();
    if (!(tol > 0.0)) {
        throw ProblemError("qp: tolerance must be positive");
    }
    const DualForm form = build_dual(problem);

    QpSolution sol;
    sol.regularized = form.regularized;
    DualResult dual;
    if (problem.num_constraints() > 0) {
        dual = solve_nonneg(form.D, form.b, 0.1 * tol, max_iter, warm_dual);
    } else {
        dual.lambda = VectorXd(0);
        dual.outcome = DualOutcome::optimal;
    }
    sol.iterations = dual.iterations;
    sol.dual = from_eigen(dual.lambda);
    sol.a = from_eigen(primal_from_dual(form, dual.lambda));

    KktReport kkt = certify_kkt(problem, sol, tol);
    sol.kkt_residual = residual(problem, kkt);
    if (!kkt.passed() && dual.outcome == DualOutcome::optimal) {
        const QpSolution refined = polish(problem, sol);
        const KktReport refined_kkt = certify_kkt(problem, refined, tol);
        if (refined_kkt.dual_ok && residual(problem, refined_kkt) < sol.kkt_residual) {
            sol = refined;
            kkt = refined_kkt;
            sol.kkt_residual = residual(problem, kkt);
        }
    }
    switch (dual.outcome) {
    case DualOutcome::unbounded:
        sol.status = QpStatus::infeasible;
        break;
    case DualOutcome::max_iter:
        sol.status = QpStatus::max_iter;
        break;
    case DualOutcome::optimal:
        sol.status = kkt.passed() ? QpStatus::optimal : QpStatus::max_iter;
        break;
    }
    return sol;
}

KktReport certify_kkt(const QpProblem& problem, const QpSolution& solution, double tol) {
    const std::size_t m = problem.num_vars();
    const std::size_t p = problem.num_constraints();
    if (solution.a.size() != m || solution.dual.size() != p) {
        throw DimensionError(fmt::format("certify_kkt: solution has {} vars / {} duals, problem has {} / {}",
                                         solution.a.size(), solution.dual.size(), m, p));
    }
    KktReport r;
    Vector grad = matvec(problem.Q, solution.a);
    for (std::size_t i = 0; i < m; ++i) {
        grad[i] += problem.c[i];
    }
    if (p > 0) {
        const Vector at_lambda = matvec_transposed(problem.A, solution.dual.span());
        for (std::size_t i = 0; i < m; ++i) {
            grad[i] += at_lambda[i];
        }
    }
    r.stationarity = norm_inf(grad.span());
    r.stationarity_bound = tol * std::max(1.0, norm_inf(problem.c.span()));

    r.min_dual = p > 0 ? *std::min_element(solution.dual.begin(), solution.dual.end()) : 0.0;
    if (p > 0) {
        const Vector aa = matvec(problem.A, solution.a);
        for (std::size_t j = 0; j < p; ++j) {
            const double slack = aa[j] - problem.h[j];
            r.primal_infeasibility = std::max(r.primal_infeasibility, slack);
            r.complementarity = std::max(r.complementarity, std::abs(solution.dual[j] * slack));
        }
    }
    const bool finite = all_finite(solution.a.span()) && all_finite(solution.dual.span());
    r.stationarity_ok = finite && r.stationarity <= r.stationarity_bound;
    r.primal_ok = finite && r.primal_infeasibility <= tol;
    r.complementarity_ok = finite && r.complementarity <= tol;
    r.dual_ok = finite && r.min_dual >= 0.0;
    return r;
}

Vector brute_force_oracle(const QpProblem& problem, double box, double step) {
    problem.validate();
    const std::size_t m = problem.num_vars();
    if (m > 3) {
        throw OracleError(fmt::format("brute_force_oracle: {} variables, at most 3 supported", m));
    }
    if (!(box > 0.0) || !(step > 0.0)) {
        throw OracleError("brute_force_oracle: box and step must be positive");
    }
    const auto points = static_cast<std::size_t>(std::floor(2.0 * box / step + 1e-9)) + 1;
    std::vector<double> grid(points);
    for (std::size_t k = 0; k < points; ++k) {
        grid[k] = -box + static_cast<double>(k) * step;
    }
    const std::size_t p = problem.num_constraints();
    // Tolerates only rounding in the grid coordinates, well below `step`.
    std::vector<double> slack(p);
    for (std::size_t j = 0; j < p; ++j) {
        slack[j] = 1e-9 * (1.0 + std::abs(problem.h[j]));
    }

    std::vector<std::size_t> counter(m, 0);
    std::vector<double> a(m);
    Vector best;
    double best_value = std::numeric_limits<double>::infinity();
    while (true) {
        for (std::size_t i = 0; i < m; ++i) {
            a[i] = grid[counter[i]];
        }
        bool feasible = true;
        for (std::size_t j = 0; j < p && feasible; ++j) {
            double lhs = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                lhs += problem.A(j, i) * a[i];
            }
            feasible = lhs - problem.h[j] <= slack[j];
        }
        if (feasible) {
            double value = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                double qa = 0.0;
                for (std::size_t k = 0; k < m; ++k) {
                    qa += problem.Q(i, k) * a[k];
                }
                value += a[i] * (0.5 * qa + problem.c[i]);
            }
            if (value < best_value) {
                best_value = value;
                best = Vector(a);
            }
        }
        std::size_t i = 0;
        while (i < m && ++counter[i] == points) {
            counter[i] = 0;
            ++i;
        }
        if (i == m) {
            break;
        }
    }
    if (best.empty()) {
        throw OracleError("brute_force_oracle: no feasible grid point");
    }
    return best;
}

} // namespace fedcome::qp
