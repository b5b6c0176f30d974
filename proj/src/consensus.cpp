#include "fedcome/consensus.hpp"

#include "fedcome/error.hpp"
#include "fedcome/qpsolver.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <set>

namespace fedcome {

namespace {

// Solver tolerance on the rescaled problem (unit largest Gram diagonal).
constexpr double kQpTol = 1e-9;

bool satisfies_consensus(const Matrix& g, std::span<const double> candidate, std::span<const double> norms) {
    const Vector dots = matvec_transposed(g, candidate);
    const double cand_norm = norm2(candidate);
    for (std::size_t j = 0; j < dots.size(); ++j) {
        if (dots[j] < -kConsensusTol * cand_norm * norms[j]) {
            return false;
        }
    }
    return true;
}

} // namespace

void GradientMatrix::validate() const {
    if (g.rows() == 0 || g.cols() == 0) {
        throw DimensionError("GradientMatrix: need at least one client and one parameter");
    }
    if (client_ids.size() != g.cols()) {
        throw DimensionError(
            fmt::format("GradientMatrix: {} client ids for {} columns", client_ids.size(), g.cols()));
    }
    if (std::set<int>(client_ids.begin(), client_ids.end()).size() != client_ids.size()) {
        throw DimensionError("GradientMatrix: duplicate client ids");
    }
    require_finite(g, "client gradients");
}

GradientMatrix GradientMatrix::from_columns(const std::vector<Vector>& columns, std::vector<int> client_ids) {
    GradientMatrix out{Matrix::from_columns(columns), std::move(client_ids)};
    out.validate();
    return out;
}

ConsensusResult enforce_consensus(const GradientMatrix& gradients, std::size_t local_steps, double eta) {
    gradients.validate();
    if (!(eta > 0.0) || local_steps == 0) {
        throw ConfigError("enforce_consensus: eta must be positive and local_steps at least 1");
    }
    const Matrix& g = gradients.g;
    const std::size_t m = gradients.count();
    const Matrix k = gram(g);

    std::vector<double> norms(m);
    double scale = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        norms[j] = std::sqrt(k(j, j));
        scale = std::max(scale, k(j, j));
    }

    // The QP is homogeneous in G, so it is solved on K / max diag(K). Each
    // constraint row is further divided by |g_j|, which leaves the feasible
    // set unchanged and puts the primal residual in units of |corrected|.
    qp::QpProblem problem;
    if (scale > 0.0) {
        problem.Q = Matrix(m, m);
        problem.A = Matrix(m, m);
        for (std::size_t r = 0; r < m; ++r) {
            const double unit_norm = norms[r] / std::sqrt(scale);
            for (std::size_t c = 0; c < m; ++c) {
                problem.Q(r, c) = k(r, c) / scale;
                problem.A(r, c) = unit_norm > 0.0 ? -problem.Q(r, c) / unit_norm : 0.0;
            }
        }
        problem.h = Vector(m);
    }

    ConsensusResult res;
    res.corrected.g = Matrix(g.rows(), m);
    res.corrected.client_ids = gradients.client_ids;
    res.coefficients = Matrix(m, m);
    res.drift = Vector(m);
    res.fell_back.assign(m, false);

    for (std::size_t i = 0; i < m; ++i) {
        bool consensual = true;
        for (std::size_t j = 0; j < m; ++j) {
            consensual = consensual && k(i, j) >= 0.0;
        }
        if (consensual) {
            // a_i = e_i is the unconstrained optimum and already feasible.
            res.coefficients(i, i) = 1.0;
            for (std::size_t r = 0; r < g.rows(); ++r) {
                res.corrected.g(r, i) = g(r, i);
            }
            continue;
        }

        bool accepted = false;
        problem.c = Vector(m);
        for (std::size_t r = 0; r < m; ++r) {
            problem.c[r] = -problem.Q(r, i);
        }
        const qp::QpSolution sol = qp::solve(problem, kQpTol);
        if (sol.status == qp::QpStatus::optimal) {
            const Vector candidate = matvec(g, sol.a);
            if (satisfies_consensus(g, candidate.span(), norms)) {
                res.coefficients.set_column(i, sol.a.span());
                res.corrected.g.set_column(i, candidate.span());
                accepted = true;
            }
        }
        if (!accepted) {
            // Largest beta in {1, 1/2, 1/4, ...} for which beta * g_i is
            // consensual; beta = 0 always is.
            const Vector gi = g.column(i);
            double beta = 1.0;
            for (int halvings = 0; halvings <= 30; ++halvings, beta *= 0.5) {
                Vector scaled(gi);
                for (double& v : scaled) {
                    v *= beta;
                }
                if (satisfies_consensus(g, scaled.span(), norms)) {
                    break;
                }
            }
            if (beta < std::ldexp(1.0, -30)) {
                beta = 0.0;
            }
            for (std::size_t r = 0; r < g.rows(); ++r) {
                res.corrected.g(r, i) = beta * g(r, i);
            }
            res.coefficients(i, i) = beta;
            res.fell_back[i] = true;
            ++res.fallback_count;
        }
    }

    const double denom = static_cast<double>(local_steps) * eta;
    for (std::size_t i = 0; i < m; ++i) {
        const Vector corrected_i = res.corrected.g.column(i);
        const Vector dots = matvec_transposed(g, corrected_i.span());
        for (double d : dots) {
            res.max_violation = std::min(res.max_violation, d);
        }
        double diff2 = 0.0;
        for (std::size_t r = 0; r < g.rows(); ++r) {
            const double diff = corrected_i[r] - g(r, i);
            diff2 += diff * diff;
        }
        res.drift[i] = std::sqrt(diff2) / denom;
    }
    return res;
}

std::vector<Violation> consensus_violations(const GradientMatrix& gradients) {
    gradients.validate();
    const Matrix k = gram(gradients.g);
    std::vector<Violation> out;
    for (std::size_t i = 0; i < k.rows(); ++i) {
        for (std::size_t j = 0; j < k.cols(); ++j) {
            if (i != j && k(i, j) < 0.0) {
                out.push_back({gradients.client_ids[i], gradients.client_ids[j], k(i, j)});
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) { return a.dot < b.dot; });
    return out;
}

Vector aggregate(const GradientMatrix& gradients) {
    gradients.validate();
    const Matrix& g = gradients.g;
    const auto m = static_cast<double>(g.cols());
    Vector out(g.rows());
    std::vector<double> row;
    for (std::size_t r = 0; r < g.rows(); ++r) {
        // Summing in value order makes the mean independent of column order.
        row.assign(g.row(r).begin(), g.row(r).end());
        std::sort(row.begin(), row.end());
        double acc = 0.0;
        for (double v : row) {
            acc += v;
        }
        out[r] = acc / m;
    }
    return out;
}

} // namespace fedcome
