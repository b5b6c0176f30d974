#pragma once

#include "fedcome/numerics.hpp"

#include <cstddef>
#include <vector>

namespace fedcome {

/// Client (pseudo-)gradients stacked as columns: `g` is d x M, column i
/// belongs to client `client_ids[i]`.
struct GradientMatrix {
    Matrix g;
    std::vector<int> client_ids;

    std::size_t dim() const noexcept { return g.rows(); }
    std::size_t count() const noexcept { return g.cols(); }

    /// Throws DimensionError if empty or ids do not match columns, and
    /// NumericError on non-finite entries.
    void validate() const;

    static GradientMatrix from_columns(const std::vector<Vector>& columns, std::vector<int> client_ids);
};

struct ConsensusResult {
    GradientMatrix corrected;  // same shape and order as the input
    Matrix coefficients;       // M x M, column i is a_i with corrected_i = G a_i
    /// min(0, min over i, j of corrected_i . g_j)
    double max_violation = 0.0;
    /// |corrected_i - g_i| / (local_steps * eta), per client
    Vector drift;
    /// Clients whose QP did not certify and fell back to a scaled gradient.
    std::vector<bool> fell_back;
    std::size_t fallback_count = 0;
};

/// Relative tolerance on the consensus inequality corrected_i . g_j >= 0.
inline constexpr double kConsensusTol = 1e-6;

/// Replaces every client gradient with the nearest vector (in L2) that has a
/// nonnegative inner product with every original gradient. The search is
/// over a_i in coefficient space: minimize 1/2 a^T K a - (K e_i)^T a subject
/// to K a >= 0 with K = G^T G, then corrected_i = G a_i. The Gram matrix is
/// built once and shared by all M problems.
ConsensusResult enforce_consensus(const GradientMatrix& gradients, std::size_t local_steps, double eta);

struct Violation {
    int i = 0;
    int j = 0;
    double dot = 0.0;
    friend bool operator==(const Violation&, const Violation&) = default;
};

/// All ordered client pairs (by id) whose gradients have a negative inner
/// product, sorted by ascending product.
std::vector<Violation> consensus_violations(const GradientMatrix& gradients);

/// Uniform column mean.
Vector aggregate(const GradientMatrix& gradients);

} // namespace fedcome
