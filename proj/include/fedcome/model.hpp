#pragma once

#include "fedcome/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace fedcome {

enum class Activation { relu, tanh };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

/// Fully connected classifier shape. Zero hidden layers gives multinomial
/// logistic regression.
struct MlpSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims;
    std::size_t num_classes = 0;
    Activation activation = Activation::relu;

    void validate() const;
    /// Layer widths from input to output, inclusive.
    std::vector<std::size_t> widths() const;
    /// Total number of weights and biases.
    std::size_t param_count() const;
};

/// Flattened model parameters. Layout, for each layer from input to output:
/// the weight matrix (out x in, row-major) followed by the bias vector (out).
using ParamVector = Vector;

/// A set of labelled samples, one row of `features` per sample.
struct Batch {
    Matrix features;
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }
    bool empty() const noexcept { return labels.empty(); }
    std::size_t dim() const noexcept { return features.cols(); }

    /// Samples at the given row positions, in that order.
    Batch select(const std::vector<std::size_t>& rows) const;
};

struct LossAndGrad {
    double loss = 0.0;
    ParamVector grad;
};

/// Feed-forward network evaluated on flat parameter vectors. Stateless apart
/// from its shape, so one instance may be shared across threads.
class Mlp {
public:
    explicit Mlp(MlpSpec spec);

    const MlpSpec& spec() const noexcept { return spec_; }
    std::size_t param_count() const noexcept { return param_count_; }

    /// Glorot-uniform weights, zero biases; deterministic in `seed`.
    ParamVector init_params(std::uint64_t seed) const;

    /// Mean cross-entropy over the batch.
    double loss(const ParamVector& params, const Batch& batch) const;
    ParamVector grad(const ParamVector& params, const Batch& batch) const;
    LossAndGrad loss_and_grad(const ParamVector& params, const Batch& batch) const;

    /// Fraction of samples whose argmax logit (lowest index on ties) matches
    /// the label.
    double accuracy(const ParamVector& params, const Batch& batch) const;

    /// Raw class scores, one row per sample.
    Matrix logits(const ParamVector& params, const Batch& batch) const;

private:
    struct Forward;

    void check(const ParamVector& params, const Batch& batch) const;
    Forward forward(const ParamVector& params, const Matrix& features) const;

    MlpSpec spec_;
    std::vector<std::size_t> widths_;
    std::vector<std::size_t> offsets_; // start of each layer's weights in the flat vector
    std::size_t param_count_ = 0;
};

} // namespace fedcome
