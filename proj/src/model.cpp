#include "fedcome/model.hpp"

#include "fedcome/error.hpp"
#include "fedcome/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace fedcome {

Activation parse_activation(const std::string& name) {
    if (name == "relu") {
        return Activation::relu;
    }
    if (name == "tanh") {
        return Activation::tanh;
    }
    throw ConfigError(fmt::format("unknown activation '{}'", name));
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

void MlpSpec::validate() const {
    if (input_dim == 0) {
        throw ConfigError("MlpSpec: input_dim must be positive");
    }
    if (num_classes < 2) {
        throw ConfigError("MlpSpec: num_classes must be at least 2");
    }
    for (std::size_t h : hidden_dims) {
        if (h == 0) {
            throw ConfigError("MlpSpec: hidden layer widths must be positive");
        }
    }
}

std::vector<std::size_t> MlpSpec::widths() const {
    std::vector<std::size_t> w;
    w.push_back(input_dim);
    w.insert(w.end(), hidden_dims.begin(), hidden_dims.end());
    w.push_back(num_classes);
    return w;
}

std::size_t MlpSpec::param_count() const {
    const auto w = widths();
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
        total += w[l + 1] * w[l] + w[l + 1];
    }
    return total;
}

Batch Batch::select(const std::vector<std::size_t>& rows) const {
    Batch out;
    out.features = Matrix(rows.size(), features.cols());
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = features.row(rows[i]);
        std::copy(src.begin(), src.end(), out.features.row(i).begin());
        out.labels.push_back(labels[rows[i]]);
    }
    return out;
}

struct Mlp::Forward {
    // acts[0] is the input; acts[l] for l >= 1 is the post-activation output
    // of hidden layer l. The last entry holds the logits.
    std::vector<Matrix> acts;
};

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    widths_ = spec_.widths();
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        offsets_.push_back(param_count_);
        param_count_ += widths_[l + 1] * widths_[l] + widths_[l + 1];
    }
}

ParamVector Mlp::init_params(std::uint64_t seed) const {
    ParamVector p(param_count_);
    Rng rng = make_rng(seed, Purpose::init_params);
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        const std::size_t in = widths_[l];
        const std::size_t out = widths_[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::size_t k = 0; k < in * out; ++k) {
            p[offsets_[l] + k] = dist(rng);
        }
    }
    return p;
}

void Mlp::check(const ParamVector& params, const Batch& batch) const {
    if (params.size() != param_count_) {
        throw DimensionError(fmt::format("model: expected {} parameters, got {}", param_count_, params.size()));
    }
    if (batch.empty()) {
        throw DimensionError("model: empty batch");
    }
    if (batch.features.cols() != spec_.input_dim || batch.features.rows() != batch.labels.size()) {
        throw DimensionError(fmt::format("model: batch is {}x{} with {} labels, expected input_dim {}",
                                         batch.features.rows(), batch.features.cols(), batch.labels.size(),
                                         spec_.input_dim));
    }
    for (int y : batch.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= spec_.num_classes) {
            throw DimensionError(fmt::format("model: label {} outside [0, {})", y, spec_.num_classes));
        }
    }
    require_finite(params, "model parameters");
}

Mlp::Forward Mlp::forward(const ParamVector& params, const Matrix& features) const {
    Forward f;
    f.acts.reserve(widths_.size());
    f.acts.push_back(features);
    const std::size_t n = features.rows();
    const std::size_t layers = widths_.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = widths_[l];
        const std::size_t out = widths_[l + 1];
        const double* w = params.data() + offsets_[l];
        const double* b = w + in * out;
        const Matrix& x = f.acts[l];
        Matrix z(n, out);
        for (std::size_t i = 0; i < n; ++i) {
            const auto xi = x.row(i);
            auto zi = z.row(i);
            for (std::size_t o = 0; o < out; ++o) {
                const double* wo = w + o * in;
                double acc = b[o];
                for (std::size_t k = 0; k < in; ++k) {
                    acc += wo[k] * xi[k];
                }
                zi[o] = acc;
            }
        }
        if (l + 1 < layers) {
            double* zd = z.data();
            const std::size_t total = n * out;
            if (spec_.activation == Activation::relu) {
                for (std::size_t k = 0; k < total; ++k) {
                    zd[k] = zd[k] > 0.0 ? zd[k] : 0.0;
                }
            } else {
                for (std::size_t k = 0; k < total; ++k) {
                    zd[k] = std::tanh(zd[k]);
                }
            }
        }
        f.acts.push_back(std::move(z));
    }
    return f;
}

Matrix Mlp::logits(const ParamVector& params, const Batch& batch) const {
    check(params, batch);
    return std::move(forward(params, batch.features).acts.back());
}

double Mlp::loss(const ParamVector& params, const Batch& batch) const {
    check(params, batch);
    const Matrix z = std::move(forward(params, batch.features).acts.back());
    double total = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const auto zi = z.row(i);
        const double m = *std::max_element(zi.begin(), zi.end());
        double s = 0.0;
        for (double v : zi) {
            s += std::exp(v - m);
        }
        total += m + std::log(s) - zi[static_cast<std::size_t>(batch.labels[i])];
    }
    const double out = total / static_cast<double>(z.rows());
    if (!std::isfinite(out)) {
        throw NumericError("model: non-finite loss");
    }
    return out;
}

LossAndGrad Mlp::loss_and_grad(const ParamVector& params, const Batch& batch) const {
    check(params, batch);
    Forward f = forward(params, batch.features);
    const std::size_t n = batch.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    const std::size_t layers = widths_.size() - 1;

    // Softmax cross-entropy; dz holds d(loss)/d(logits).
    Matrix dz = std::move(f.acts.back());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        auto zi = dz.row(i);
        const auto y = static_cast<std::size_t>(batch.labels[i]);
        const double m = *std::max_element(zi.begin(), zi.end());
        const double zy = zi[y];
        double s = 0.0;
        for (double& v : zi) {
            v = std::exp(v - m);
            s += v;
        }
        total += m + std::log(s) - zy;
        for (double& v : zi) {
            v = v / s * inv_n;
        }
        zi[y] -= inv_n;
    }

    LossAndGrad out;
    out.loss = total * inv_n;
    out.grad = ParamVector(param_count_);
    for (std::size_t l = layers; l-- > 0;) {
        const std::size_t in = widths_[l];
        const std::size_t outw = widths_[l + 1];
        const Matrix& x = f.acts[l];
        double* gw = out.grad.data() + offsets_[l];
        double* gb = gw + in * outw;
        for (std::size_t i = 0; i < n; ++i) {
            const auto dzi = dz.row(i);
            const auto xi = x.row(i);
            for (std::size_t o = 0; o < outw; ++o) {
                const double d = dzi[o];
                gb[o] += d;
                double* gwo = gw + o * in;
                for (std::size_t k = 0; k < in; ++k) {
                    gwo[k] += d * xi[k];
                }
            }
        }
        if (l == 0) {
            break;
        }
        const double* w = params.data() + offsets_[l];
        Matrix dx(n, in);
        for (std::size_t i = 0; i < n; ++i) {
            const auto dzi = dz.row(i);
            auto dxi = dx.row(i);
            for (std::size_t o = 0; o < outw; ++o) {
                const double d = dzi[o];
                const double* wo = w + o * in;
                for (std::size_t k = 0; k < in; ++k) {
                    dxi[k] += d * wo[k];
                }
            }
        }
        // x is the activation output of layer l; relu'(z) = [a > 0], tanh'(z) = 1 - a^2.
        double* dxd = dx.data();
        const double* a = x.data();
        const std::size_t total_in = n * in;
        if (spec_.activation == Activation::relu) {
            for (std::size_t k = 0; k < total_in; ++k) {
                dxd[k] = a[k] > 0.0 ? dxd[k] : 0.0;
            }
        } else {
            for (std::size_t k = 0; k < total_in; ++k) {
                dxd[k] *= 1.0 - a[k] * a[k];
            }
        }
        dz = std::move(dx);
    }
    if (!std::isfinite(out.loss)) {
        throw NumericError("model: non-finite loss");
    }
    require_finite(out.grad, "model gradient");
    return out;
}

ParamVector Mlp::grad(const ParamVector& params, const Batch& batch) const {
    return loss_and_grad(params, batch).grad;
}

double Mlp::accuracy(const ParamVector& params, const Batch& batch) const {
    const Matrix z = logits(params, batch);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const auto zi = z.row(i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < zi.size(); ++c) {
            if (zi[c] > zi[best]) {
                best = c;
            }
        }
        if (best == static_cast<std::size_t>(batch.labels[i])) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(z.rows());
}

} // namespace fedcome
