#include "doctest.h"

#include "fedcome/error.hpp"
#include "fedcome/model.hpp"
#include "fedcome/rng.hpp"

#include <cmath>

using namespace fedcome;

namespace {

Batch random_batch(std::size_t n, std::size_t dim, std::size_t classes, std::uint64_t seed) {
    Rng rng = make_rng(seed, Purpose::test_fixture);
    std::normal_distribution<double> nd;
    Batch b;
    b.features = Matrix(n, dim);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < dim; ++c) {
            b.features(r, c) = nd(rng);
        }
        b.labels.push_back(static_cast<int>(rng() % classes));
    }
    return b;
}

// Two points, one per class, separable through the origin.
Batch two_points() {
    Batch b;
    b.features = Matrix{{1.0, 0.5}, {-1.0, -0.5}};
    b.labels = {0, 1};
    return b;
}

ParamVector fit(const Mlp& mlp, const Batch& b, std::size_t steps, double eta) {
    ParamVector theta = mlp.init_params(1);
    for (std::size_t s = 0; s < steps; ++s) {
        theta = axpy(-eta, mlp.grad(theta, b), theta);
    }
    return theta;
}

} // namespace

TEST_SUITE("model") {

TEST_CASE("parameter count of the 784-64-10 network") {
    MlpSpec spec{784, {64}, 10, Activation::relu};
    CHECK(spec.param_count() == 50890);
    CHECK(Mlp(spec).init_params(0).size() == 50890);
}

TEST_CASE("spec validation") {
    CHECK_THROWS_AS(MlpSpec({0, {}, 2, Activation::relu}).validate(), ConfigError);
    CHECK_THROWS_AS(MlpSpec({3, {}, 1, Activation::relu}).validate(), ConfigError);
    CHECK_THROWS_AS(MlpSpec({3, {0}, 2, Activation::relu}).validate(), ConfigError);
    CHECK(parse_activation("tanh") == Activation::tanh);
    CHECK_THROWS_AS(parse_activation("gelu"), ConfigError);
}

TEST_CASE("initialisation is deterministic, Glorot-bounded, with zero biases") {
    MlpSpec spec{5, {4}, 3, Activation::tanh};
    const Mlp mlp(spec);
    const ParamVector a = mlp.init_params(9);
    CHECK(a == mlp.init_params(9));
    CHECK_FALSE(a == mlp.init_params(10));
    // Layout: W1 (4x5), b1 (4), W2 (3x4), b2 (3).
    const double lim1 = std::sqrt(6.0 / 9.0);
    const double lim2 = std::sqrt(6.0 / 7.0);
    for (std::size_t k = 0; k < 20; ++k) {
        CHECK(std::abs(a[k]) <= lim1);
    }
    for (std::size_t k = 20; k < 24; ++k) {
        CHECK(a[k] == 0.0);
    }
    for (std::size_t k = 24; k < 36; ++k) {
        CHECK(std::abs(a[k]) <= lim2);
    }
    for (std::size_t k = 36; k < 39; ++k) {
        CHECK(a[k] == 0.0);
    }
}

TEST_CASE("loss of uniform logits is ln C") {
    const Mlp mlp({4, {}, 7, Activation::relu});
    const Batch b = random_batch(11, 4, 7, 2);
    CHECK(mlp.loss(ParamVector(mlp.param_count()), b) == doctest::Approx(std::log(7.0)).epsilon(1e-14));
}

TEST_CASE("closed-form cross-entropy for logits (2, 0)") {
    // Zero hidden layers; W = [[1],[0]], b = [1, 0], x = 1 gives logits (2, 0).
    const Mlp mlp({1, {}, 2, Activation::relu});
    const ParamVector theta{1.0, 0.0, 1.0, 0.0};
    Batch b;
    b.features = Matrix{{1.0}};
    b.labels = {0};
    const Matrix z = mlp.logits(theta, b);
    CHECK(z(0, 0) == 2.0);
    CHECK(z(0, 1) == 0.0);
    CHECK(mlp.loss(theta, b) == doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-14));
    CHECK(mlp.loss(theta, b) == doctest::Approx(0.126928).epsilon(1e-6));
}

TEST_CASE("loss is nonnegative and stable for large logits") {
    const Mlp mlp({3, {5}, 4, Activation::relu});
    for (std::uint64_t s = 0; s < 20; ++s) {
        ParamVector theta = mlp.init_params(s);
        for (double& v : theta) {
            v *= 50.0;
        }
        const double l = mlp.loss(theta, random_batch(6, 3, 4, s));
        CHECK(l >= 0.0);
        CHECK(std::isfinite(l));
    }
}

TEST_CASE("central differences agree with the analytic gradient") {
    for (Activation act : {Activation::relu, Activation::tanh}) {
        const Mlp mlp({6, {7, 5}, 3, act});
        const Batch b = random_batch(9, 6, 3, 4);
        const ParamVector theta = mlp.init_params(4);
        const ParamVector g = mlp.grad(theta, b);
        Rng rng = make_rng(4, Purpose::test_fixture, 1);
        const double eps = 1e-5;
        for (int s = 0; s < 50; ++s) {
            const std::size_t k = rng() % theta.size();
            ParamVector plus = theta;
            ParamVector minus = theta;
            plus[k] += eps;
            minus[k] -= eps;
            const double fd = (mlp.loss(plus, b) - mlp.loss(minus, b)) / (2 * eps);
            CHECK(std::abs(fd - g[k]) <= 1e-5);
        }
    }
}

TEST_CASE("loss_and_grad matches loss and grad bitwise") {
    const Mlp mlp({4, {6}, 3, Activation::tanh});
    const Batch b = random_batch(8, 4, 3, 6);
    const ParamVector theta = mlp.init_params(6);
    const LossAndGrad lg = mlp.loss_and_grad(theta, b);
    CHECK(lg.loss == mlp.loss(theta, b));
    CHECK(lg.grad == mlp.grad(theta, b));
}

TEST_CASE("duplicating every sample leaves the gradient unchanged") {
    const Mlp mlp({3, {4}, 2, Activation::relu});
    const Batch b = random_batch(5, 3, 2, 8);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < 5; ++i) {
        rows.push_back(i);
        rows.push_back(i);
    }
    const ParamVector theta = mlp.init_params(8);
    const ParamVector g1 = mlp.grad(theta, b);
    const ParamVector g2 = mlp.grad(theta, b.select(rows));
    for (std::size_t k = 0; k < g1.size(); ++k) {
        CHECK(g2[k] == doctest::Approx(g1[k]).epsilon(1e-12));
    }
}

TEST_CASE("gradient descent on a separable pair reaches stationarity and full accuracy") {
    const Mlp mlp({2, {}, 2, Activation::relu});
    const Batch b = two_points();
    const ParamVector theta = fit(mlp, b, 20000, 0.5);
    CHECK(norm2(mlp.grad(theta, b)) <= 1e-3);
    CHECK(mlp.accuracy(theta, b) == 1.0);
    Batch wrong = b;
    wrong.labels = {1, 0};
    CHECK(mlp.accuracy(theta, wrong) == 0.0);
}

TEST_CASE("a small gradient step decreases the loss") {
    const Mlp mlp({5, {8}, 3, Activation::tanh});
    const Batch b = random_batch(20, 5, 3, 12);
    const ParamVector theta = mlp.init_params(12);
    const ParamVector next = axpy(-1e-3, mlp.grad(theta, b), theta);
    CHECK(mlp.loss(next, b) < mlp.loss(theta, b));
}

TEST_CASE("ties predict the lowest class index") {
    const Mlp mlp({3, {}, 4, Activation::relu});
    Batch b = random_batch(40, 3, 4, 13);
    std::size_t zeros = 0;
    for (int y : b.labels) {
        zeros += y == 0 ? 1 : 0;
    }
    CHECK(mlp.accuracy(ParamVector(mlp.param_count()), b) == doctest::Approx(zeros / 40.0));
}

TEST_CASE("bad inputs are rejected") {
    const Mlp mlp({3, {}, 2, Activation::relu});
    const ParamVector theta(mlp.param_count());
    Batch b = random_batch(2, 3, 2, 1);
    CHECK_THROWS_AS(mlp.loss(ParamVector(3), b), DimensionError);
    CHECK_THROWS_AS(mlp.loss(theta, Batch{}), DimensionError);
    Batch bad = b;
    bad.labels[0] = 2;
    CHECK_THROWS_AS(mlp.grad(theta, bad), DimensionError);
    CHECK_THROWS_AS(mlp.loss(theta, random_batch(2, 4, 2, 1)), DimensionError);
}

}
