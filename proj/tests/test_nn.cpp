#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "mcdd/adam.hpp"
#include "mcdd/errors.hpp"
#include "mcdd/nn.hpp"
#include "mcdd/rng.hpp"

using namespace mcdd;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

// Plain-loop forward pass, written independently of mlp_forward.
Matrix forward_naive(const MLPParams& params, const Matrix& batch) {
    Matrix activ = batch;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const Matrix& w = params.layers[l].weights;
        Matrix z(activ.rows(), w.cols());
        for (std::size_t i = 0; i < activ.rows(); ++i) {
            for (std::size_t j = 0; j < w.cols(); ++j) {
                double acc = params.use_biases ? params.layers[l].biases[j] : 0.0;
                for (std::size_t k = 0; k < w.rows(); ++k) acc += activ(i, k) * w(k, j);
                if (l + 1 < params.layers.size() && acc < 0.0) acc = 0.0;
                z(i, j) = acc;
            }
        }
        activ = std::move(z);
    }
    return activ;
}

bool identical(const MLPParams& a, const MLPParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        if (!(a.layers[l].weights == b.layers[l].weights)) return false;
        if (a.layers[l].biases != b.layers[l].biases) return false;
    }
    return true;
}

} // namespace

TEST_CASE("init_params is deterministic and seed-sensitive") {
    const std::vector<std::size_t> dims = {4, 3};
    const MLPParams a = init_params(dims, 7);
    const MLPParams b = init_params(dims, 7);
    const MLPParams c = init_params(dims, 8);
    CHECK(identical(a, b));
    CHECK_FALSE(identical(a, c));
    for (double bias : a.layers[0].biases) CHECK(bias == 0.0);
}

TEST_CASE("init_params shapes follow the dims list") {
    const std::vector<std::size_t> dims = {128, 128, 128, 128, 5};
    const MLPParams params = init_params(dims, 0);
    CHECK(params.layers.size() == 4);
    CHECK(params.input_dim() == 128);
    CHECK(params.latent_dim() == 5);
    CHECK(params.layer_dims() == dims);
}

TEST_CASE("init_params validates its inputs") {
    CHECK_THROWS_AS(init_params(std::vector<std::size_t>{4}, 0), std::invalid_argument);
    CHECK_THROWS_AS(init_params(std::vector<std::size_t>{4, 0, 3}, 0), std::invalid_argument);
}

TEST_CASE("single affine layer computes x*W + b") {
    MLPParams params;
    params.layers.push_back({Matrix(2, 2), {0.0, 0.0}});
    params.layers[0].weights(0, 0) = 1.0;
    params.layers[0].weights(1, 1) = 2.0;
    Matrix x(1, 2);
    x(0, 0) = 3.0;
    x(0, 1) = -4.0;
    const Matrix latent = mlp_forward(params, x);
    CHECK(latent(0, 0) == 3.0);
    CHECK(latent(0, 1) == -8.0); // no activation after the last layer
}

TEST_CASE("all-zero network maps any input to zero") {
    MLPParams params;
    params.layers.push_back({Matrix(3, 4), std::vector<double>(4, 0.0)});
    params.layers.push_back({Matrix(4, 2), std::vector<double>(2, 0.0)});
    Rng rng(3);
    const Matrix x = random_matrix(5, 3, rng);
    const Matrix latent = mlp_forward(params, x);
    for (std::size_t i = 0; i < latent.size(); ++i) CHECK(latent.data()[i] == 0.0);
}

TEST_CASE("random 3-layer forward matches the naive oracle") {
    Rng rng(11);
    MLPParams params = init_params(std::vector<std::size_t>{6, 8, 7, 4}, 5);
    for (auto& layer : params.layers) {
        for (double& b : layer.biases) b = 0.3 * rng.normal();
    }
    const Matrix x = random_matrix(9, 6, rng);
    const Matrix got = mlp_forward(params, x);
    const Matrix want = forward_naive(params, x);
    REQUIRE(got.rows() == want.rows());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-12));
    }
}

TEST_CASE("forward rejects shape mismatches") {
    const MLPParams params = init_params(std::vector<std::size_t>{4, 3}, 0);
    CHECK_THROWS_AS(mlp_forward(params, Matrix(2, 5)), std::invalid_argument);
}

TEST_CASE("zero upstream gradient produces zero parameter gradients") {
    const MLPParams params = init_params(std::vector<std::size_t>{3, 5, 2}, 1);
    Rng rng(2);
    const Matrix x = random_matrix(4, 3, rng);
    ForwardCache cache;
    mlp_forward(params, x, &cache);
    const MLPGradients grads = mlp_backward(params, cache, Matrix(4, 2));
    for (const auto& layer : grads.layers) {
        for (std::size_t i = 0; i < layer.weights.size(); ++i) {
            CHECK(layer.weights.data()[i] == 0.0);
        }
        for (double b : layer.biases) CHECK(b == 0.0);
    }
}

TEST_CASE("one linear layer has the closed-form weight gradient") {
    const MLPParams params = init_params(std::vector<std::size_t>{3, 2}, 4);
    Rng rng(6);
    const Matrix x = random_matrix(5, 3, rng);
    const Matrix d = random_matrix(5, 2, rng);
    ForwardCache cache;
    mlp_forward(params, x, &cache);
    const MLPGradients grads = mlp_backward(params, cache, d);
    const Matrix want = matmul_tn(x, d);
    for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(grads.layers[0].weights.data()[i] ==
              doctest::Approx(want.data()[i]).epsilon(1e-12));
    }
    const std::vector<double> want_bias = column_sums(d);
    for (std::size_t j = 0; j < want_bias.size(); ++j) {
        CHECK(grads.layers[0].biases[j] == doctest::Approx(want_bias[j]).epsilon(1e-12));
    }
}

TEST_CASE("backprop matches central finite differences on a random net") {
    Rng rng(13);
    MLPParams params = init_params(std::vector<std::size_t>{4, 8, 6, 3}, 21);
    for (auto& layer : params.layers) {
        for (double& b : layer.biases) b = 0.2 * rng.normal();
    }
    const Matrix x = random_matrix(5, 4, rng);
    const Matrix g = random_matrix(5, 3, rng);

    // Objective: sum over the batch of <g, latent>.
    const auto objective = [&]() {
        const Matrix latent = mlp_forward(params, x);
        double acc = 0.0;
        for (std::size_t i = 0; i < latent.size(); ++i) acc += latent.data()[i] * g.data()[i];
        return acc;
    };

    ForwardCache cache;
    mlp_forward(params, x, &cache);
    const MLPGradients grads = mlp_backward(params, cache, g);

    const double h = 1e-5;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto check_entries = [&](std::span<double> values, std::span<const double> analytic) {
            for (std::size_t i = 0; i < values.size(); ++i) {
                const double saved = values[i];
                values[i] = saved + h;
                const double up = objective();
                values[i] = saved - h;
                const double down = objective();
                values[i] = saved;
                const double numeric = (up - down) / (2.0 * h);
                const double diff = std::abs(analytic[i] - numeric);
                const double rel =
                    diff / std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
                CHECK(rel <= 1e-4);
            }
        };
        check_entries(params.layers[l].weights.storage(), grads.layers[l].weights.storage());
        check_entries(params.layers[l].biases, grads.layers[l].biases);
    }
}

TEST_CASE("ReLU subgradient at exact zero is pinned to zero") {
    // First unit's pre-activation is exactly 0 (inputs cancel), second is positive.
    MLPParams params;
    params.layers.push_back({Matrix(2, 2), {0.0, 0.0}});
    params.layers.push_back({Matrix(2, 1), {0.0}});
    params.layers[0].weights(0, 0) = 1.0;
    params.layers[0].weights(1, 0) = 1.0;
    params.layers[0].weights(0, 1) = 1.0;
    params.layers[0].weights(1, 1) = 2.0;
    params.layers[1].weights(0, 0) = 1.0;
    params.layers[1].weights(1, 0) = 1.0;

    Matrix x(1, 2);
    x(0, 0) = 1.0;
    x(0, 1) = -1.0; // unit 0 pre-activation: 1 - 1 = 0; unit 1: 1 - 2 = -1 -> also clipped

    ForwardCache cache;
    const Matrix latent = mlp_forward(params, x, &cache);
    CHECK(cache.pre_activations[0](0, 0) == 0.0);
    CHECK(cache.post_activations[0](0, 0) == 0.0);
    CHECK(latent(0, 0) == 0.0);

    Matrix d(1, 1);
    d(0, 0) = 1.0;
    const MLPGradients grads = mlp_backward(params, cache, d);
    // Nothing flows back through the zero/negative units.
    for (std::size_t i = 0; i < grads.layers[0].weights.size(); ++i) {
        CHECK(grads.layers[0].weights.data()[i] == 0.0);
    }
}

TEST_CASE("backward validates cache consistency") {
    const MLPParams params = init_params(std::vector<std::size_t>{3, 2}, 0);
    ForwardCache cache;
    Rng rng(1);
    mlp_forward(params, random_matrix(4, 3, rng), &cache);
    CHECK_THROWS_AS(mlp_backward(params, cache, Matrix(3, 2)), std::invalid_argument);
    CHECK_THROWS_AS(mlp_backward(params, cache, Matrix(4, 3)), std::invalid_argument);
}

TEST_CASE("adam leaves parameters unchanged under zero gradients") {
    std::vector<double> p = {1.0, -2.0};
    const std::vector<double> g = {0.0, 0.0};
    AdamState state = make_adam_state(0.01);
    const std::vector<TensorRef> params = {{"p", p}};
    const std::vector<ConstTensorRef> grads = {{"p", g}};
    adam_step(params, grads, state);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == -2.0);
    CHECK(state.step == 1);
}

TEST_CASE("adam single-step update matches the scalar recurrence") {
    std::vector<double> p = {0.0};
    const std::vector<double> g = {1.0};
    AdamState state = make_adam_state(0.01);
    const std::vector<TensorRef> params = {{"p", p}};
    const std::vector<ConstTensorRef> grads = {{"p", g}};
    adam_step(params, grads, state);

    // Independent scalar evaluation of the update rule at step 1.
    const double m = 0.1 * 1.0;
    const double v = 0.001 * 1.0;
    const double m_hat = m / (1.0 - 0.9);
    const double v_hat = v / (1.0 - 0.999);
    const double want = -0.01 * m_hat / (std::sqrt(v_hat) + 1e-8);
    CHECK(p[0] == doctest::Approx(want).epsilon(1e-15));
    CHECK(p[0] == doctest::Approx(-0.00999999).epsilon(1e-6));
}

TEST_CASE("adam treats identical tensors identically") {
    std::vector<double> p1 = {0.5, -0.25};
    std::vector<double> p2 = {0.5, -0.25};
    const std::vector<double> g = {0.3, -0.7};
    AdamState state = make_adam_state(0.01);
    const std::vector<TensorRef> params = {{"a", p1}, {"b", p2}};
    const std::vector<ConstTensorRef> grads = {{"a", g}, {"b", g}};
    for (int step = 0; step < 5; ++step) adam_step(params, grads, state);
    CHECK(p1 == p2);
}

TEST_CASE("adam reports the offending tensor on non-finite gradients") {
    std::vector<double> p = {1.0};
    const std::vector<double> g = {std::numeric_limits<double>::quiet_NaN()};
    AdamState state = make_adam_state(0.01);
    const std::vector<TensorRef> params = {{"layer7.weights", p}};
    const std::vector<ConstTensorRef> grads = {{"layer7.weights", g}};
    CHECK_THROWS_WITH_AS(adam_step(params, grads, state),
                         doctest::Contains("layer7.weights"), NumericError);
}

TEST_CASE("adam rejects shape mismatches") {
    std::vector<double> p = {1.0, 2.0};
    const std::vector<double> g = {1.0};
    AdamState state = make_adam_state(0.01);
    const std::vector<TensorRef> params = {{"p", p}};
    const std::vector<ConstTensorRef> grads = {{"p", g}};
    CHECK_THROWS_AS(adam_step(params, grads, state), std::invalid_argument);
}
