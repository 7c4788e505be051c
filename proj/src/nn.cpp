#include "mcdd/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mcdd/rng.hpp"

namespace mcdd {

std::vector<std::size_t> MLPParams::layer_dims() const {
    std::vector<std::size_t> dims;
    dims.push_back(input_dim());
    for (const auto& layer : layers) dims.push_back(layer.weights.cols());
    return dims;
}

MLPParams init_params(std::span<const std::size_t> layer_dims, std::uint64_t seed) {
    if (layer_dims.size() < 2) {
        throw std::invalid_argument("init_params: need at least input and output dims");
    }
    for (std::size_t d : layer_dims) {
        if (d == 0) throw std::invalid_argument("init_params: layer dims must be positive");
    }
    MLPParams params;
    Rng rng(mix_seed(seed, 0x6d6c705f696e6974ULL));
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const std::size_t d_in = layer_dims[l];
        const std::size_t d_out = layer_dims[l + 1];
        DenseLayerParams layer;
        layer.weights = Matrix(d_in, d_out);
        const double stddev = std::sqrt(2.0 / static_cast<double>(d_in));
        for (std::size_t i = 0; i < layer.weights.size(); ++i) {
            layer.weights.data()[i] = rng.normal(0.0, stddev);
        }
        layer.biases.assign(d_out, 0.0);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

Matrix mlp_forward(const MLPParams& params, const Matrix& batch, ForwardCache* cache) {
    if (params.layers.empty()) throw std::invalid_argument("mlp_forward: empty network");
    if (batch.cols() != params.input_dim()) {
        throw std::invalid_argument("mlp_forward: batch has " + std::to_string(batch.cols()) +
                                    " columns, network expects " +
                                    std::to_string(params.input_dim()));
    }
    if (cache) {
        cache->input = batch;
        cache->pre_activations.clear();
        cache->post_activations.clear();
    }
    const std::size_t last = params.layers.size() - 1;
    const Matrix* current = &batch;
    Matrix local;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        Matrix z = matmul(*current, params.layers[l].weights);
        if (params.use_biases) add_row_vector(z, params.layers[l].biases);
        if (cache) cache->pre_activations.push_back(z);
        if (l != last) {
            for (std::size_t i = 0; i < z.size(); ++i) {
                if (z.data()[i] < 0.0) z.data()[i] = 0.0;
            }
        }
        if (cache) {
            cache->post_activations.push_back(std::move(z));
            current = &cache->post_activations.back();
        } else {
            local = std::move(z);
            current = &local;
        }
    }
    return *current;
}

MLPGradients zero_gradients_like(const MLPParams& params) {
    MLPGradients grads;
    grads.layers.reserve(params.layers.size());
    for (const auto& layer : params.layers) {
        DenseLayerParams g;
        g.weights = Matrix(layer.weights.rows(), layer.weights.cols());
        g.biases.assign(layer.biases.size(), 0.0);
        grads.layers.push_back(std::move(g));
    }
    return grads;
}

MLPGradients mlp_backward(const MLPParams& params, const ForwardCache& cache,
                          const Matrix& d_latent) {
    const std::size_t n_layers = params.layers.size();
    if (cache.pre_activations.size() != n_layers || cache.post_activations.size() != n_layers) {
        throw std::invalid_argument("mlp_backward: cache does not match network depth");
    }
    if (d_latent.rows() != cache.batch_size() || d_latent.cols() != params.latent_dim()) {
        throw std::invalid_argument("mlp_backward: d_latent shape mismatch");
    }
    if (cache.input.cols() != params.input_dim()) {
        throw std::invalid_argument("mlp_backward: cache was built for a different network");
    }

    MLPGradients grads = zero_gradients_like(params);
    Matrix g = d_latent;
    for (std::size_t li = n_layers; li-- > 0;) {
        if (li != n_layers - 1) {
            // g currently holds the gradient wrt this layer's output; apply
            // the ReLU mask (derivative 0 at exact zeros).
            const Matrix& z = cache.pre_activations[li];
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (z.data()[i] <= 0.0) g.data()[i] = 0.0;
            }
        }
        const Matrix& input = (li == 0) ? cache.input : cache.post_activations[li - 1];
        grads.layers[li].weights = matmul_tn(input, g);
        grads.layers[li].biases = column_sums(g);
        if (li > 0) g = matmul_nt(g, params.layers[li].weights);
    }
    return grads;
}

std::vector<TensorRef> trainable_tensors(MLPParams& params, const std::string& prefix) {
    std::vector<TensorRef> tensors;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        tensors.push_back({prefix + ".layer" + std::to_string(l) + ".weights",
                           params.layers[l].weights.storage()});
        if (params.use_biases) {
            tensors.push_back({prefix + ".layer" + std::to_string(l) + ".biases",
                               params.layers[l].biases});
        }
    }
    return tensors;
}

std::vector<ConstTensorRef> gradient_tensors(const MLPGradients& grads, bool use_biases,
                                             const std::string& prefix) {
    std::vector<ConstTensorRef> tensors;
    for (std::size_t l = 0; l < grads.layers.size(); ++l) {
        tensors.push_back({prefix + ".layer" + std::to_string(l) + ".weights",
                           grads.layers[l].weights.storage()});
        if (use_biases) {
            tensors.push_back({prefix + ".layer" + std::to_string(l) + ".biases",
                               grads.layers[l].biases});
        }
    }
    return tensors;
}

} // namespace mcdd
