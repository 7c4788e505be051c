#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mcdd/adam.hpp"
#include "mcdd/matrix.hpp"

namespace mcdd {

enum class Activation { kRelu };

/// One affine layer: weights are (d_in x d_out), biases d_out.
struct DenseLayerParams {
    Matrix weights;
    std::vector<double> biases;
};

/// Feature extractor f(.; W): a stack of affine layers with ReLU between
/// them and no activation after the last. The last layer's width is the
/// latent dimension.
struct MLPParams {
    std::vector<DenseLayerParams> layers;
    Activation activation = Activation::kRelu;
    bool use_biases = true;

    std::size_t input_dim() const { return layers.front().weights.rows(); }
    std::size_t latent_dim() const { return layers.back().weights.cols(); }
    std::vector<std::size_t> layer_dims() const;
};

/// Per-layer pre/post activations for one batch; exactly what backprop needs.
struct ForwardCache {
    Matrix input;
    std::vector<Matrix> pre_activations;
    std::vector<Matrix> post_activations;

    std::size_t batch_size() const { return input.rows(); }
    const Matrix& latent() const { return post_activations.back(); }
};

/// Gradients mirror the parameter shapes.
struct MLPGradients {
    std::vector<DenseLayerParams> layers;
};

/// He-style initialization: weights ~ N(0, sqrt(2/d_in)), biases 0.
/// Identical (dims, seed) pairs produce bit-identical parameters.
MLPParams init_params(std::span<const std::size_t> layer_dims, std::uint64_t seed);

/// Forward pass; fills `cache` (if non-null) for an exact backward pass.
Matrix mlp_forward(const MLPParams& params, const Matrix& batch, ForwardCache* cache = nullptr);

/// Exact gradient of sum_i <d_latent_i, latent_i> with respect to every
/// weight and bias. ReLU subgradient at 0 is 0.
MLPGradients mlp_backward(const MLPParams& params, const ForwardCache& cache,
                          const Matrix& d_latent);

MLPGradients zero_gradients_like(const MLPParams& params);

/// Flattened tensor views for the optimizer; order is layer 0 weights,
/// layer 0 biases, layer 1 weights, ... Bias tensors are omitted when
/// use_biases is false.
std::vector<TensorRef> trainable_tensors(MLPParams& params, const std::string& prefix);
std::vector<ConstTensorRef> gradient_tensors(const MLPGradients& grads, bool use_biases,
                                             const std::string& prefix);

} // namespace mcdd
