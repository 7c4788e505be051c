#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mcdd/adam.hpp"
#include "mcdd/matrix.hpp"
#include "mcdd/nn.hpp"

namespace mcdd {

/// Distance-metric layer: one isotropic Gaussian per class in latent space.
/// The effective log standard deviation is max(0, raw_log_sigma[k]), so
/// sigma_k >= 1 always; biases hold the log class priors.
struct DMLayerParams {
    Matrix means;                        // K x d
    std::vector<double> raw_log_sigma;   // K
    std::vector<double> biases;          // K

    std::size_t num_classes() const { return means.rows(); }
    std::size_t latent_dim() const { return means.cols(); }

    double log_sigma(std::size_t k) const {
        const double s = raw_log_sigma[k];
        return s > 0.0 ? s : 0.0;
    }
    double sigma(std::size_t k) const;
};

/// means ~ N(0, 0.1) seeded, raw log sigmas 0 (unit Gaussians), biases 0.
DMLayerParams init_dm_layer(std::size_t num_classes, std::size_t latent_dim,
                            std::uint64_t seed);

/// values(i, k) = squared distance of latent row i to class k's Gaussian:
/// ||x_i - mu_k||^2 / (2 sigma_k^2) + d * log(sigma_k). Non-negative.
struct DistanceScores {
    Matrix values; // N x K
};

DistanceScores compute_distances(const Matrix& latent, const DMLayerParams& head);

struct TrainConfig {
    double nu = 1.0;
    std::size_t epochs = 100;
    std::size_t batch_size = 128;
    double learning_rate = 0.01;
    std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

/// Loss value split into its two addends:
/// total = pull_in + (1/nu) * posterior, where pull_in is the mean distance
/// to the labeled class and posterior is the mean negative log posterior.
struct DMLossTerms {
    double total = 0.0;
    double pull_in = 0.0;
    double posterior = 0.0;
};

DMLossTerms mcdd_loss(const DistanceScores& dist, const DMLayerParams& head,
                      std::span<const std::size_t> labels, double nu);

struct DMLayerGradients {
    Matrix means;
    std::vector<double> raw_log_sigma;
    std::vector<double> biases;
};

struct DMBackwardResult {
    Matrix d_latent;       // N x d
    DMLayerGradients head;
};

/// Exact gradients of mcdd_loss with respect to latent rows and all head
/// parameters. The max(0, s) constraint passes zero gradient when s < 0
/// (and at s == 0, matching the ReLU convention).
DMBackwardResult mcdd_backward(const Matrix& latent, const DMLayerParams& head,
                               std::span<const std::size_t> labels, double nu);

/// argmax_k of (-D_k + b_k); ties broken by lowest class index.
std::vector<std::size_t> predict_class(const DistanceScores& dist, const DMLayerParams& head);

/// Confidence S(x) = -min_k D_k(x); higher means more in-distribution.
std::vector<double> confidence_score(const DistanceScores& dist);

std::vector<TensorRef> trainable_tensors(DMLayerParams& head, const std::string& prefix);
std::vector<ConstTensorRef> gradient_tensors(const DMLayerGradients& grads,
                                             const std::string& prefix);

struct EpochStats {
    double loss = 0.0;
    double pull_in = 0.0;
    double posterior = 0.0;
};

using TrainHistory = std::vector<EpochStats>;

struct TrainedDM {
    MLPParams network;
    DMLayerParams head;
    TrainHistory history;
};

/// Minibatch Adam on the full objective over all four parameter groups
/// (network weights and biases, means, raw log sigmas, class biases).
/// `arch` lists every layer width including the latent width last.
/// Deterministic given cfg.seed; throws NumericError on divergence.
TrainedDM train_mcdd(const Matrix& data, std::span<const std::size_t> labels,
                     std::span<const std::size_t> arch, const TrainConfig& cfg);

} // namespace mcdd
