#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mcdd/dm_head.hpp"
#include "mcdd/matrix.hpp"
#include "mcdd/nn.hpp"

namespace mcdd {

// ---- Softmax classifier with max-softmax-probability confidence ----

struct SoftmaxHeadParams {
    Matrix weights;              // K x d
    std::vector<double> biases;  // K

    std::size_t num_classes() const { return weights.rows(); }
    std::size_t latent_dim() const { return weights.cols(); }
};

struct TrainedSoftmax {
    MLPParams network;
    SoftmaxHeadParams head;
    std::vector<double> loss_history;
};

/// Cross-entropy training of the shared extractor plus a linear head.
/// The head starts at zero, which keeps class relabelings exactly symmetric.
TrainedSoftmax train_softmax(const Matrix& data, std::span<const std::size_t> labels,
                             std::span<const std::size_t> arch, const TrainConfig& cfg);

Matrix softmax_logits(const Matrix& latent, const SoftmaxHeadParams& head);

/// Per-row max softmax probability; in (0, 1].
std::vector<double> msp_score(const Matrix& latent, const SoftmaxHeadParams& head);

std::vector<std::size_t> softmax_predict(const Matrix& latent, const SoftmaxHeadParams& head);

// ---- Tied-covariance Mahalanobis on a trained extractor ----

struct MahalanobisStats {
    Matrix class_means;      // K x d
    Matrix tied_covariance;  // d x d
    Matrix precision;        // d x d, inverse of the ridged covariance
};

/// Empirical class means and the tied covariance
/// (1/N) sum_k sum_{i in k} (f_i - mean_k)(f_i - mean_k)^T, inverted after
/// adding ridge eps*I with eps = 1e-6 * trace / d (tiny absolute floor when
/// the trace is exactly zero). Needs at least 2 samples per class.
MahalanobisStats fit_mahalanobis(const Matrix& latent, std::span<const std::size_t> labels);

/// -min_k squared Mahalanobis distance to a class mean.
std::vector<double> mahalanobis_score(const Matrix& latent, const MahalanobisStats& stats);

std::vector<std::size_t> mahalanobis_predict(const Matrix& latent,
                                             const MahalanobisStats& stats);

// ---- Deep one-class detector (single hypersphere) ----

struct SVDDParams {
    std::vector<double> center; // frozen after initialization
};

struct TrainedSVDD {
    MLPParams network; // bias-free
    SVDDParams params;
    std::vector<double> loss_history;
};

/// Trains a bias-free extractor to contract all samples toward a center
/// fixed from the initial forward pass; labels are ignored.
TrainedSVDD train_deep_svdd(const Matrix& data, std::span<const std::size_t> arch,
                            const TrainConfig& cfg);

/// -||f(x) - c||^2.
std::vector<double> svdd_score(const Matrix& latent, std::span<const double> center);

// ---- Distance classifier over learned class centers ----

struct TrainedEuclid {
    MLPParams network;
    Matrix centers; // K x d
    std::vector<double> loss_history;
};

/// Centers train jointly with the network by cross-entropy over logits
/// -||f(x) - c_k||^2.
TrainedEuclid train_euclid_classifier(const Matrix& data, std::span<const std::size_t> labels,
                                      std::span<const std::size_t> arch,
                                      const TrainConfig& cfg);

/// -min_k ||f(x) - c_k||^2.
std::vector<double> euclid_score(const Matrix& latent, const Matrix& centers);

/// Nearest center; ties broken by lowest class index.
std::vector<std::size_t> euclid_predict(const Matrix& latent, const Matrix& centers);

} // namespace mcdd
