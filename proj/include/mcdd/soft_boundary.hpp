#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mcdd/dm_head.hpp"
#include "mcdd/matrix.hpp"
#include "mcdd/nn.hpp"

namespace mcdd {

/// One hypersphere per class: centers c_k (K x d) and radii R_k >= 0.
struct SphereParams {
    Matrix centers;
    std::vector<double> radii;

    std::size_t num_classes() const { return centers.rows(); }
    std::size_t latent_dim() const { return centers.cols(); }
};

/// sum_k [ R_k^2 + (1/(nu N)) sum_i max{0, a_ik (||f_i - c_k||^2 - R_k^2)} ]
/// where a_ik is +1 for the sample's own class and -1 otherwise.
/// Requires nu in (0, 1].
double soft_boundary_loss(const Matrix& latent, std::span<const std::size_t> labels,
                          const SphereParams& spheres, double nu);

/// Gradient of soft_boundary_loss with respect to the latent rows, spheres
/// fixed. The hinge subgradient at exactly zero is zero.
Matrix soft_boundary_backward(const Matrix& latent, std::span<const std::size_t> labels,
                              const SphereParams& spheres, double nu);

/// Nearest-rank quantile over unsorted values: the ceil(q*n)-th smallest,
/// clamped to the first for q = 0. The radius rule below uses q = 1 - nu.
double quantile_nearest_rank(std::vector<double> values, double q);

/// Block update with the network fixed: centers become class means and each
/// radius the (1 - nu) nearest-rank quantile of its class's Euclidean
/// distances to the new center. Every class must be non-empty.
SphereParams update_spheres(const Matrix& latent, std::span<const std::size_t> labels,
                            double nu);

/// S(x) = -min_k (||f(x) - c_k||^2 - R_k^2); higher means more ID.
std::vector<double> soft_confidence_score(const Matrix& latent, const SphereParams& spheres);

struct TrainedSoft {
    MLPParams network;
    SphereParams spheres;
    std::vector<double> loss_history; // per-epoch mean objective
};

/// Block coordinate descent: `epochs_per_sphere_update` network epochs on
/// the hinge objective alternate with one update_spheres call, starting
/// from spheres fitted to the freshly initialized network.
TrainedSoft bcd_train(const Matrix& data, std::span<const std::size_t> labels,
                      std::span<const std::size_t> arch, const TrainConfig& cfg,
                      std::size_t epochs_per_sphere_update = 10);

} // namespace mcdd
