#include "mcdd/soft_boundary.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mcdd/errors.hpp"
#include "mcdd/rng.hpp"

namespace mcdd {

namespace {

void check_soft_inputs(const Matrix& latent, std::span<const std::size_t> labels,
                       const SphereParams& spheres, double nu) {
    if (!(nu > 0.0) || nu > 1.0) {
        throw std::invalid_argument("soft boundary: nu must be in (0, 1]");
    }
    if (latent.cols() != spheres.latent_dim()) {
        throw std::invalid_argument("soft boundary: latent dim mismatch");
    }
    if (labels.size() != latent.rows()) {
        throw std::invalid_argument("soft boundary: labels length mismatch");
    }
    for (std::size_t y : labels) {
        if (y >= spheres.num_classes()) {
            throw std::invalid_argument("soft boundary: label out of range");
        }
    }
}

} // namespace

double soft_boundary_loss(const Matrix& latent, std::span<const std::size_t> labels,
                          const SphereParams& spheres, double nu) {
    check_soft_inputs(latent, labels, spheres, nu);
    const std::size_t n = latent.rows();
    const std::size_t k_classes = spheres.num_classes();
    double loss = 0.0;
    for (std::size_t k = 0; k < k_classes; ++k) {
        const double r_sq = spheres.radii[k] * spheres.radii[k];
        double hinge_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double sq = squared_distance(latent.row(i), spheres.centers.row(k));
            const double sign = (labels[i] == k) ? 1.0 : -1.0;
            const double margin = sign * (sq - r_sq);
            if (margin > 0.0) hinge_sum += margin;
        }
        loss += r_sq + hinge_sum / (nu * static_cast<double>(n));
    }
    return loss;
}

Matrix soft_boundary_backward(const Matrix& latent, std::span<const std::size_t> labels,
                              const SphereParams& spheres, double nu) {
    check_soft_inputs(latent, labels, spheres, nu);
    const std::size_t n = latent.rows();
    const std::size_t d = latent.cols();
    Matrix d_latent(n, d);
    const double scale = 1.0 / (nu * static_cast<double>(n));
    for (std::size_t k = 0; k < spheres.num_classes(); ++k) {
        const double r_sq = spheres.radii[k] * spheres.radii[k];
        const double* c = spheres.centers.data() + k * d;
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = latent.data() + i * d;
            double sq = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = x[j] - c[j];
                sq += diff * diff;
            }
            const double sign = (labels[i] == k) ? 1.0 : -1.0;
            if (sign * (sq - r_sq) > 0.0) {
                double* g = d_latent.data() + i * d;
                const double factor = scale * sign * 2.0;
                for (std::size_t j = 0; j < d; ++j) g[j] += factor * (x[j] - c[j]);
            }
        }
    }
    return d_latent;
}

double quantile_nearest_rank(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("quantile_nearest_rank: empty values");
    if (!(q >= 0.0) || q > 1.0) {
        throw std::invalid_argument("quantile_nearest_rank: q must be in [0, 1]");
    }
    std::sort(values.begin(), values.end());
    std::size_t rank =
        static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

SphereParams update_spheres(const Matrix& latent, std::span<const std::size_t> labels,
                            double nu) {
    if (!(nu > 0.0) || nu > 1.0) {
        throw std::invalid_argument("update_spheres: nu must be in (0, 1]");
    }
    if (labels.size() != latent.rows()) {
        throw std::invalid_argument("update_spheres: labels length mismatch");
    }
    std::size_t k_classes = 0;
    for (std::size_t y : labels) k_classes = std::max(k_classes, y + 1);
    if (k_classes == 0) throw std::invalid_argument("update_spheres: empty batch");

    const std::size_t d = latent.cols();
    SphereParams spheres;
    spheres.centers = Matrix(k_classes, d);
    spheres.radii.assign(k_classes, 0.0);

    for (std::size_t k = 0; k < k_classes; ++k) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == k) members.push_back(i);
        }
        if (members.empty()) {
            throw std::invalid_argument("update_spheres: class " + std::to_string(k) +
                                        " has no samples");
        }
        double* c = spheres.centers.data() + k * d;
        for (std::size_t i : members) {
            const double* x = latent.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) c[j] += x[j];
        }
        for (std::size_t j = 0; j < d; ++j) c[j] /= static_cast<double>(members.size());

        std::vector<double> distances;
        distances.reserve(members.size());
        for (std::size_t i : members) {
            distances.push_back(std::sqrt(squared_distance(latent.row(i), spheres.centers.row(k))));
        }
        // nu = 1 degenerates to the minimum distance.
        spheres.radii[k] = quantile_nearest_rank(std::move(distances), 1.0 - nu);
    }
    return spheres;
}

std::vector<double> soft_confidence_score(const Matrix& latent, const SphereParams& spheres) {
    if (latent.cols() != spheres.latent_dim()) {
        throw std::invalid_argument("soft_confidence_score: latent dim mismatch");
    }
    std::vector<double> scores(latent.rows(), 0.0);
    for (std::size_t i = 0; i < latent.rows(); ++i) {
        double lowest = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < spheres.num_classes(); ++k) {
            const double sq = squared_distance(latent.row(i), spheres.centers.row(k));
            lowest = std::min(lowest, sq - spheres.radii[k] * spheres.radii[k]);
        }
        scores[i] = -lowest;
    }
    return scores;
}

TrainedSoft bcd_train(const Matrix& data, std::span<const std::size_t> labels,
                      std::span<const std::size_t> arch, const TrainConfig& cfg,
                      std::size_t epochs_per_sphere_update) {
    validate(cfg);
    if (!(cfg.nu <= 1.0)) throw std::invalid_argument("bcd_train: nu must be in (0, 1]");
    if (epochs_per_sphere_update == 0) {
        throw std::invalid_argument("bcd_train: epochs_per_sphere_update must be positive");
    }
    if (labels.size() != data.rows() || data.rows() == 0) {
        throw std::invalid_argument("bcd_train: bad dataset");
    }
    if (arch.size() < 2 || arch.front() != data.cols()) {
        throw std::invalid_argument("bcd_train: arch must start at the feature width");
    }

    TrainedSoft model;
    model.network = init_params(arch, mix_seed(cfg.seed, 1));

    const std::size_t n = data.rows();
    const auto refresh_spheres = [&]() {
        const Matrix latents = mlp_forward(model.network, data);
        model.spheres = update_spheres(latents, labels, cfg.nu);
    };
    refresh_spheres();

    AdamState adam = make_adam_state(cfg.learning_rate);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(cfg.seed, 3, epoch));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const std::span<const std::size_t> batch_idx(order.data() + start, stop - start);
            const Matrix batch = data.gather_rows(batch_idx);
            std::vector<std::size_t> batch_labels(batch_idx.size());
            for (std::size_t i = 0; i < batch_idx.size(); ++i) {
                batch_labels[i] = labels[batch_idx[i]];
            }

            ForwardCache cache;
            const Matrix latent = mlp_forward(model.network, batch, &cache);
            const double loss = soft_boundary_loss(latent, batch_labels, model.spheres, cfg.nu);
            if (!std::isfinite(loss)) {
                throw NumericError("bcd_train: loss diverged at epoch " + std::to_string(epoch));
            }
            epoch_loss += loss * static_cast<double>(batch_idx.size());

            const Matrix d_latent =
                soft_boundary_backward(latent, batch_labels, model.spheres, cfg.nu);
            const MLPGradients net_grads = mlp_backward(model.network, cache, d_latent);
            const std::vector<TensorRef> params = trainable_tensors(model.network, "network");
            const std::vector<ConstTensorRef> grads =
                gradient_tensors(net_grads, model.network.use_biases, "network");
            adam_step(params, grads, adam);
        }
        model.loss_history.push_back(epoch_loss / static_cast<double>(n));

        if ((epoch + 1) % epochs_per_sphere_update == 0) refresh_spheres();
    }
    return model;
}

} // namespace mcdd
