#include "mcdd/dm_head.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mcdd/errors.hpp"
#include "mcdd/rng.hpp"

namespace mcdd {

namespace {

void check_labels(std::span<const std::size_t> labels, std::size_t num_classes,
                  std::size_t n_rows) {
    if (labels.size() != n_rows) {
        throw std::invalid_argument("labels length does not match batch rows");
    }
    for (std::size_t y : labels) {
        if (y >= num_classes) {
            throw std::invalid_argument("label " + std::to_string(y) + " out of range [0, " +
                                        std::to_string(num_classes) + ")");
        }
    }
}

// Softmax of (-D + b) per row, numerically stabilized.
Matrix posterior_probabilities(const DistanceScores& dist, const DMLayerParams& head) {
    const std::size_t n = dist.values.rows();
    const std::size_t k_classes = dist.values.cols();
    Matrix probs(n, k_classes);
    for (std::size_t i = 0; i < n; ++i) {
        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < k_classes; ++k) {
            const double logit = -dist.values(i, k) + head.biases[k];
            probs(i, k) = logit;
            max_logit = std::max(max_logit, logit);
        }
        double denom = 0.0;
        for (std::size_t k = 0; k < k_classes; ++k) {
            probs(i, k) = std::exp(probs(i, k) - max_logit);
            denom += probs(i, k);
        }
        for (std::size_t k = 0; k < k_classes; ++k) probs(i, k) /= denom;
    }
    return probs;
}

} // namespace

double DMLayerParams::sigma(std::size_t k) const { return std::exp(log_sigma(k)); }

DMLayerParams init_dm_layer(std::size_t num_classes, std::size_t latent_dim,
                            std::uint64_t seed) {
    if (num_classes == 0 || latent_dim == 0) {
        throw std::invalid_argument("init_dm_layer: counts must be positive");
    }
    DMLayerParams head;
    head.means = Matrix(num_classes, latent_dim);
    Rng rng(mix_seed(seed, 0x646d5f6c61796572ULL));
    for (std::size_t i = 0; i < head.means.size(); ++i) {
        head.means.data()[i] = rng.normal(0.0, 0.1);
    }
    head.raw_log_sigma.assign(num_classes, 0.0);
    head.biases.assign(num_classes, 0.0);
    return head;
}

DistanceScores compute_distances(const Matrix& latent, const DMLayerParams& head) {
    if (latent.cols() != head.latent_dim()) {
        throw std::invalid_argument("compute_distances: latent dim mismatch");
    }
    if (!latent.all_finite()) {
        throw NumericError("compute_distances: non-finite latent input");
    }
    const std::size_t n = latent.rows();
    const std::size_t k_classes = head.num_classes();
    const std::size_t d = head.latent_dim();
    DistanceScores dist{Matrix(n, k_classes)};
    for (std::size_t k = 0; k < k_classes; ++k) {
        const double log_sigma = head.log_sigma(k);
        const double inv_two_var = 0.5 * std::exp(-2.0 * log_sigma);
        const double log_term = static_cast<double>(d) * log_sigma;
        const double* mu = head.means.data() + k * d;
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = latent.data() + i * d;
            double sq = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = x[c] - mu[c];
                sq += diff * diff;
            }
            dist.values(i, k) = sq * inv_two_var + log_term;
        }
    }
    return dist;
}

void validate(const TrainConfig& cfg) {
    if (!(cfg.nu > 0.0)) throw std::invalid_argument("TrainConfig: nu must be > 0");
    if (cfg.epochs == 0) throw std::invalid_argument("TrainConfig: epochs must be positive");
    if (cfg.batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    if (!(cfg.learning_rate > 0.0)) {
        throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    }
}

DMLossTerms mcdd_loss(const DistanceScores& dist, const DMLayerParams& head,
                      std::span<const std::size_t> labels, double nu) {
    if (!(nu > 0.0)) throw std::invalid_argument("mcdd_loss: nu must be > 0");
    const std::size_t n = dist.values.rows();
    const std::size_t k_classes = dist.values.cols();
    check_labels(labels, k_classes, n);

    double pull_sum = 0.0;
    double post_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        pull_sum += dist.values(i, labels[i]);
        // -log softmax_k(-D_k + b_k) at k = y_i, via a shifted log-sum-exp.
        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < k_classes; ++k) {
            max_logit = std::max(max_logit, -dist.values(i, k) + head.biases[k]);
        }
        double sum_exp = 0.0;
        for (std::size_t k = 0; k < k_classes; ++k) {
            sum_exp += std::exp(-dist.values(i, k) + head.biases[k] - max_logit);
        }
        const double log_denom = max_logit + std::log(sum_exp);
        post_sum += log_denom - (-dist.values(i, labels[i]) + head.biases[labels[i]]);
    }
    DMLossTerms terms;
    terms.pull_in = pull_sum / static_cast<double>(n);
    terms.posterior = post_sum / static_cast<double>(n);
    terms.total = terms.pull_in + terms.posterior / nu;
    return terms;
}

DMBackwardResult mcdd_backward(const Matrix& latent, const DMLayerParams& head,
                               std::span<const std::size_t> labels, double nu) {
    if (!(nu > 0.0)) throw std::invalid_argument("mcdd_backward: nu must be > 0");
    const std::size_t n = latent.rows();
    const std::size_t k_classes = head.num_classes();
    const std::size_t d = head.latent_dim();
    check_labels(labels, k_classes, n);

    const DistanceScores dist = compute_distances(latent, head);
    const Matrix probs = posterior_probabilities(dist, head);

    DMBackwardResult result;
    result.d_latent = Matrix(n, d);
    result.head.means = Matrix(k_classes, d);
    result.head.raw_log_sigma.assign(k_classes, 0.0);
    result.head.biases.assign(k_classes, 0.0);

    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < k_classes; ++k) {
        const double log_sigma = head.log_sigma(k);
        const double inv_var = std::exp(-2.0 * log_sigma);
        const bool sigma_active = head.raw_log_sigma[k] > 0.0;
        const double* mu = head.means.data() + k * d;
        double* dmu = result.head.means.data() + k * d;
        double ds_k = 0.0;
        double db_k = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double p_term = (probs(i, k) - (labels[i] == k ? 1.0 : 0.0)) * inv_n / nu;
            // dL/dD(i,k): the pull term contributes only at the labeled class,
            // the posterior term through the softmax over logits -D + b.
            const double g = (labels[i] == k ? inv_n : 0.0) - p_term;
            db_k += p_term;
            const double* x = latent.data() + i * d;
            double* dx = result.d_latent.data() + i * d;
            double sq = 0.0;
            const double scale = g * inv_var;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = x[c] - mu[c];
                sq += diff * diff;
                dx[c] += scale * diff;
                dmu[c] -= scale * diff;
            }
            if (sigma_active) {
                ds_k += g * (static_cast<double>(d) - sq * inv_var);
            }
        }
        result.head.raw_log_sigma[k] = ds_k;
        result.head.biases[k] = db_k;
    }
    return result;
}

std::vector<std::size_t> predict_class(const DistanceScores& dist, const DMLayerParams& head) {
    if (dist.values.cols() != head.num_classes()) {
        throw std::invalid_argument("predict_class: class count mismatch");
    }
    const std::size_t n = dist.values.rows();
    std::vector<std::size_t> labels(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        double best = -dist.values(i, 0) + head.biases[0];
        for (std::size_t k = 1; k < head.num_classes(); ++k) {
            const double score = -dist.values(i, k) + head.biases[k];
            if (score > best) {
                best = score;
                labels[i] = k;
            }
        }
    }
    return labels;
}

std::vector<double> confidence_score(const DistanceScores& dist) {
    const std::size_t n = dist.values.rows();
    std::vector<double> scores(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double lowest = dist.values(i, 0);
        for (std::size_t k = 1; k < dist.values.cols(); ++k) {
            lowest = std::min(lowest, dist.values(i, k));
        }
        scores[i] = -lowest;
    }
    return scores;
}

std::vector<TensorRef> trainable_tensors(DMLayerParams& head, const std::string& prefix) {
    return {
        {prefix + ".means", head.means.storage()},
        {prefix + ".raw_log_sigma", head.raw_log_sigma},
        {prefix + ".biases", head.biases},
    };
}

std::vector<ConstTensorRef> gradient_tensors(const DMLayerGradients& grads,
                                             const std::string& prefix) {
    return {
        {prefix + ".means", grads.means.storage()},
        {prefix + ".raw_log_sigma", grads.raw_log_sigma},
        {prefix + ".biases", grads.biases},
    };
}

TrainedDM train_mcdd(const Matrix& data, std::span<const std::size_t> labels,
                     std::span<const std::size_t> arch, const TrainConfig& cfg) {
    validate(cfg);
    if (data.rows() == 0) throw std::invalid_argument("train_mcdd: empty dataset");
    if (labels.size() != data.rows()) {
        throw std::invalid_argument("train_mcdd: labels length mismatch");
    }
    if (arch.size() < 2 || arch.front() != data.cols()) {
        throw std::invalid_argument("train_mcdd: arch must start at the feature width");
    }
    std::size_t num_classes = 0;
    for (std::size_t y : labels) num_classes = std::max(num_classes, y + 1);

    TrainedDM model;
    model.network = init_params(arch, mix_seed(cfg.seed, 1));
    model.head = init_dm_layer(num_classes, arch.back(), mix_seed(cfg.seed, 2));

    AdamState adam = make_adam_state(cfg.learning_rate);

    const std::size_t n = data.rows();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(cfg.seed, 3, epoch));
        shuffle_rng.shuffle(order);

        EpochStats stats;
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
            const DistanceScores dist = compute_distances(latent, model.head);
            const DMLossTerms terms = mcdd_loss(dist, model.head, batch_labels, cfg.nu);
            if (!std::isfinite(terms.total)) {
                throw NumericError("train_mcdd: loss diverged at epoch " + std::to_string(epoch));
            }
            const double weight = static_cast<double>(batch_idx.size());
            stats.loss += terms.total * weight;
            stats.pull_in += terms.pull_in * weight;
            stats.posterior += terms.posterior * weight;

            const DMBackwardResult back = mcdd_backward(latent, model.head, batch_labels, cfg.nu);
            const MLPGradients net_grads = mlp_backward(model.network, cache, back.d_latent);

            std::vector<TensorRef> params = trainable_tensors(model.network, "network");
            for (auto& t : trainable_tensors(model.head, "dm")) params.push_back(t);
            std::vector<ConstTensorRef> grads =
                gradient_tensors(net_grads, model.network.use_biases, "network");
            for (auto& t : gradient_tensors(back.head, "dm")) grads.push_back(t);
            adam_step(params, grads, adam);
        }
        stats.loss /= static_cast<double>(n);
        stats.pull_in /= static_cast<double>(n);
        stats.posterior /= static_cast<double>(n);
        model.history.push_back(stats);
    }
    return model;
}

} // namespace mcdd
