#include "mcdd/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "mcdd/errors.hpp"
#include "mcdd/rng.hpp"

namespace mcdd {

namespace {

std::size_t count_classes(std::span<const std::size_t> labels) {
    std::size_t k = 0;
    for (std::size_t y : labels) k = std::max(k, y + 1);
    return k;
}

void check_training_inputs(const Matrix& data, std::span<const std::size_t> labels,
                           std::span<const std::size_t> arch, const TrainConfig& cfg,
                           const char* who) {
    validate(cfg);
    if (data.rows() == 0) throw std::invalid_argument(std::string(who) + ": empty dataset");
    if (!labels.empty() && labels.size() != data.rows()) {
        throw std::invalid_argument(std::string(who) + ": labels length mismatch");
    }
    if (arch.size() < 2 || arch.front() != data.cols()) {
        throw std::invalid_argument(std::string(who) + ": arch must start at the feature width");
    }
}

// Row-wise softmax with max shift; returns probabilities.
Matrix softmax_rows(const Matrix& logits) {
    Matrix probs = logits;
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        double* row = probs.data() + i * probs.cols();
        double max_logit = row[0];
        for (std::size_t k = 1; k < probs.cols(); ++k) max_logit = std::max(max_logit, row[k]);
        double denom = 0.0;
        for (std::size_t k = 0; k < probs.cols(); ++k) {
            row[k] = std::exp(row[k] - max_logit);
            denom += row[k];
        }
        for (std::size_t k = 0; k < probs.cols(); ++k) row[k] /= denom;
    }
    return probs;
}

double cross_entropy(const Matrix& probs, std::span<const std::size_t> labels) {
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        sum -= std::log(std::max(probs(i, labels[i]), 1e-300));
    }
    return sum / static_cast<double>(probs.rows());
}

} // namespace

Matrix softmax_logits(const Matrix& latent, const SoftmaxHeadParams& head) {
    if (latent.cols() != head.latent_dim()) {
        throw std::invalid_argument("softmax_logits: latent dim mismatch");
    }
    Matrix logits = matmul_nt(latent, head.weights);
    add_row_vector(logits, head.biases);
    return logits;
}

std::vector<double> msp_score(const Matrix& latent, const SoftmaxHeadParams& head) {
    const Matrix probs = softmax_rows(softmax_logits(latent, head));
    std::vector<double> scores(probs.rows(), 0.0);
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        double best = 0.0;
        for (std::size_t k = 0; k < probs.cols(); ++k) best = std::max(best, probs(i, k));
        scores[i] = best;
    }
    return scores;
}

std::vector<std::size_t> softmax_predict(const Matrix& latent, const SoftmaxHeadParams& head) {
    const Matrix logits = softmax_logits(latent, head);
    std::vector<std::size_t> labels(logits.rows(), 0);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double best = logits(i, 0);
        for (std::size_t k = 1; k < logits.cols(); ++k) {
            if (logits(i, k) > best) {
                best = logits(i, k);
                labels[i] = k;
            }
        }
    }
    return labels;
}

TrainedSoftmax train_softmax(const Matrix& data, std::span<const std::size_t> labels,
                             std::span<const std::size_t> arch, const TrainConfig& cfg) {
    check_training_inputs(data, labels, arch, cfg, "train_softmax");
    const std::size_t num_classes = count_classes(labels);

    TrainedSoftmax model;
    model.network = init_params(arch, mix_seed(cfg.seed, 1));
    model.head.weights = Matrix(num_classes, arch.back());
    model.head.biases.assign(num_classes, 0.0);

    AdamState adam = make_adam_state(cfg.learning_rate);
    const std::size_t n = data.rows();
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
            const std::size_t bn = batch_idx.size();

            ForwardCache cache;
            const Matrix latent = mlp_forward(model.network, batch, &cache);
            const Matrix probs = softmax_rows(softmax_logits(latent, model.head));
            const double loss = cross_entropy(probs, batch_labels);
            if (!std::isfinite(loss)) {
                throw NumericError("train_softmax: loss diverged at epoch " +
                                   std::to_string(epoch));
            }
            epoch_loss += loss * static_cast<double>(bn);

            Matrix d_logits = probs;
            for (std::size_t i = 0; i < bn; ++i) d_logits(i, batch_labels[i]) -= 1.0;
            d_logits *= 1.0 / static_cast<double>(bn);

            const Matrix d_head_w = matmul_tn(d_logits, latent);
            const std::vector<double> d_head_b = column_sums(d_logits);
            const Matrix d_latent = matmul(d_logits, model.head.weights);
            const MLPGradients net_grads = mlp_backward(model.network, cache, d_latent);

            std::vector<TensorRef> params = trainable_tensors(model.network, "network");
            params.push_back({"softmax.weights", model.head.weights.storage()});
            params.push_back({"softmax.biases", model.head.biases});
            std::vector<ConstTensorRef> grads =
                gradient_tensors(net_grads, model.network.use_biases, "network");
            grads.push_back({"softmax.weights", d_head_w.storage()});
            grads.push_back({"softmax.biases", d_head_b});
            adam_step(params, grads, adam);
        }
        model.loss_history.push_back(epoch_loss / static_cast<double>(n));
    }
    return model;
}

// ---- Mahalanobis ----

namespace {

// Cholesky factorization of a symmetric positive definite matrix;
// throws NumericError if a pivot is not strictly positive.
Matrix cholesky_lower(const Matrix& m) {
    const std::size_t d = m.rows();
    Matrix lower(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = m(i, j);
            for (std::size_t p = 0; p < j; ++p) sum -= lower(i, p) * lower(j, p);
            if (i == j) {
                if (!(sum > 0.0)) {
                    throw NumericError("fit_mahalanobis: covariance not positive definite "
                                       "after ridge");
                }
                lower(i, i) = std::sqrt(sum);
            } else {
                lower(i, j) = sum / lower(j, j);
            }
        }
    }
    return lower;
}

// Inverse from the Cholesky factor; the result is symmetrized exactly.
Matrix spd_inverse(const Matrix& m) {
    const std::size_t d = m.rows();
    const Matrix lower = cholesky_lower(m);
    // Invert L by forward substitution, column by column.
    Matrix linv(d, d);
    for (std::size_t col = 0; col < d; ++col) {
        linv(col, col) = 1.0 / lower(col, col);
        for (std::size_t i = col + 1; i < d; ++i) {
            double sum = 0.0;
            for (std::size_t p = col; p < i; ++p) sum += lower(i, p) * linv(p, col);
            linv(i, col) = -sum / lower(i, i);
        }
    }
    Matrix inv = matmul_tn(linv, linv);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            const double avg = 0.5 * (inv(i, j) + inv(j, i));
            inv(i, j) = avg;
            inv(j, i) = avg;
        }
    }
    return inv;
}

} // namespace

MahalanobisStats fit_mahalanobis(const Matrix& latent, std::span<const std::size_t> labels) {
    if (labels.size() != latent.rows() || latent.rows() == 0) {
        throw std::invalid_argument("fit_mahalanobis: bad inputs");
    }
    const std::size_t num_classes = count_classes(labels);
    const std::size_t d = latent.cols();
    const std::size_t n = latent.rows();

    std::vector<std::size_t> counts(num_classes, 0);
    for (std::size_t y : labels) counts[y] += 1;
    for (std::size_t k = 0; k < num_classes; ++k) {
        if (counts[k] < 2) {
            throw std::invalid_argument("fit_mahalanobis: class " + std::to_string(k) +
                                        " needs at least 2 samples");
        }
    }

    MahalanobisStats stats;
    stats.class_means = Matrix(num_classes, d);
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = latent.data() + i * d;
        double* mu = stats.class_means.data() + labels[i] * d;
        for (std::size_t c = 0; c < d; ++c) mu[c] += x[c];
    }
    for (std::size_t k = 0; k < num_classes; ++k) {
        double* mu = stats.class_means.data() + k * d;
        for (std::size_t c = 0; c < d; ++c) mu[c] /= static_cast<double>(counts[k]);
    }

    Matrix centered(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = latent.data() + i * d;
        const double* mu = stats.class_means.data() + labels[i] * d;
        double* out = centered.data() + i * d;
        for (std::size_t c = 0; c < d; ++c) out[c] = x[c] - mu[c];
    }
    stats.tied_covariance = matmul_tn(centered, centered);
    stats.tied_covariance *= 1.0 / static_cast<double>(n);

    double trace = 0.0;
    for (std::size_t c = 0; c < d; ++c) trace += stats.tied_covariance(c, c);
    double ridge = 1e-6 * trace / static_cast<double>(d);
    if (ridge == 0.0) ridge = 1e-12;

    Matrix ridged = stats.tied_covariance;
    for (std::size_t c = 0; c < d; ++c) ridged(c, c) += ridge;
    stats.precision = spd_inverse(ridged);
    return stats;
}

namespace {

// Squared Mahalanobis distances of every row to every class mean.
Matrix mahalanobis_sq(const Matrix& latent, const MahalanobisStats& stats) {
    if (latent.cols() != stats.class_means.cols()) {
        throw std::invalid_argument("mahalanobis: latent dim mismatch");
    }
    const std::size_t n = latent.rows();
    const std::size_t d = latent.cols();
    const std::size_t k_classes = stats.class_means.rows();
    Matrix out(n, k_classes);
    for (std::size_t k = 0; k < k_classes; ++k) {
        Matrix diff = latent;
        const double* mu = stats.class_means.data() + k * d;
        for (std::size_t i = 0; i < n; ++i) {
            double* row = diff.data() + i * d;
            for (std::size_t c = 0; c < d; ++c) row[c] -= mu[c];
        }
        const Matrix proj = matmul(diff, stats.precision);
        for (std::size_t i = 0; i < n; ++i) {
            double q = 0.0;
            const double* a = diff.data() + i * d;
            const double* b = proj.data() + i * d;
            for (std::size_t c = 0; c < d; ++c) q += a[c] * b[c];
            out(i, k) = q;
        }
    }
    return out;
}

} // namespace

std::vector<double> mahalanobis_score(const Matrix& latent, const MahalanobisStats& stats) {
    const Matrix sq = mahalanobis_sq(latent, stats);
    std::vector<double> scores(sq.rows(), 0.0);
    for (std::size_t i = 0; i < sq.rows(); ++i) {
        double lowest = sq(i, 0);
        for (std::size_t k = 1; k < sq.cols(); ++k) lowest = std::min(lowest, sq(i, k));
        scores[i] = -lowest;
    }
    return scores;
}

std::vector<std::size_t> mahalanobis_predict(const Matrix& latent,
                                             const MahalanobisStats& stats) {
    const Matrix sq = mahalanobis_sq(latent, stats);
    std::vector<std::size_t> labels(sq.rows(), 0);
    for (std::size_t i = 0; i < sq.rows(); ++i) {
        double lowest = sq(i, 0);
        for (std::size_t k = 1; k < sq.cols(); ++k) {
            if (sq(i, k) < lowest) {
                lowest = sq(i, k);
                labels[i] = k;
            }
        }
    }
    return labels;
}

// ---- Deep one-class detector ----

TrainedSVDD train_deep_svdd(const Matrix& data, std::span<const std::size_t> arch,
                            const TrainConfig& cfg) {
    check_training_inputs(data, {}, arch, cfg, "train_deep_svdd");

    TrainedSVDD model;
    model.network = init_params(arch, mix_seed(cfg.seed, 1));
    // A constant-output network satisfies the objective trivially; removing
    // biases and freezing the center are the standard safeguards.
    model.network.use_biases = false;

    const std::size_t n = data.rows();
    const std::size_t d = arch.back();
    {
        // Running mean: exact when every latent coincides, so fully collapsed
        // data leaves zero gradients and the network genuinely frozen.
        const Matrix latents = mlp_forward(model.network, data);
        model.params.center.assign(d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = latents.data() + i * d;
            for (std::size_t c = 0; c < d; ++c) {
                model.params.center[c] += (x[c] - model.params.center[c]) /
                                          static_cast<double>(i + 1);
            }
        }
    }

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
            const std::size_t bn = batch_idx.size();

            ForwardCache cache;
            const Matrix latent = mlp_forward(model.network, batch, &cache);
            double loss = 0.0;
            Matrix d_latent(bn, d);
            for (std::size_t i = 0; i < bn; ++i) {
                const double* x = latent.data() + i * d;
                double* g = d_latent.data() + i * d;
                for (std::size_t c = 0; c < d; ++c) {
                    const double diff = x[c] - model.params.center[c];
                    loss += diff * diff;
                    g[c] = 2.0 * diff / static_cast<double>(bn);
                }
            }
            loss /= static_cast<double>(bn);
            if (!std::isfinite(loss)) {
                throw NumericError("train_deep_svdd: loss diverged at epoch " +
                                   std::to_string(epoch));
            }
            epoch_loss += loss * static_cast<double>(bn);

            const MLPGradients net_grads = mlp_backward(model.network, cache, d_latent);
            const std::vector<TensorRef> params = trainable_tensors(model.network, "network");
            const std::vector<ConstTensorRef> grads =
                gradient_tensors(net_grads, model.network.use_biases, "network");
            adam_step(params, grads, adam);
        }
        model.loss_history.push_back(epoch_loss / static_cast<double>(n));
    }
    return model;
}

std::vector<double> svdd_score(const Matrix& latent, std::span<const double> center) {
    if (latent.cols() != center.size()) {
        throw std::invalid_argument("svdd_score: latent dim mismatch");
    }
    std::vector<double> scores(latent.rows(), 0.0);
    for (std::size_t i = 0; i < latent.rows(); ++i) {
        scores[i] = -squared_distance(latent.row(i), center);
    }
    return scores;
}

// ---- Distance classifier over learned centers ----

TrainedEuclid train_euclid_classifier(const Matrix& data, std::span<const std::size_t> labels,
                                      std::span<const std::size_t> arch,
                                      const TrainConfig& cfg) {
    check_training_inputs(data, labels, arch, cfg, "train_euclid_classifier");
    const std::size_t num_classes = count_classes(labels);
    const std::size_t d = arch.back();

    TrainedEuclid model;
    model.network = init_params(arch, mix_seed(cfg.seed, 1));
    model.centers = Matrix(num_classes, d);

    AdamState adam = make_adam_state(cfg.learning_rate);
    const std::size_t n = data.rows();
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
            const std::size_t bn = batch_idx.size();

            ForwardCache cache;
            const Matrix latent = mlp_forward(model.network, batch, &cache);
            Matrix logits(bn, num_classes);
            for (std::size_t i = 0; i < bn; ++i) {
                for (std::size_t k = 0; k < num_classes; ++k) {
                    logits(i, k) = -squared_distance(latent.row(i), model.centers.row(k));
                }
            }
            const Matrix probs = softmax_rows(logits);
            const double loss = cross_entropy(probs, batch_labels);
            if (!std::isfinite(loss)) {
                throw NumericError("train_euclid_classifier: loss diverged at epoch " +
                                   std::to_string(epoch));
            }
            epoch_loss += loss * static_cast<double>(bn);

            Matrix d_logits = probs;
            for (std::size_t i = 0; i < bn; ++i) d_logits(i, batch_labels[i]) -= 1.0;
            d_logits *= 1.0 / static_cast<double>(bn);

            Matrix d_latent(bn, d);
            Matrix d_centers(num_classes, d);
            for (std::size_t i = 0; i < bn; ++i) {
                const double* x = latent.data() + i * d;
                double* gx = d_latent.data() + i * d;
                for (std::size_t k = 0; k < num_classes; ++k) {
                    const double g = d_logits(i, k);
                    if (g == 0.0) continue;
                    const double* c = model.centers.data() + k * d;
                    double* gc = d_centers.data() + k * d;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double diff = x[j] - c[j];
                        gx[j] -= 2.0 * g * diff;
                        gc[j] += 2.0 * g * diff;
                    }
                }
            }

            const MLPGradients net_grads = mlp_backward(model.network, cache, d_latent);
            std::vector<TensorRef> params = trainable_tensors(model.network, "network");
            params.push_back({"euclid.centers", model.centers.storage()});
            std::vector<ConstTensorRef> grads =
                gradient_tensors(net_grads, model.network.use_biases, "network");
            grads.push_back({"euclid.centers", d_centers.storage()});
            adam_step(params, grads, adam);
        }
        model.loss_history.push_back(epoch_loss / static_cast<double>(n));
    }
    return model;
}

std::vector<double> euclid_score(const Matrix& latent, const Matrix& centers) {
    if (latent.cols() != centers.cols()) {
        throw std::invalid_argument("euclid_score: latent dim mismatch");
    }
    std::vector<double> scores(latent.rows(), 0.0);
    for (std::size_t i = 0; i < latent.rows(); ++i) {
        double lowest = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < centers.rows(); ++k) {
            lowest = std::min(lowest, squared_distance(latent.row(i), centers.row(k)));
        }
        scores[i] = -lowest;
    }
    return scores;
}

std::vector<std::size_t> euclid_predict(const Matrix& latent, const Matrix& centers) {
    if (latent.cols() != centers.cols()) {
        throw std::invalid_argument("euclid_predict: latent dim mismatch");
    }
    std::vector<std::size_t> labels(latent.rows(), 0);
    for (std::size_t i = 0; i < latent.rows(); ++i) {
        double lowest = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < centers.rows(); ++k) {
            const double sq = squared_distance(latent.row(i), centers.row(k));
            if (sq < lowest) {
                lowest = sq;
                labels[i] = k;
            }
        }
    }
    return labels;
}

} // namespace mcdd
