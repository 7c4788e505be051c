#include "mcdd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mcdd/errors.hpp"
#include "mcdd/matrix.hpp"

namespace mcdd {

namespace {

void check_scores(const ScoreSet& scores) {
    if (scores.id_scores.empty() || scores.ood_scores.empty()) {
        throw std::invalid_argument("ScoreSet: both score lists must be non-empty");
    }
    if (!all_finite(scores.id_scores) || !all_finite(scores.ood_scores)) {
        throw NumericError("ScoreSet: non-finite score");
    }
}

// Distinct score values, descending.
std::vector<double> distinct_thresholds(const ScoreSet& scores) {
    std::vector<double> all;
    all.reserve(scores.id_scores.size() + scores.ood_scores.size());
    all.insert(all.end(), scores.id_scores.begin(), scores.id_scores.end());
    all.insert(all.end(), scores.ood_scores.begin(), scores.ood_scores.end());
    std::sort(all.begin(), all.end(), std::greater<>());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    return all;
}

} // namespace

double auroc(const ScoreSet& scores) {
    check_scores(scores);
    const std::size_t n_id = scores.id_scores.size();
    const std::size_t n_ood = scores.ood_scores.size();

    std::vector<std::pair<double, bool>> pooled; // (score, is_id)
    pooled.reserve(n_id + n_ood);
    for (double s : scores.id_scores) pooled.emplace_back(s, true);
    for (double s : scores.ood_scores) pooled.emplace_back(s, false);
    std::sort(pooled.begin(), pooled.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    // Average ranks over tie groups; accumulate the ID rank sum.
    double id_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < pooled.size()) {
        std::size_t j = i;
        while (j < pooled.size() && pooled[j].first == pooled[i].first) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j); // 1-based
        for (std::size_t t = i; t < j; ++t) {
            if (pooled[t].second) id_rank_sum += avg_rank;
        }
        i = j;
    }
    const double n_id_d = static_cast<double>(n_id);
    return (id_rank_sum - n_id_d * (n_id_d + 1.0) / 2.0) /
           (n_id_d * static_cast<double>(n_ood));
}

double aupr(const ScoreSet& scores) {
    check_scores(scores);
    std::vector<double> id_sorted = scores.id_scores;
    std::vector<double> ood_sorted = scores.ood_scores;
    std::sort(id_sorted.begin(), id_sorted.end(), std::greater<>());
    std::sort(ood_sorted.begin(), ood_sorted.end(), std::greater<>());
    const double n_id = static_cast<double>(id_sorted.size());

    double area = 0.0;
    double prev_recall = 0.0;
    std::size_t tp = 0; // id scores >= tau
    std::size_t fp = 0; // ood scores >= tau
    for (double tau : distinct_thresholds(scores)) {
        while (tp < id_sorted.size() && id_sorted[tp] >= tau) ++tp;
        while (fp < ood_sorted.size() && ood_sorted[fp] >= tau) ++fp;
        if (tp + fp == 0) continue;
        const double recall = static_cast<double>(tp) / n_id;
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return area;
}

double tnr_at_tpr(const ScoreSet& scores, double level) {
    check_scores(scores);
    if (!(level > 0.0 && level < 1.0)) {
        throw std::invalid_argument("tnr_at_tpr: level must be in (0, 1)");
    }
    const double n_id = static_cast<double>(scores.id_scores.size());
    std::vector<double> id_sorted = scores.id_scores;
    std::sort(id_sorted.begin(), id_sorted.end(), std::greater<>());

    // Thresholds descend, so TPR grows; take the first (largest) tau meeting
    // the level. The smallest score always qualifies with TPR = 1.
    double tau = id_sorted.back();
    std::size_t tp = 0;
    for (double candidate : distinct_thresholds(scores)) {
        while (tp < id_sorted.size() && id_sorted[tp] >= candidate) ++tp;
        if (static_cast<double>(tp) / n_id >= level) {
            tau = candidate;
            break;
        }
    }
    std::size_t tn = 0;
    for (double s : scores.ood_scores) {
        if (s < tau) ++tn;
    }
    return static_cast<double>(tn) / static_cast<double>(scores.ood_scores.size());
}

double detection_accuracy(const ScoreSet& scores) {
    check_scores(scores);
    const double n_id = static_cast<double>(scores.id_scores.size());
    const double n_ood = static_cast<double>(scores.ood_scores.size());
    std::vector<double> id_sorted = scores.id_scores;
    std::vector<double> ood_sorted = scores.ood_scores;
    std::sort(id_sorted.begin(), id_sorted.end(), std::greater<>());
    std::sort(ood_sorted.begin(), ood_sorted.end(), std::greater<>());

    double best = 0.5; // tau = +infinity: TPR 0, TNR 1
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (double tau : distinct_thresholds(scores)) {
        while (tp < id_sorted.size() && id_sorted[tp] >= tau) ++tp;
        while (fp < ood_sorted.size() && ood_sorted[fp] >= tau) ++fp;
        const double tpr = static_cast<double>(tp) / n_id;
        const double tnr = 1.0 - static_cast<double>(fp) / n_ood;
        best = std::max(best, 0.5 * (tpr + tnr));
    }
    return best;
}

double classification_accuracy(std::span<const std::size_t> predictions,
                               std::span<const std::size_t> labels) {
    if (predictions.size() != labels.size()) {
        throw std::invalid_argument("classification_accuracy: length mismatch");
    }
    if (predictions.empty()) {
        throw std::invalid_argument("classification_accuracy: empty inputs");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

MetricsReport evaluate_scores(const ScoreSet& scores, std::optional<double> accuracy) {
    MetricsReport report;
    report.classification_accuracy = accuracy;
    report.tnr_at_tpr85 = tnr_at_tpr(scores, 0.85);
    report.auroc = auroc(scores);
    report.aupr_id_positive = aupr(scores);
    report.detection_accuracy = detection_accuracy(scores);
    return report;
}

} // namespace mcdd
