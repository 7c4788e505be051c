#pragma once

#include <optional>
#include <span>
#include <vector>

namespace mcdd {

/// Confidence scores for one scenario; higher means more in-distribution
/// for every method.
struct ScoreSet {
    std::vector<double> id_scores;
    std::vector<double> ood_scores;
};

/// Rank-based AUROC: P(id > ood) + 0.5 P(tie), via rank sums with average
/// ranks for ties.
double auroc(const ScoreSet& scores);

/// Area under the precision-recall curve with ID as the positive class,
/// sweeping thresholds over all distinct scores with step-wise
/// (right-continuous) interpolation.
double aupr(const ScoreSet& scores);

/// TNR at the largest threshold tau (over observed score values) whose
/// id-score fraction >= level; returns the fraction of ood scores < tau.
double tnr_at_tpr(const ScoreSet& scores, double level = 0.85);

/// max over thresholds of 0.5 (TPR + TNR), thresholds enumerated at all
/// distinct scores plus +/- infinity.
double detection_accuracy(const ScoreSet& scores);

/// Exact-match fraction.
double classification_accuracy(std::span<const std::size_t> predictions,
                               std::span<const std::size_t> labels);

/// The five evaluation quantities for one scenario, all in [0, 1].
/// Accuracy is absent for detectors that cannot classify.
struct MetricsReport {
    std::optional<double> classification_accuracy;
    double tnr_at_tpr85 = 0.0;
    double auroc = 0.0;
    double aupr_id_positive = 0.0;
    double detection_accuracy = 0.0;
};

MetricsReport evaluate_scores(const ScoreSet& scores,
                              std::optional<double> accuracy = std::nullopt);

} // namespace mcdd
