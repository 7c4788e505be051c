#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mcdd/matrix.hpp"

namespace mcdd {

/// A fully loaded numeric dataset. Labels are dense ids in first-occurrence
/// order; class_names maps them back to the original label strings.
struct TabularDataset {
    Matrix features;                      // N x p
    std::vector<std::size_t> labels;      // N
    std::vector<std::string> class_names; // K
    std::string name;

    std::size_t num_rows() const { return features.rows(); }
    std::size_t num_attributes() const { return features.cols(); }
    std::size_t num_classes() const { return class_names.size(); }
};

/// Loads a comma-separated file. `label_column` is either a column name
/// (requires a header) or a 0-based column index given as digits. All other
/// columns must parse as numbers; any unparsable cell or ragged row is
/// reported with its row and column.
TabularDataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                        bool has_header);

/// Loads a label-free CSV: every column is a numeric feature.
Matrix load_features_csv(const std::filesystem::path& path, bool has_header);

/// Class ids ordered by class name (numeric-aware), the canonical order used
/// for scenario enumeration and reporting.
std::vector<std::size_t> canonical_class_order(const TabularDataset& dataset);

struct NormalizationStats {
    std::vector<double> mean;
    std::vector<double> stddev; // population estimator; 1 for zero-variance attributes
};

/// Fits per-attribute statistics on the designated rows only.
NormalizationStats zscore_fit(const Matrix& features, std::span<const std::size_t> indices);

Matrix zscore_apply(const Matrix& features, const NormalizationStats& stats);

/// Inverse of zscore_apply.
Matrix zscore_invert(const Matrix& normalized, const NormalizationStats& stats);

/// One leave-one-class-out x fold experiment definition over dataset rows.
struct ScenarioSplit {
    std::size_t ood_class = 0; // dataset class id
    std::size_t fold = 0;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> id_test_indices;
    std::vector<std::size_t> ood_test_indices;
};

/// Builds folds x K scenarios: for each OOD class, a stratified `folds`-fold
/// partition of the remaining classes. Every class needs at least `folds`
/// samples. Deterministic per seed; scenarios come out ordered by
/// (canonical OOD class position, fold).
std::vector<ScenarioSplit> make_loco_scenarios(const TabularDataset& dataset,
                                               std::size_t folds, std::uint64_t seed);

} // namespace mcdd
