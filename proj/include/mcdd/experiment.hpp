#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mcdd/checkpoint.hpp"
#include "mcdd/dataset.hpp"
#include "mcdd/metrics.hpp"

namespace mcdd {

/// Everything a run needs; defaults follow the benchmark protocol
/// (lr 0.01, 100 epochs, nu 1.0, arch 128x128x128, 5 folds, batch 128).
struct ExperimentConfig {
    std::string dataset_path;
    std::string label_column = "class";
    bool has_header = true;
    Method method = Method::kDeepMcdd;
    std::vector<std::size_t> arch = {128, 128, 128}; // layer widths; last = latent
    std::optional<std::size_t> latent_dim;           // overrides the last width
    double nu = 1.0;
    std::size_t epochs = 100;
    std::size_t batch_size = 128;
    double learning_rate = 0.01;
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    std::string output_dir = "results";
    bool normalize_train_only = true;
    std::size_t jobs = 1;
    std::size_t sphere_update_every = 10;
    std::string export_ood_class; // empty = first class in canonical order
    std::size_t export_fold = 0;

    std::vector<std::size_t> resolved_arch(std::size_t input_dim) const;
};

void validate(const ExperimentConfig& config);

/// Strict JSON parse: unknown keys are rejected.
ExperimentConfig config_from_json_file(const std::filesystem::path& path);

/// Applies one "key=value" override using the same key names as the JSON
/// config; later overrides win.
void apply_override(ExperimentConfig& config, const std::string& assignment);

// ---- Training and scoring behind a uniform surface ----

/// Trains the configured method on (already normalized) features and wraps
/// the result as a checkpoint. Normalization stats and class names are
/// filled in by the caller.
Checkpoint train_method(Method method, const Matrix& features,
                        std::span<const std::size_t> labels,
                        std::span<const std::size_t> arch, const TrainConfig& cfg);

std::vector<double> score_rows(const Checkpoint& model, const Matrix& normalized_rows);
std::vector<std::size_t> predict_rows(const Checkpoint& model, const Matrix& normalized_rows);

/// Latent representation of normalized rows under the checkpoint's network.
Matrix embed_rows(const Checkpoint& model, const Matrix& normalized_rows);

// ---- Benchmarks ----

struct ScenarioResult {
    std::string ood_class;
    std::size_t fold = 0;
    MetricsReport metrics;
};

struct ClassAverage {
    std::string ood_class;
    MetricsReport metrics;
};

struct BenchmarkResult {
    std::vector<ScenarioResult> rows;     // ordered by (canonical class, fold)
    std::vector<ClassAverage> per_class;  // canonical class order
    MetricsReport grand;
};

MetricsReport average_reports(std::span<const MetricsReport> reports);

/// Trains and evaluates the configured method on every leave-one-class-out
/// x fold scenario. Writes <dataset>_<method>_results.{json,csv,md} under
/// output_dir unless write_files is false. Scenario failures abort with the
/// scenario id after flushing the completed rows.
BenchmarkResult run_benchmark(const ExperimentConfig& config);
BenchmarkResult run_benchmark_on(const TabularDataset& dataset, const ExperimentConfig& config,
                                 bool write_files);

/// Parses a benchmark result file; rejects other formats and unknown
/// schema versions.
BenchmarkResult load_benchmark_json(const std::filesystem::path& path);

/// One full benchmark per nu value; emits a curve CSV of the grand averages.
struct SweepRow {
    double nu = 0.0;
    MetricsReport grand;
};
std::vector<SweepRow> sweep_nu(const ExperimentConfig& config,
                               std::span<const double> nu_values);

/// Trains one scenario with a 2-D latent space and writes every sample's
/// coordinates plus the model's centers. Fails validation unless the
/// resolved latent width is exactly 2.
std::filesystem::path export_latent(const ExperimentConfig& config);

// ---- Gradient self-check ----

struct GradCheckGroup {
    std::string name;
    double max_rel_error = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    bool pass = false;
};

/// Compares every analytic gradient (network weights and biases, class
/// means, raw log sigmas and biases for the Gaussian objective; network
/// parameters for the hinge objective with fixed spheres) against central
/// finite differences (h = 1e-5) on random small instances.
/// `corrupt_group` deliberately perturbs one analytic gradient so the
/// negative control can verify that the checker reports failures.
GradCheckReport gradcheck(std::uint64_t seed, const std::string& corrupt_group = "");

} // namespace mcdd
