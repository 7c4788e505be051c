// Command-line front end: benchmarks, nu sweeps, latent exports, gradient
// self-checks, and single-model train/score workflows.
//
// Exit codes: 0 success, 1 validation/check failure, 2 runtime failure.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mcdd/checkpoint.hpp"
#include "mcdd/dataset.hpp"
#include "mcdd/errors.hpp"
#include "mcdd/experiment.hpp"
#include "mcdd/metrics.hpp"

namespace {

struct ConfigCli {
    std::string config_path;
    std::vector<std::string> overrides;

    std::string dataset;
    std::string method;
    std::string arch;
    std::string output_dir;
    std::string label_column;
    double nu = 0.0;
    double learning_rate = 0.0;
    std::size_t latent_dim = 0;
    std::size_t epochs = 0;
    std::size_t batch_size = 0;
    std::size_t folds = 0;
    std::size_t jobs = 0;
    std::uint64_t seed = 0;

    CLI::Option* dataset_opt = nullptr;
    CLI::Option* method_opt = nullptr;
    CLI::Option* arch_opt = nullptr;
    CLI::Option* output_dir_opt = nullptr;
    CLI::Option* label_column_opt = nullptr;
    CLI::Option* nu_opt = nullptr;
    CLI::Option* lr_opt = nullptr;
    CLI::Option* latent_opt = nullptr;
    CLI::Option* epochs_opt = nullptr;
    CLI::Option* batch_opt = nullptr;
    CLI::Option* folds_opt = nullptr;
    CLI::Option* jobs_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
};

void add_config_options(CLI::App* app, ConfigCli& cli) {
    app->add_option("--config", cli.config_path, "JSON config file");
    app->add_option("--set", cli.overrides, "key=value override (repeatable, later wins)");
    cli.dataset_opt = app->add_option("--dataset", cli.dataset, "CSV dataset path");
    cli.method_opt = app->add_option(
        "--method", cli.method,
        "deep-mcdd | soft-mcdd | softmax-msp | mahalanobis | deep-svdd | euclid-center");
    cli.arch_opt = app->add_option("--arch", cli.arch, "layer widths, e.g. 128x128x128");
    cli.output_dir_opt = app->add_option("--output-dir", cli.output_dir, "result directory");
    cli.label_column_opt =
        app->add_option("--label-column", cli.label_column, "label column name or index");
    cli.nu_opt = app->add_option("--nu", cli.nu, "regularization coefficient");
    cli.lr_opt = app->add_option("--learning-rate", cli.learning_rate, "Adam learning rate");
    cli.latent_opt = app->add_option("--latent-dim", cli.latent_dim, "latent width override");
    cli.epochs_opt = app->add_option("--epochs", cli.epochs, "training epochs");
    cli.batch_opt = app->add_option("--batch-size", cli.batch_size, "minibatch size");
    cli.folds_opt = app->add_option("--folds", cli.folds, "cross-validation folds");
    cli.jobs_opt = app->add_option("--jobs", cli.jobs, "parallel scenario workers");
    cli.seed_opt = app->add_option("--seed", cli.seed, "master seed");
}

mcdd::ExperimentConfig resolve_config(const ConfigCli& cli) {
    mcdd::ExperimentConfig config;
    if (!cli.config_path.empty()) config = mcdd::config_from_json_file(cli.config_path);
    if (cli.dataset_opt->count()) config.dataset_path = cli.dataset;
    if (cli.method_opt->count()) config.method = mcdd::method_from_string(cli.method);
    if (cli.arch_opt->count()) mcdd::apply_override(config, "arch=" + cli.arch);
    if (cli.output_dir_opt->count()) config.output_dir = cli.output_dir;
    if (cli.label_column_opt->count()) config.label_column = cli.label_column;
    if (cli.nu_opt->count()) config.nu = cli.nu;
    if (cli.lr_opt->count()) config.learning_rate = cli.learning_rate;
    if (cli.latent_opt->count()) config.latent_dim = cli.latent_dim;
    if (cli.epochs_opt->count()) config.epochs = cli.epochs;
    if (cli.batch_opt->count()) config.batch_size = cli.batch_size;
    if (cli.folds_opt->count()) config.folds = cli.folds;
    if (cli.jobs_opt->count()) config.jobs = cli.jobs;
    if (cli.seed_opt->count()) config.seed = cli.seed;
    for (const std::string& assignment : cli.overrides) {
        mcdd::apply_override(config, assignment);
    }
    return config;
}

void print_grand(const mcdd::BenchmarkResult& result) {
    const mcdd::MetricsReport& g = result.grand;
    std::printf("grand averages (x100):\n");
    if (g.classification_accuracy) {
        std::printf("  classification accuracy  %.2f\n", *g.classification_accuracy * 100.0);
    }
    std::printf("  TNR at TPR 85%%           %.2f\n", g.tnr_at_tpr85 * 100.0);
    std::printf("  AUROC                    %.2f\n", g.auroc * 100.0);
    std::printf("  AUPR (ID positive)       %.2f\n", g.aupr_id_positive * 100.0);
    std::printf("  detection accuracy       %.2f\n", g.detection_accuracy * 100.0);
}

int run_train(const mcdd::ExperimentConfig& config, const std::string& out_path) {
    mcdd::validate(config);
    const mcdd::TabularDataset dataset =
        mcdd::load_csv(config.dataset_path, config.label_column, config.has_header);

    std::vector<std::size_t> everything(dataset.num_rows());
    for (std::size_t i = 0; i < everything.size(); ++i) everything[i] = i;
    const mcdd::NormalizationStats norm = mcdd::zscore_fit(dataset.features, everything);
    const mcdd::Matrix features = mcdd::zscore_apply(dataset.features, norm);

    // Dense ids in canonical name order, so checkpoints are stable across
    // row shufflings of the same file.
    const std::vector<std::size_t> order = mcdd::canonical_class_order(dataset);
    std::vector<std::size_t> remap(dataset.num_classes());
    std::vector<std::string> names;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        remap[order[pos]] = pos;
        names.push_back(dataset.class_names[order[pos]]);
    }
    std::vector<std::size_t> labels(dataset.labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = remap[dataset.labels[i]];

    mcdd::TrainConfig tc;
    tc.nu = config.nu;
    tc.epochs = config.epochs;
    tc.batch_size = config.batch_size;
    tc.learning_rate = config.learning_rate;
    tc.seed = config.seed;

    mcdd::Checkpoint model =
        mcdd::train_method(config.method, features, labels,
                           config.resolved_arch(dataset.num_attributes()), tc);
    model.normalization = norm;
    model.class_names = names;
    mcdd::save_checkpoint(model, out_path);
    std::printf("checkpoint written to %s\n", out_path.c_str());
    return 0;
}

int run_score(const std::string& checkpoint_path, const std::string& data_path,
              const std::string& label_column, bool has_header, const std::string& out_path) {
    const mcdd::Checkpoint model = mcdd::load_checkpoint(checkpoint_path);

    mcdd::Matrix features;
    std::vector<std::string> true_names;
    if (label_column.empty()) {
        features = mcdd::load_features_csv(data_path, has_header);
    } else {
        const mcdd::TabularDataset dataset =
            mcdd::load_csv(data_path, label_column, has_header);
        features = dataset.features;
        true_names.reserve(dataset.labels.size());
        for (std::size_t y : dataset.labels) true_names.push_back(dataset.class_names[y]);
    }

    const mcdd::Matrix normalized = mcdd::zscore_apply(features, model.normalization);
    const std::vector<double> scores = mcdd::score_rows(model, normalized);
    std::vector<std::size_t> predictions;
    if (mcdd::method_classifies(model.method)) {
        predictions = mcdd::predict_rows(model, normalized);
    }

    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
    out << "row,score" << (predictions.empty() ? "" : ",predicted_class") << "\n";
    for (std::size_t i = 0; i < scores.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", scores[i]);
        out << i << "," << buf;
        if (!predictions.empty()) out << "," << model.class_names[predictions[i]];
        out << "\n";
    }
    std::printf("scores written to %s\n", out_path.c_str());

    if (!true_names.empty() && !predictions.empty()) {
        std::size_t correct = 0;
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            if (model.class_names[predictions[i]] == true_names[i]) ++correct;
        }
        std::printf("accuracy on labeled rows: %.4f\n",
                    static_cast<double>(correct) / static_cast<double>(predictions.size()));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    // Keep any BLAS backend single-threaded so reruns are reproducible and
    // --jobs owns all parallelism.
    setenv("OPENBLAS_NUM_THREADS", "1", 0);

    CLI::App app{"Deep multi-class data description: training, OOD benchmarks, diagnostics"};
    app.require_subcommand(1);

    ConfigCli bench_cli;
    CLI::App* bench = app.add_subcommand("benchmark", "leave-one-class-out benchmark");
    add_config_options(bench, bench_cli);

    ConfigCli sweep_cli;
    std::string grid = "0.001,0.01,0.1,1,10,100,1000";
    CLI::App* sweep = app.add_subcommand("sweep-nu", "benchmark once per nu value");
    add_config_options(sweep, sweep_cli);
    sweep->add_option("--grid", grid, "comma-separated nu values");

    ConfigCli export_cli;
    std::string export_class;
    std::size_t export_fold = 0;
    CLI::App* exp = app.add_subcommand("export-latent", "2-D latent space CSV export");
    add_config_options(exp, export_cli);
    CLI::Option* export_class_opt =
        exp->add_option("--ood-class", export_class, "OOD class name (default: first)");
    CLI::Option* export_fold_opt = exp->add_option("--fold", export_fold, "fold index");

    std::uint64_t grad_seed = 0;
    std::string corrupt_group;
    CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference gradient check");
    grad->add_option("--seed", grad_seed, "seed");
    grad->add_option("--corrupt-group", corrupt_group, "perturb one analytic gradient group")
        ->group(""); // hidden; negative-control hook for tests

    ConfigCli train_cli;
    std::string train_out = "model.json";
    CLI::App* train = app.add_subcommand("train", "train one model on a full dataset");
    add_config_options(train, train_cli);
    train->add_option("--out", train_out, "checkpoint output path");

    std::string score_checkpoint;
    std::string score_data;
    std::string score_label_column;
    bool score_has_header = true;
    std::string score_out = "scores.csv";
    CLI::App* score = app.add_subcommand("score", "score a CSV with a trained checkpoint");
    score->add_option("--checkpoint", score_checkpoint, "checkpoint path")->required();
    score->add_option("--data", score_data, "CSV to score")->required();
    score->add_option("--label-column", score_label_column,
                      "label column in the CSV (empty: none)");
    score->add_option("--has-header", score_has_header, "CSV has a header row");
    score->add_option("--out", score_out, "output CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (bench->parsed()) {
            const mcdd::BenchmarkResult result = mcdd::run_benchmark(resolve_config(bench_cli));
            print_grand(result);
            return 0;
        }
        if (sweep->parsed()) {
            std::vector<double> nu_values;
            std::string token;
            for (char ch : grid + ",") {
                if (ch == ',') {
                    if (!token.empty()) nu_values.push_back(std::stod(token));
                    token.clear();
                } else {
                    token.push_back(ch);
                }
            }
            const auto rows = mcdd::sweep_nu(resolve_config(sweep_cli), nu_values);
            for (const mcdd::SweepRow& row : rows) {
                std::printf("nu=%g auroc=%.2f%s\n", row.nu, row.grand.auroc * 100.0,
                            row.grand.classification_accuracy
                                ? (" acc=" + std::to_string(*row.grand.classification_accuracy *
                                                            100.0))
                                      .c_str()
                                : "");
            }
            return 0;
        }
        if (exp->parsed()) {
            mcdd::ExperimentConfig config = resolve_config(export_cli);
            if (export_class_opt->count()) config.export_ood_class = export_class;
            if (export_fold_opt->count()) config.export_fold = export_fold;
            const auto path = mcdd::export_latent(config);
            std::printf("latent export written to %s\n", path.string().c_str());
            return 0;
        }
        if (grad->parsed()) {
            const mcdd::GradCheckReport report = mcdd::gradcheck(grad_seed, corrupt_group);
            for (const mcdd::GradCheckGroup& group : report.groups) {
                std::printf("%-28s max_rel_error=%.3e  %s\n", group.name.c_str(),
                            group.max_rel_error, group.pass ? "PASS" : "FAIL");
            }
            std::printf("gradcheck: %s\n", report.pass ? "PASS" : "FAIL");
            return report.pass ? 0 : 1;
        }
        if (train->parsed()) return run_train(resolve_config(train_cli), train_out);
        if (score->parsed()) {
            return run_score(score_checkpoint, score_data, score_label_column, score_has_header,
                             score_out);
        }
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
