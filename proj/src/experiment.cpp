#include "mcdd/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "mcdd/errors.hpp"
#include "mcdd/rng.hpp"

namespace mcdd {

using nlohmann::json;

namespace {

constexpr int kResultSchemaVersion = 1;

std::string format_percent(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, value * 100.0);
    return buf;
}

std::string format_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

std::string format_nu(double nu) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", nu);
    return buf;
}

} // namespace

std::vector<std::size_t> ExperimentConfig::resolved_arch(std::size_t input_dim) const {
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), arch.begin(), arch.end());
    if (latent_dim) dims.back() = *latent_dim;
    return dims;
}

void validate(const ExperimentConfig& config) {
    if (config.dataset_path.empty()) {
        throw std::invalid_argument("config: dataset_path is required");
    }
    if (config.arch.empty()) throw std::invalid_argument("config: arch must be non-empty");
    for (std::size_t w : config.arch) {
        if (w == 0) throw std::invalid_argument("config: arch widths must be positive");
    }
    if (config.latent_dim && *config.latent_dim == 0) {
        throw std::invalid_argument("config: latent_dim must be positive");
    }
    if (!(config.nu > 0.0)) throw std::invalid_argument("config: nu must be > 0");
    if (config.method == Method::kSoftMcdd && config.nu > 1.0) {
        throw std::invalid_argument("config: soft-mcdd requires nu in (0, 1]");
    }
    if (config.epochs == 0) throw std::invalid_argument("config: epochs must be positive");
    if (config.batch_size == 0) throw std::invalid_argument("config: batch_size must be positive");
    if (!(config.learning_rate > 0.0)) {
        throw std::invalid_argument("config: learning_rate must be > 0");
    }
    if (config.folds < 2) throw std::invalid_argument("config: folds must be >= 2");
    if (config.jobs == 0) throw std::invalid_argument("config: jobs must be positive");
    if (config.sphere_update_every == 0) {
        throw std::invalid_argument("config: sphere_update_every must be positive");
    }
}

namespace {

std::vector<std::size_t> parse_arch_string(const std::string& text) {
    std::vector<std::size_t> dims;
    std::string token;
    for (char ch : text + ",") {
        if (ch == ',' || ch == 'x' || ch == 'X') {
            if (!token.empty()) {
                dims.push_back(std::stoul(token));
                token.clear();
            }
        } else {
            token.push_back(ch);
        }
    }
    return dims;
}

} // namespace

ExperimentConfig config_from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("config: invalid JSON: " + std::string(e.what()));
    }
    if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");

    ExperimentConfig config;
    for (const auto& [key, value] : j.items()) {
        if (key == "dataset_path") config.dataset_path = value.get<std::string>();
        else if (key == "label_column") config.label_column = value.get<std::string>();
        else if (key == "has_header") config.has_header = value.get<bool>();
        else if (key == "method") config.method = method_from_string(value.get<std::string>());
        else if (key == "arch") config.arch = value.get<std::vector<std::size_t>>();
        else if (key == "latent_dim") config.latent_dim = value.get<std::size_t>();
        else if (key == "nu") config.nu = value.get<double>();
        else if (key == "epochs") config.epochs = value.get<std::size_t>();
        else if (key == "batch_size") config.batch_size = value.get<std::size_t>();
        else if (key == "learning_rate") config.learning_rate = value.get<double>();
        else if (key == "folds") config.folds = value.get<std::size_t>();
        else if (key == "seed") config.seed = value.get<std::uint64_t>();
        else if (key == "output_dir") config.output_dir = value.get<std::string>();
        else if (key == "normalize_train_only") config.normalize_train_only = value.get<bool>();
        else if (key == "jobs") config.jobs = value.get<std::size_t>();
        else if (key == "sphere_update_every")
            config.sphere_update_every = value.get<std::size_t>();
        else if (key == "export_ood_class") config.export_ood_class = value.get<std::string>();
        else if (key == "export_fold") config.export_fold = value.get<std::size_t>();
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    }
    return config;
}

void apply_override(ExperimentConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw std::invalid_argument("override '" + assignment + "' is not key=value");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    try {
        if (key == "dataset_path") config.dataset_path = value;
        else if (key == "label_column") config.label_column = value;
        else if (key == "has_header") config.has_header = (value == "true" || value == "1");
        else if (key == "method") config.method = method_from_string(value);
        else if (key == "arch") config.arch = parse_arch_string(value);
        else if (key == "latent_dim") config.latent_dim = std::stoul(value);
        else if (key == "nu") config.nu = std::stod(value);
        else if (key == "epochs") config.epochs = std::stoul(value);
        else if (key == "batch_size") config.batch_size = std::stoul(value);
        else if (key == "learning_rate") config.learning_rate = std::stod(value);
        else if (key == "folds") config.folds = std::stoul(value);
        else if (key == "seed") config.seed = std::stoull(value);
        else if (key == "output_dir") config.output_dir = value;
        else if (key == "normalize_train_only")
            config.normalize_train_only = (value == "true" || value == "1");
        else if (key == "jobs") config.jobs = std::stoul(value);
        else if (key == "sphere_update_every") config.sphere_update_every = std::stoul(value);
        else if (key == "export_ood_class") config.export_ood_class = value;
        else if (key == "export_fold") config.export_fold = std::stoul(value);
        else throw std::invalid_argument("unknown key");
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("override '" + assignment + "': " + e.what());
    }
}

// ---- Training / scoring ----

Checkpoint train_method(Method method, const Matrix& features,
                        std::span<const std::size_t> labels,
                        std::span<const std::size_t> arch, const TrainConfig& cfg) {
    Checkpoint model;
    model.method = method;
    model.train_config = cfg;
    switch (method) {
        case Method::kDeepMcdd: {
            TrainedDM trained = train_mcdd(features, labels, arch, cfg);
            model.network = std::move(trained.network);
            model.dm_head = std::move(trained.head);
            break;
        }
        case Method::kSoftMcdd: {
            TrainedSoft trained = bcd_train(features, labels, arch, cfg);
            model.network = std::move(trained.network);
            model.spheres = std::move(trained.spheres);
            break;
        }
        case Method::kSoftmaxMsp: {
            TrainedSoftmax trained = train_softmax(features, labels, arch, cfg);
            model.network = std::move(trained.network);
            model.softmax_head = std::move(trained.head);
            break;
        }
        case Method::kMahalanobis: {
            TrainedSoftmax trained = train_softmax(features, labels, arch, cfg);
            const Matrix latents = mlp_forward(trained.network, features);
            model.network = std::move(trained.network);
            model.softmax_head = std::move(trained.head);
            model.mahalanobis = fit_mahalanobis(latents, labels);
            break;
        }
        case Method::kDeepSvdd: {
            TrainedSVDD trained = train_deep_svdd(features, arch, cfg);
            model.network = std::move(trained.network);
            model.svdd = std::move(trained.params);
            break;
        }
        case Method::kEuclidCenter: {
            TrainedEuclid trained = train_euclid_classifier(features, labels, arch, cfg);
            model.network = std::move(trained.network);
            model.euclid_centers = std::move(trained.centers);
            break;
        }
    }
    return model;
}

Matrix embed_rows(const Checkpoint& model, const Matrix& normalized_rows) {
    return mlp_forward(model.network, normalized_rows);
}

std::vector<double> score_rows(const Checkpoint& model, const Matrix& normalized_rows) {
    const Matrix latent = mlp_forward(model.network, normalized_rows);
    switch (model.method) {
        case Method::kDeepMcdd:
            return confidence_score(compute_distances(latent, *model.dm_head));
        case Method::kSoftMcdd:
            return soft_confidence_score(latent, *model.spheres);
        case Method::kSoftmaxMsp:
            return msp_score(latent, *model.softmax_head);
        case Method::kMahalanobis:
            return mahalanobis_score(latent, *model.mahalanobis);
        case Method::kDeepSvdd:
            return svdd_score(latent, model.svdd->center);
        case Method::kEuclidCenter:
            return euclid_score(latent, *model.euclid_centers);
    }
    throw std::invalid_argument("score_rows: bad method");
}

std::vector<std::size_t> predict_rows(const Checkpoint& model, const Matrix& normalized_rows) {
    if (!method_classifies(model.method)) {
        throw std::invalid_argument("predict_rows: " + to_string(model.method) +
                                    " cannot classify");
    }
    const Matrix latent = mlp_forward(model.network, normalized_rows);
    switch (model.method) {
        case Method::kDeepMcdd:
            return predict_class(compute_distances(latent, *model.dm_head), *model.dm_head);
        case Method::kSoftMcdd: {
            // Nearest sphere in the boundary sense: argmin (||f - c_k||^2 - R_k^2),
            // consistent with the soft confidence score.
            const SphereParams& spheres = *model.spheres;
            std::vector<std::size_t> labels(latent.rows(), 0);
            for (std::size_t i = 0; i < latent.rows(); ++i) {
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t k = 0; k < spheres.num_classes(); ++k) {
                    const double v = squared_distance(latent.row(i), spheres.centers.row(k)) -
                                     spheres.radii[k] * spheres.radii[k];
                    if (v < best) {
                        best = v;
                        labels[i] = k;
                    }
                }
            }
            return labels;
        }
        case Method::kSoftmaxMsp:
            return softmax_predict(latent, *model.softmax_head);
        case Method::kMahalanobis:
            return mahalanobis_predict(latent, *model.mahalanobis);
        case Method::kEuclidCenter:
            return euclid_predict(latent, *model.euclid_centers);
        case Method::kDeepSvdd:
            break;
    }
    throw std::invalid_argument("predict_rows: bad method");
}

// ---- Benchmark ----

namespace {

struct ScenarioContext {
    std::vector<std::size_t> id_class_remap; // dataset class id -> dense id (or npos)
    std::vector<std::string> id_class_names; // dense id -> name
};

ScenarioContext make_context(const TabularDataset& dataset, std::size_t ood_class) {
    ScenarioContext ctx;
    ctx.id_class_remap.assign(dataset.num_classes(), static_cast<std::size_t>(-1));
    for (std::size_t id : canonical_class_order(dataset)) {
        if (id == ood_class) continue;
        ctx.id_class_remap[id] = ctx.id_class_names.size();
        ctx.id_class_names.push_back(dataset.class_names[id]);
    }
    return ctx;
}

Checkpoint train_scenario(const TabularDataset& dataset, const ScenarioSplit& split,
                          const ExperimentConfig& config, const ScenarioContext& ctx) {
    NormalizationStats norm;
    if (config.normalize_train_only) {
        norm = zscore_fit(dataset.features, split.train_indices);
    } else {
        std::vector<std::size_t> everything(dataset.num_rows());
        for (std::size_t i = 0; i < everything.size(); ++i) everything[i] = i;
        norm = zscore_fit(dataset.features, everything);
    }

    const Matrix train_raw = dataset.features.gather_rows(split.train_indices);
    const Matrix train = zscore_apply(train_raw, norm);
    std::vector<std::size_t> train_labels(split.train_indices.size());
    for (std::size_t i = 0; i < split.train_indices.size(); ++i) {
        train_labels[i] = ctx.id_class_remap[dataset.labels[split.train_indices[i]]];
    }

    TrainConfig tc;
    tc.nu = config.nu;
    tc.epochs = config.epochs;
    tc.batch_size = config.batch_size;
    tc.learning_rate = config.learning_rate;
    tc.seed = mix_seed(config.seed, split.ood_class, split.fold);

    const std::vector<std::size_t> arch = config.resolved_arch(dataset.num_attributes());
    Checkpoint model;
    if (config.method == Method::kSoftMcdd) {
        model.method = config.method;
        model.train_config = tc;
        TrainedSoft trained =
            bcd_train(train, train_labels, arch, tc, config.sphere_update_every);
        model.network = std::move(trained.network);
        model.spheres = std::move(trained.spheres);
    } else {
        model = train_method(config.method, train, train_labels, arch, tc);
    }
    model.normalization = std::move(norm);
    model.class_names = ctx.id_class_names;
    return model;
}

MetricsReport run_scenario(const TabularDataset& dataset, const ScenarioSplit& split,
                           const ExperimentConfig& config) {
    const ScenarioContext ctx = make_context(dataset, split.ood_class);
    const Checkpoint model = train_scenario(dataset, split, config, ctx);

    const Matrix id_test =
        zscore_apply(dataset.features.gather_rows(split.id_test_indices), model.normalization);
    const Matrix ood_test =
        zscore_apply(dataset.features.gather_rows(split.ood_test_indices), model.normalization);

    ScoreSet scores;
    scores.id_scores = score_rows(model, id_test);
    scores.ood_scores = score_rows(model, ood_test);

    std::optional<double> accuracy;
    if (method_classifies(config.method)) {
        std::vector<std::size_t> truth(split.id_test_indices.size());
        for (std::size_t i = 0; i < truth.size(); ++i) {
            truth[i] = ctx.id_class_remap[dataset.labels[split.id_test_indices[i]]];
        }
        accuracy = classification_accuracy(predict_rows(model, id_test), truth);
    }
    return evaluate_scores(scores, accuracy);
}

json metrics_to_json(const MetricsReport& m) {
    json j;
    if (m.classification_accuracy) {
        j["classification_accuracy"] = *m.classification_accuracy;
    } else {
        j["classification_accuracy"] = nullptr;
    }
    j["tnr_at_tpr85"] = m.tnr_at_tpr85;
    j["auroc"] = m.auroc;
    j["aupr_id_positive"] = m.aupr_id_positive;
    j["detection_accuracy"] = m.detection_accuracy;
    return j;
}

MetricsReport metrics_from_json(const json& j) {
    MetricsReport m;
    if (!j.at("classification_accuracy").is_null()) {
        m.classification_accuracy = j.at("classification_accuracy").get<double>();
    }
    m.tnr_at_tpr85 = j.at("tnr_at_tpr85").get<double>();
    m.auroc = j.at("auroc").get<double>();
    m.aupr_id_positive = j.at("aupr_id_positive").get<double>();
    m.detection_accuracy = j.at("detection_accuracy").get<double>();
    return m;
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["dataset_path"] = c.dataset_path;
    j["label_column"] = c.label_column;
    j["has_header"] = c.has_header;
    j["method"] = to_string(c.method);
    j["arch"] = c.arch;
    if (c.latent_dim) j["latent_dim"] = *c.latent_dim; else j["latent_dim"] = nullptr;
    j["nu"] = c.nu;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["folds"] = c.folds;
    j["seed"] = c.seed;
    j["normalize_train_only"] = c.normalize_train_only;
    j["sphere_update_every"] = c.sphere_update_every;
    return j;
}

std::string result_stem(const TabularDataset& dataset, const ExperimentConfig& config,
                        const std::string& suffix) {
    return dataset.name + "_" + to_string(config.method) + suffix;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

std::string metrics_csv_fields(const MetricsReport& m) {
    std::string acc = m.classification_accuracy
                          ? format_percent(*m.classification_accuracy, 4)
                          : std::string("");
    return acc + "," + format_percent(m.tnr_at_tpr85, 4) + "," + format_percent(m.auroc, 4) +
           "," + format_percent(m.aupr_id_positive, 4) + "," +
           format_percent(m.detection_accuracy, 4);
}

std::string metrics_md_fields(const MetricsReport& m) {
    std::string acc =
        m.classification_accuracy ? format_percent(*m.classification_accuracy, 2)
                                  : std::string("-");
    return acc + " | " + format_percent(m.tnr_at_tpr85, 2) + " | " + format_percent(m.auroc, 2) +
           " | " + format_percent(m.aupr_id_positive, 2) + " | " +
           format_percent(m.detection_accuracy, 2);
}

void write_benchmark_files(const TabularDataset& dataset, const ExperimentConfig& config,
                           const BenchmarkResult& result, const std::string& suffix,
                           const std::optional<std::string>& aborted_scenario) {
    std::filesystem::create_directories(config.output_dir);
    const std::string stem = result_stem(dataset, config, suffix);
    const std::filesystem::path base = std::filesystem::path(config.output_dir) / stem;

    json j;
    j["format"] = "mcdd-benchmark";
    j["schema_version"] = kResultSchemaVersion;
    j["config"] = config_to_json(config);
    j["dataset"] = {{"name", dataset.name},
                    {"rows", dataset.num_rows()},
                    {"attributes", dataset.num_attributes()},
                    {"classes", dataset.class_names}};
    json rows = json::array();
    for (const ScenarioResult& row : result.rows) {
        rows.push_back({{"ood_class", row.ood_class},
                        {"fold", row.fold},
                        {"metrics", metrics_to_json(row.metrics)}});
    }
    j["rows"] = std::move(rows);
    json per_class = json::array();
    for (const ClassAverage& avg : result.per_class) {
        per_class.push_back({{"ood_class", avg.ood_class},
                             {"metrics", metrics_to_json(avg.metrics)}});
    }
    j["per_class"] = std::move(per_class);
    j["grand"] = metrics_to_json(result.grand);
    if (aborted_scenario) j["aborted_scenario"] = *aborted_scenario;
    write_text_file(base.string() + "_results.json", j.dump(2) + "\n");

    std::string csv =
        "ood_class,fold,classification_accuracy,tnr_at_tpr85,auroc,aupr_id_positive,"
        "detection_accuracy\n";
    for (const ScenarioResult& row : result.rows) {
        csv += row.ood_class + "," + std::to_string(row.fold) + "," +
               metrics_csv_fields(row.metrics) + "\n";
    }
    for (const ClassAverage& avg : result.per_class) {
        csv += avg.ood_class + ",avg," + metrics_csv_fields(avg.metrics) + "\n";
    }
    csv += "all,avg," + metrics_csv_fields(result.grand) + "\n";
    write_text_file(base.string() + "_results.csv", csv);

    std::string md = "# " + dataset.name + " / " + to_string(config.method) + "\n\n";
    md += "Per-OOD-class averages over " + std::to_string(config.folds) + " folds";
    md += " (values x100).\n\n";
    md += "| OOD class | Classification acc. | TNR at TPR 85% | AUROC | AUPR | Detection acc. |\n";
    md += "|---|---|---|---|---|---|\n";
    for (const ClassAverage& avg : result.per_class) {
        md += "| " + avg.ood_class + " | " + metrics_md_fields(avg.metrics) + " |\n";
    }
    md += "| **all** | " + metrics_md_fields(result.grand) + " |\n";
    write_text_file(base.string() + "_results.md", md);
}

} // namespace

MetricsReport average_reports(std::span<const MetricsReport> reports) {
    if (reports.empty()) throw std::invalid_argument("average_reports: empty input");
    MetricsReport avg;
    bool all_have_accuracy = true;
    double acc_sum = 0.0;
    for (const MetricsReport& r : reports) {
        if (r.classification_accuracy) {
            acc_sum += *r.classification_accuracy;
        } else {
            all_have_accuracy = false;
        }
        avg.tnr_at_tpr85 += r.tnr_at_tpr85;
        avg.auroc += r.auroc;
        avg.aupr_id_positive += r.aupr_id_positive;
        avg.detection_accuracy += r.detection_accuracy;
    }
    const double n = static_cast<double>(reports.size());
    if (all_have_accuracy) avg.classification_accuracy = acc_sum / n;
    avg.tnr_at_tpr85 /= n;
    avg.auroc /= n;
    avg.aupr_id_positive /= n;
    avg.detection_accuracy /= n;
    return avg;
}

BenchmarkResult run_benchmark_on(const TabularDataset& dataset, const ExperimentConfig& config,
                                 bool write_files) {
    validate(config);
    const std::vector<ScenarioSplit> scenarios =
        make_loco_scenarios(dataset, config.folds, config.seed);
    const std::size_t n = scenarios.size();

    std::vector<std::optional<MetricsReport>> slots(n);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::mutex mutex;
    std::optional<std::string> first_error;
    bool error_is_numeric = false;

    const auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n || abort.load()) return;
            const ScenarioSplit& split = scenarios[i];
            const auto started = std::chrono::steady_clock::now();
            try {
                const MetricsReport report = run_scenario(dataset, split, config);
                const double secs =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                        .count();
                std::lock_guard<std::mutex> lock(mutex);
                slots[i] = report;
                std::cerr << "[" << to_string(config.method) << "] " << dataset.name
                          << " ood=" << dataset.class_names[split.ood_class]
                          << " fold=" << split.fold
                          << " auroc=" << format_percent(report.auroc, 2)
                          << (report.classification_accuracy
                                  ? " acc=" + format_percent(*report.classification_accuracy, 2)
                                  : "")
                          << " (" << static_cast<int>(secs) << "s)\n";
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(mutex);
                if (!first_error) {
                    first_error = "scenario ood=" + dataset.class_names[split.ood_class] +
                                  " fold=" + std::to_string(split.fold) + ": " + e.what();
                    error_is_numeric = dynamic_cast<const NumericError*>(&e) != nullptr;
                }
                abort.store(true);
                return;
            }
        }
    };

    const std::size_t n_workers = std::min<std::size_t>(config.jobs, n);
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_workers);
        for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
    }

    BenchmarkResult result;
    for (std::size_t i = 0; i < n; ++i) {
        if (!slots[i]) continue;
        result.rows.push_back({dataset.class_names[scenarios[i].ood_class], scenarios[i].fold,
                               *slots[i]});
    }

    if (!first_error) {
        // Fold rows -> per-class averages -> grand average.
        std::vector<MetricsReport> class_reports;
        for (std::size_t start = 0; start < result.rows.size(); start += config.folds) {
            std::vector<MetricsReport> fold_reports;
            for (std::size_t f = 0; f < config.folds; ++f) {
                fold_reports.push_back(result.rows[start + f].metrics);
            }
            result.per_class.push_back(
                {result.rows[start].ood_class, average_reports(fold_reports)});
            class_reports.push_back(result.per_class.back().metrics);
        }
        result.grand = average_reports(class_reports);
    }

    if (write_files || first_error) {
        write_benchmark_files(dataset, config, result, "", first_error);
    }
    if (first_error) {
        if (error_is_numeric) throw NumericError("run_benchmark: " + *first_error);
        throw std::runtime_error("run_benchmark: " + *first_error);
    }
    return result;
}

BenchmarkResult run_benchmark(const ExperimentConfig& config) {
    validate(config);
    const TabularDataset dataset =
        load_csv(config.dataset_path, config.label_column, config.has_header);
    return run_benchmark_on(dataset, config, true);
}

BenchmarkResult load_benchmark_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open '" + path.string() + "'");
    json j;
    in >> j;
    if (j.value("format", "") != "mcdd-benchmark") {
        throw std::invalid_argument("'" + path.string() + "' is not a benchmark result file");
    }
    if (j.at("schema_version").get<int>() != kResultSchemaVersion) {
        throw std::invalid_argument("unsupported result schema version " +
                                    j.at("schema_version").dump());
    }
    BenchmarkResult result;
    for (const json& row : j.at("rows")) {
        result.rows.push_back({row.at("ood_class").get<std::string>(),
                               row.at("fold").get<std::size_t>(),
                               metrics_from_json(row.at("metrics"))});
    }
    for (const json& avg : j.at("per_class")) {
        result.per_class.push_back({avg.at("ood_class").get<std::string>(),
                                    metrics_from_json(avg.at("metrics"))});
    }
    result.grand = metrics_from_json(j.at("grand"));
    return result;
}

std::vector<SweepRow> sweep_nu(const ExperimentConfig& config,
                               std::span<const double> nu_values) {
    validate(config);
    if (nu_values.empty()) throw std::invalid_argument("sweep_nu: empty grid");
    const TabularDataset dataset =
        load_csv(config.dataset_path, config.label_column, config.has_header);

    std::vector<SweepRow> rows;
    for (double nu : nu_values) {
        ExperimentConfig point = config;
        point.nu = nu;
        validate(point);
        const BenchmarkResult result = run_benchmark_on(dataset, point, false);
        write_benchmark_files(dataset, point, result, std::string("_nu") + format_nu(nu),
                              std::nullopt);
        rows.push_back({nu, result.grand});
    }

    std::filesystem::create_directories(config.output_dir);
    std::string csv =
        "nu,classification_accuracy,tnr_at_tpr85,auroc,aupr_id_positive,detection_accuracy\n";
    for (const SweepRow& row : rows) {
        csv += format_nu(row.nu) + "," + metrics_csv_fields(row.grand) + "\n";
    }
    const std::filesystem::path path =
        std::filesystem::path(config.output_dir) /
        (result_stem(dataset, config, "_nu_sweep") + ".csv");
    write_text_file(path, csv);
    return rows;
}

std::filesystem::path export_latent(const ExperimentConfig& config) {
    validate(config);
    const TabularDataset dataset =
        load_csv(config.dataset_path, config.label_column, config.has_header);
    const std::vector<std::size_t> arch = config.resolved_arch(dataset.num_attributes());
    if (arch.back() != 2) {
        throw std::invalid_argument("export_latent: latent dimension must be 2 (got " +
                                    std::to_string(arch.back()) + ")");
    }

    const std::vector<ScenarioSplit> scenarios =
        make_loco_scenarios(dataset, config.folds, config.seed);
    const std::string want_class = config.export_ood_class.empty()
                                       ? dataset.class_names[canonical_class_order(dataset)[0]]
                                       : config.export_ood_class;
    const ScenarioSplit* chosen = nullptr;
    for (const ScenarioSplit& split : scenarios) {
        if (dataset.class_names[split.ood_class] == want_class &&
            split.fold == config.export_fold) {
            chosen = &split;
            break;
        }
    }
    if (!chosen) {
        throw std::invalid_argument("export_latent: no scenario with ood class '" + want_class +
                                    "' and fold " + std::to_string(config.export_fold));
    }

    const ScenarioContext ctx = make_context(dataset, chosen->ood_class);
    const Checkpoint model = train_scenario(dataset, *chosen, config, ctx);

    std::string csv = "x,y,class,kind,split\n";
    const auto append_rows = [&](std::span<const std::size_t> indices, const char* kind,
                                 const char* split_tag) {
        const Matrix rows =
            zscore_apply(dataset.features.gather_rows(indices), model.normalization);
        const Matrix latent = embed_rows(model, rows);
        for (std::size_t i = 0; i < latent.rows(); ++i) {
            csv += format_double(latent(i, 0)) + "," + format_double(latent(i, 1)) + "," +
                   dataset.class_names[dataset.labels[indices[i]]] + "," + kind + "," +
                   split_tag + "\n";
        }
    };
    append_rows(chosen->train_indices, "id", "train");
    append_rows(chosen->id_test_indices, "id", "id_test");
    append_rows(chosen->ood_test_indices, "ood", "ood_test");

    const auto append_centers = [&](const Matrix& centers, bool named) {
        for (std::size_t k = 0; k < centers.rows(); ++k) {
            csv += format_double(centers(k, 0)) + "," + format_double(centers(k, 1)) + "," +
                   (named ? ctx.id_class_names[k] : std::string("")) + ",center,center\n";
        }
    };
    switch (config.method) {
        case Method::kDeepMcdd: append_centers(model.dm_head->means, true); break;
        case Method::kSoftMcdd: append_centers(model.spheres->centers, true); break;
        case Method::kEuclidCenter: append_centers(*model.euclid_centers, true); break;
        case Method::kMahalanobis: append_centers(model.mahalanobis->class_means, true); break;
        case Method::kDeepSvdd: {
            Matrix center(1, 2);
            center(0, 0) = model.svdd->center[0];
            center(0, 1) = model.svdd->center[1];
            append_centers(center, false);
            break;
        }
        case Method::kSoftmaxMsp: break; // no centers to export
    }

    std::filesystem::create_directories(config.output_dir);
    const std::filesystem::path path =
        std::filesystem::path(config.output_dir) /
        (result_stem(dataset, config, "_latent2d") + ".csv");
    write_text_file(path, csv);
    return path;
}

// ---- Gradient self-check ----

namespace {

double relative_error(double analytic, double numeric) {
    const double diff = std::abs(analytic - numeric);
    if (diff <= 1e-8) return 0.0; // absolute floor
    return diff / std::max(std::abs(analytic), std::abs(numeric));
}

// Central finite differences over one tensor, comparing against the
// analytic gradient via `recompute` (which must return the fresh loss).
template <typename LossFn>
double fd_max_rel_error(std::span<double> values, std::span<const double> analytic,
                        LossFn&& loss, double h = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + h;
        const double up = loss();
        values[i] = saved - h;
        const double down = loss();
        values[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        worst = std::max(worst, relative_error(analytic[i], numeric));
    }
    return worst;
}

struct GaussianInstance {
    Matrix data;
    std::vector<std::size_t> labels;
    MLPParams network;
    DMLayerParams head;
    double nu = 0.7;
};

// Instances are redrawn until every pre-activation and raw log sigma sits
// clear of its kink, so the finite-difference probe never crosses one.
GaussianInstance make_gaussian_instance(std::uint64_t seed) {
    const std::vector<std::size_t> arch = {5, 7, 6, 4};
    const std::size_t n = 6;
    const std::size_t k_classes = 3;
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(mix_seed(seed, 0x67636865636bULL, attempt));
        GaussianInstance inst;
        inst.data = Matrix(n, arch.front());
        for (std::size_t i = 0; i < inst.data.size(); ++i) inst.data.data()[i] = rng.normal();
        inst.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            inst.labels[i] = static_cast<std::size_t>(rng.uniform_int(k_classes));
        }
        inst.network = init_params(arch, mix_seed(seed, 11, attempt));
        for (auto& layer : inst.network.layers) {
            for (double& b : layer.biases) b = 0.1 * rng.normal();
        }
        inst.head = init_dm_layer(k_classes, arch.back(), mix_seed(seed, 12, attempt));
        for (std::size_t k = 0; k < k_classes; ++k) {
            const double magnitude = rng.uniform(0.1, 0.4);
            inst.head.raw_log_sigma[k] = (rng.uniform() < 0.5 ? -magnitude : magnitude);
            inst.head.biases[k] = 0.2 * rng.normal();
        }

        ForwardCache cache;
        mlp_forward(inst.network, inst.data, &cache);
        double closest = std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l + 1 < cache.pre_activations.size(); ++l) {
            for (std::size_t i = 0; i < cache.pre_activations[l].size(); ++i) {
                closest = std::min(closest, std::abs(cache.pre_activations[l].data()[i]));
            }
        }
        if (closest > 1e-3) return inst;
    }
}

struct HingeInstance {
    Matrix data;
    std::vector<std::size_t> labels;
    MLPParams network;
    SphereParams spheres;
    double nu = 0.5;
};

HingeInstance make_hinge_instance(std::uint64_t seed) {
    const std::vector<std::size_t> arch = {4, 6, 5};
    const std::size_t n = 5;
    const std::size_t k_classes = 2;
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(mix_seed(seed, 0x68696e6765ULL, attempt));
        HingeInstance inst;
        inst.data = Matrix(n, arch.front());
        for (std::size_t i = 0; i < inst.data.size(); ++i) inst.data.data()[i] = rng.normal();
        inst.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            inst.labels[i] = static_cast<std::size_t>(rng.uniform_int(k_classes));
        }
        inst.network = init_params(arch, mix_seed(seed, 21, attempt));
        for (auto& layer : inst.network.layers) {
            for (double& b : layer.biases) b = 0.1 * rng.normal();
        }
        inst.spheres.centers = Matrix(k_classes, arch.back());
        for (std::size_t i = 0; i < inst.spheres.centers.size(); ++i) {
            inst.spheres.centers.data()[i] = rng.normal();
        }
        inst.spheres.radii.resize(k_classes);
        for (double& r : inst.spheres.radii) r = rng.uniform(0.5, 1.5);

        ForwardCache cache;
        const Matrix latent = mlp_forward(inst.network, inst.data, &cache);
        double closest = std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l + 1 < cache.pre_activations.size(); ++l) {
            for (std::size_t i = 0; i < cache.pre_activations[l].size(); ++i) {
                closest = std::min(closest, std::abs(cache.pre_activations[l].data()[i]));
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < k_classes; ++k) {
                const double margin =
                    squared_distance(latent.row(i), inst.spheres.centers.row(k)) -
                    inst.spheres.radii[k] * inst.spheres.radii[k];
                closest = std::min(closest, std::abs(margin));
            }
        }
        if (closest > 1e-3) return inst;
    }
}

void maybe_corrupt(std::vector<ConstTensorRef>& grads, std::vector<std::vector<double>>& owned,
                   const std::string& corrupt_group) {
    if (corrupt_group.empty()) return;
    for (std::size_t g = 0; g < grads.size(); ++g) {
        if (grads[g].path == corrupt_group && !grads[g].values.empty()) {
            owned.emplace_back(grads[g].values.begin(), grads[g].values.end());
            owned.back()[0] += 0.01;
            grads[g] = {grads[g].path, owned.back()};
        }
    }
}

} // namespace

GradCheckReport gradcheck(std::uint64_t seed, const std::string& corrupt_group) {
    GradCheckReport report;

    {
        GaussianInstance inst = make_gaussian_instance(seed);
        const auto loss = [&]() {
            const Matrix latent = mlp_forward(inst.network, inst.data);
            const DistanceScores dist = compute_distances(latent, inst.head);
            return mcdd_loss(dist, inst.head, inst.labels, inst.nu).total;
        };

        ForwardCache cache;
        const Matrix latent = mlp_forward(inst.network, inst.data, &cache);
        const DMBackwardResult back = mcdd_backward(latent, inst.head, inst.labels, inst.nu);
        const MLPGradients net_grads = mlp_backward(inst.network, cache, back.d_latent);

        std::vector<TensorRef> params = trainable_tensors(inst.network, "network");
        for (auto& t : trainable_tensors(inst.head, "dm")) params.push_back(t);
        std::vector<ConstTensorRef> grads = gradient_tensors(net_grads, true, "network");
        for (auto& t : gradient_tensors(back.head, "dm")) grads.push_back(t);
        std::vector<std::vector<double>> owned;
        maybe_corrupt(grads, owned, corrupt_group);

        // Collapse per-layer tensors into the spec's parameter groups.
        const auto group_of = [](const std::string& path) -> std::string {
            if (path.rfind("network", 0) == 0) {
                return path.find("weights") != std::string::npos ? "gaussian.network.weights"
                                                                 : "gaussian.network.biases";
            }
            return "gaussian." + path;
        };
        std::vector<std::pair<std::string, double>> group_errors = {
            {"gaussian.network.weights", 0.0}, {"gaussian.network.biases", 0.0},
            {"gaussian.dm.means", 0.0},        {"gaussian.dm.raw_log_sigma", 0.0},
            {"gaussian.dm.biases", 0.0},
        };
        for (std::size_t g = 0; g < params.size(); ++g) {
            const double err = fd_max_rel_error(params[g].values, grads[g].values, loss);
            const std::string name = group_of(params[g].path);
            for (auto& [group, worst] : group_errors) {
                if (group == name) worst = std::max(worst, err);
            }
        }
        for (const auto& [name, err] : group_errors) {
            report.groups.push_back({name, err, err <= 1e-4});
        }
    }

    {
        HingeInstance inst = make_hinge_instance(seed);
        const auto loss = [&]() {
            const Matrix latent = mlp_forward(inst.network, inst.data);
            return soft_boundary_loss(latent, inst.labels, inst.spheres, inst.nu);
        };

        ForwardCache cache;
        const Matrix latent = mlp_forward(inst.network, inst.data, &cache);
        const Matrix d_latent =
            soft_boundary_backward(latent, inst.labels, inst.spheres, inst.nu);
        const MLPGradients net_grads = mlp_backward(inst.network, cache, d_latent);

        std::vector<TensorRef> params = trainable_tensors(inst.network, "network");
        std::vector<ConstTensorRef> grads = gradient_tensors(net_grads, true, "network");
        std::vector<std::vector<double>> owned;
        maybe_corrupt(grads, owned, corrupt_group);

        double worst_weights = 0.0;
        double worst_biases = 0.0;
        for (std::size_t g = 0; g < params.size(); ++g) {
            const double err = fd_max_rel_error(params[g].values, grads[g].values, loss);
            if (params[g].path.find("weights") != std::string::npos) {
                worst_weights = std::max(worst_weights, err);
            } else {
                worst_biases = std::max(worst_biases, err);
            }
        }
        report.groups.push_back({"hinge.network.weights", worst_weights, worst_weights <= 1e-4});
        report.groups.push_back({"hinge.network.biases", worst_biases, worst_biases <= 1e-4});
    }

    report.pass = std::all_of(report.groups.begin(), report.groups.end(),
                              [](const GradCheckGroup& g) { return g.pass; });
    return report;
}

} // namespace mcdd
