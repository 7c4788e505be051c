#include "mcdd/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace mcdd {

using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& rows) {
    if (!rows.is_array() || rows.empty()) {
        throw std::invalid_argument("checkpoint: expected a non-empty matrix");
    }
    const std::size_t n_rows = rows.size();
    const std::size_t n_cols = rows[0].size();
    std::vector<double> data;
    data.reserve(n_rows * n_cols);
    for (const json& row : rows) {
        if (!row.is_array() || row.size() != n_cols) {
            throw std::invalid_argument("checkpoint: ragged matrix");
        }
        for (const json& v : row) data.push_back(v.get<double>());
    }
    return Matrix::from_rows(n_rows, n_cols, std::move(data));
}

json network_to_json(const MLPParams& net) {
    json layers = json::array();
    for (const auto& layer : net.layers) {
        layers.push_back({{"weights", matrix_to_json(layer.weights)},
                          {"biases", layer.biases}});
    }
    return {{"layers", std::move(layers)},
            {"activation", "relu"},
            {"use_biases", net.use_biases}};
}

MLPParams network_from_json(const json& j) {
    MLPParams net;
    if (j.at("activation").get<std::string>() != "relu") {
        throw std::invalid_argument("checkpoint: unknown activation tag");
    }
    net.use_biases = j.at("use_biases").get<bool>();
    for (const json& layer : j.at("layers")) {
        DenseLayerParams params;
        params.weights = matrix_from_json(layer.at("weights"));
        params.biases = layer.at("biases").get<std::vector<double>>();
        if (params.biases.size() != params.weights.cols()) {
            throw std::invalid_argument("checkpoint: bias width mismatch");
        }
        net.layers.push_back(std::move(params));
    }
    if (net.layers.empty()) throw std::invalid_argument("checkpoint: empty network");
    return net;
}

} // namespace

std::string to_string(Method method) {
    switch (method) {
        case Method::kDeepMcdd: return "deep-mcdd";
        case Method::kSoftMcdd: return "soft-mcdd";
        case Method::kSoftmaxMsp: return "softmax-msp";
        case Method::kMahalanobis: return "mahalanobis";
        case Method::kDeepSvdd: return "deep-svdd";
        case Method::kEuclidCenter: return "euclid-center";
    }
    throw std::invalid_argument("to_string: bad method");
}

Method method_from_string(const std::string& name) {
    if (name == "deep-mcdd") return Method::kDeepMcdd;
    if (name == "soft-mcdd") return Method::kSoftMcdd;
    if (name == "softmax-msp") return Method::kSoftmaxMsp;
    if (name == "mahalanobis") return Method::kMahalanobis;
    if (name == "deep-svdd") return Method::kDeepSvdd;
    if (name == "euclid-center") return Method::kEuclidCenter;
    throw std::invalid_argument("unknown method '" + name + "'");
}

bool method_classifies(Method method) { return method != Method::kDeepSvdd; }

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    json j;
    j["format"] = "mcdd-checkpoint";
    j["schema_version"] = kSchemaVersion;
    j["method"] = to_string(checkpoint.method);
    j["network"] = network_to_json(checkpoint.network);
    j["train_config"] = {{"nu", checkpoint.train_config.nu},
                         {"epochs", checkpoint.train_config.epochs},
                         {"batch_size", checkpoint.train_config.batch_size},
                         {"learning_rate", checkpoint.train_config.learning_rate},
                         {"seed", checkpoint.train_config.seed}};
    j["normalization"] = {{"mean", checkpoint.normalization.mean},
                          {"stddev", checkpoint.normalization.stddev}};
    j["class_names"] = checkpoint.class_names;

    if (checkpoint.dm_head) {
        j["dm_head"] = {{"means", matrix_to_json(checkpoint.dm_head->means)},
                        {"raw_log_sigma", checkpoint.dm_head->raw_log_sigma},
                        {"biases", checkpoint.dm_head->biases}};
    }
    if (checkpoint.spheres) {
        j["spheres"] = {{"centers", matrix_to_json(checkpoint.spheres->centers)},
                        {"radii", checkpoint.spheres->radii}};
    }
    if (checkpoint.softmax_head) {
        j["softmax_head"] = {{"weights", matrix_to_json(checkpoint.softmax_head->weights)},
                             {"biases", checkpoint.softmax_head->biases}};
    }
    if (checkpoint.mahalanobis) {
        j["mahalanobis"] = {{"class_means", matrix_to_json(checkpoint.mahalanobis->class_means)},
                            {"tied_covariance",
                             matrix_to_json(checkpoint.mahalanobis->tied_covariance)},
                            {"precision", matrix_to_json(checkpoint.mahalanobis->precision)}};
    }
    if (checkpoint.svdd) j["svdd"] = {{"center", checkpoint.svdd->center}};
    if (checkpoint.euclid_centers) {
        j["euclid"] = {{"centers", matrix_to_json(*checkpoint.euclid_centers)}};
    }

    std::ofstream out(path);
    if (!out) throw std::invalid_argument("save_checkpoint: cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("load_checkpoint: cannot open '" + path.string() + "'");
    json j;
    in >> j;

    if (j.value("format", "") != "mcdd-checkpoint") {
        throw std::invalid_argument("load_checkpoint: not a checkpoint file");
    }
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
        throw std::invalid_argument("load_checkpoint: unsupported schema version " +
                                    j.at("schema_version").dump());
    }

    Checkpoint checkpoint;
    checkpoint.method = method_from_string(j.at("method").get<std::string>());
    checkpoint.network = network_from_json(j.at("network"));
    const json& cfg = j.at("train_config");
    checkpoint.train_config.nu = cfg.at("nu").get<double>();
    checkpoint.train_config.epochs = cfg.at("epochs").get<std::size_t>();
    checkpoint.train_config.batch_size = cfg.at("batch_size").get<std::size_t>();
    checkpoint.train_config.learning_rate = cfg.at("learning_rate").get<double>();
    checkpoint.train_config.seed = cfg.at("seed").get<std::uint64_t>();
    checkpoint.normalization.mean = j.at("normalization").at("mean").get<std::vector<double>>();
    checkpoint.normalization.stddev =
        j.at("normalization").at("stddev").get<std::vector<double>>();
    checkpoint.class_names = j.at("class_names").get<std::vector<std::string>>();

    if (j.contains("dm_head")) {
        DMLayerParams head;
        head.means = matrix_from_json(j["dm_head"].at("means"));
        head.raw_log_sigma = j["dm_head"].at("raw_log_sigma").get<std::vector<double>>();
        head.biases = j["dm_head"].at("biases").get<std::vector<double>>();
        checkpoint.dm_head = std::move(head);
    }
    if (j.contains("spheres")) {
        SphereParams spheres;
        spheres.centers = matrix_from_json(j["spheres"].at("centers"));
        spheres.radii = j["spheres"].at("radii").get<std::vector<double>>();
        checkpoint.spheres = std::move(spheres);
    }
    if (j.contains("softmax_head")) {
        SoftmaxHeadParams head;
        head.weights = matrix_from_json(j["softmax_head"].at("weights"));
        head.biases = j["softmax_head"].at("biases").get<std::vector<double>>();
        checkpoint.softmax_head = std::move(head);
    }
    if (j.contains("mahalanobis")) {
        MahalanobisStats stats;
        stats.class_means = matrix_from_json(j["mahalanobis"].at("class_means"));
        stats.tied_covariance = matrix_from_json(j["mahalanobis"].at("tied_covariance"));
        stats.precision = matrix_from_json(j["mahalanobis"].at("precision"));
        checkpoint.mahalanobis = std::move(stats);
    }
    if (j.contains("svdd")) {
        SVDDParams params;
        params.center = j["svdd"].at("center").get<std::vector<double>>();
        checkpoint.svdd = std::move(params);
    }
    if (j.contains("euclid")) {
        checkpoint.euclid_centers = matrix_from_json(j["euclid"].at("centers"));
    }
    return checkpoint;
}

} // namespace mcdd
