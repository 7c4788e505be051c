#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "mcdd/checkpoint.hpp"
#include "mcdd/rng.hpp"

using namespace mcdd;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

std::vector<double> random_vector(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

Checkpoint random_checkpoint(Method method, Rng& rng) {
    Checkpoint c;
    c.method = method;
    c.network = init_params(std::vector<std::size_t>{3, 5, 4}, rng.next_u64());
    for (auto& layer : c.network.layers) layer.biases = random_vector(layer.biases.size(), rng);
    c.train_config.nu = 0.325;
    c.train_config.epochs = 17;
    c.train_config.batch_size = 64;
    c.train_config.learning_rate = 0.00725;
    c.train_config.seed = 991;
    c.normalization.mean = random_vector(3, rng);
    c.normalization.stddev = {1.0, 2.5, 0.75};
    c.class_names = {"a", "b"};
    switch (method) {
        case Method::kDeepMcdd: {
            DMLayerParams head;
            head.means = random_matrix(2, 4, rng);
            head.raw_log_sigma = random_vector(2, rng);
            head.biases = random_vector(2, rng);
            c.dm_head = head;
            break;
        }
        case Method::kSoftMcdd: {
            SphereParams spheres;
            spheres.centers = random_matrix(2, 4, rng);
            spheres.radii = {0.5, 1.25};
            c.spheres = spheres;
            break;
        }
        case Method::kSoftmaxMsp: {
            SoftmaxHeadParams head;
            head.weights = random_matrix(2, 4, rng);
            head.biases = random_vector(2, rng);
            c.softmax_head = head;
            break;
        }
        case Method::kMahalanobis: {
            MahalanobisStats stats;
            stats.class_means = random_matrix(2, 4, rng);
            stats.tied_covariance = random_matrix(4, 4, rng);
            stats.precision = random_matrix(4, 4, rng);
            c.mahalanobis = stats;
            SoftmaxHeadParams head;
            head.weights = random_matrix(2, 4, rng);
            head.biases = random_vector(2, rng);
            c.softmax_head = head;
            break;
        }
        case Method::kDeepSvdd: {
            c.network.use_biases = false;
            c.svdd = SVDDParams{random_vector(4, rng)};
            break;
        }
        case Method::kEuclidCenter: {
            c.euclid_centers = random_matrix(2, 4, rng);
            break;
        }
    }
    return c;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

} // namespace

TEST_CASE("every variant round-trips bit-exactly") {
    Rng rng(12345);
    for (Method method : {Method::kDeepMcdd, Method::kSoftMcdd, Method::kSoftmaxMsp,
                          Method::kMahalanobis, Method::kDeepSvdd, Method::kEuclidCenter}) {
        const Checkpoint original = random_checkpoint(method, rng);
        const auto path = temp_file("mcdd_ckpt_" + to_string(method) + ".json");
        save_checkpoint(original, path);
        const Checkpoint loaded = load_checkpoint(path);

        CHECK(loaded.method == method);
        CHECK(loaded.network.use_biases == original.network.use_biases);
        REQUIRE(loaded.network.layers.size() == original.network.layers.size());
        for (std::size_t l = 0; l < loaded.network.layers.size(); ++l) {
            CHECK(loaded.network.layers[l].weights == original.network.layers[l].weights);
            CHECK(loaded.network.layers[l].biases == original.network.layers[l].biases);
        }
        CHECK(loaded.train_config.nu == original.train_config.nu);
        CHECK(loaded.train_config.learning_rate == original.train_config.learning_rate);
        CHECK(loaded.train_config.seed == original.train_config.seed);
        CHECK(loaded.normalization.mean == original.normalization.mean);
        CHECK(loaded.normalization.stddev == original.normalization.stddev);
        CHECK(loaded.class_names == original.class_names);

        switch (method) {
            case Method::kDeepMcdd:
                CHECK(loaded.dm_head->means == original.dm_head->means);
                CHECK(loaded.dm_head->raw_log_sigma == original.dm_head->raw_log_sigma);
                CHECK(loaded.dm_head->biases == original.dm_head->biases);
                break;
            case Method::kSoftMcdd:
                CHECK(loaded.spheres->centers == original.spheres->centers);
                CHECK(loaded.spheres->radii == original.spheres->radii);
                break;
            case Method::kSoftmaxMsp:
                CHECK(loaded.softmax_head->weights == original.softmax_head->weights);
                CHECK(loaded.softmax_head->biases == original.softmax_head->biases);
                break;
            case Method::kMahalanobis:
                CHECK(loaded.mahalanobis->class_means == original.mahalanobis->class_means);
                CHECK(loaded.mahalanobis->precision == original.mahalanobis->precision);
                CHECK(loaded.softmax_head->weights == original.softmax_head->weights);
                break;
            case Method::kDeepSvdd:
                CHECK(loaded.svdd->center == original.svdd->center);
                break;
            case Method::kEuclidCenter:
                CHECK(*loaded.euclid_centers == *original.euclid_centers);
                break;
        }
        std::filesystem::remove(path);
    }
}

TEST_CASE("method tags parse both ways") {
    for (const char* name : {"deep-mcdd", "soft-mcdd", "softmax-msp", "mahalanobis",
                             "deep-svdd", "euclid-center"}) {
        CHECK(to_string(method_from_string(name)) == name);
    }
    CHECK_THROWS_AS(method_from_string("unknown"), std::invalid_argument);
    CHECK(method_classifies(Method::kDeepMcdd));
    CHECK_FALSE(method_classifies(Method::kDeepSvdd));
}

TEST_CASE("unknown schema versions are rejected") {
    Rng rng(1);
    const Checkpoint c = random_checkpoint(Method::kDeepMcdd, rng);
    const auto path = temp_file("mcdd_ckpt_version.json");
    save_checkpoint(c, path);

    // Bump the version in place.
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const auto pos = text.find("\"schema_version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 19, "\"schema_version\": 99");
    std::ofstream out(path);
    out << text;
    out.close();

    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version"),
                         std::invalid_argument);
    std::filesystem::remove(path);
}

TEST_CASE("non-checkpoint files are rejected") {
    const auto path = temp_file("mcdd_not_ckpt.json");
    std::ofstream out(path);
    out << "{\"format\": \"something-else\", \"schema_version\": 1}";
    out.close();
    CHECK_THROWS_AS(load_checkpoint(path), std::invalid_argument);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent.json"), std::invalid_argument);
    std::filesystem::remove(path);
}
