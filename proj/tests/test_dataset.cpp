#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "mcdd/dataset.hpp"
#include "mcdd/rng.hpp"

using namespace mcdd;

namespace {

std::filesystem::path write_temp_csv(const std::string& name, const std::string& content) {
    const std::filesystem::path path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << content;
    return path;
}

} // namespace

TEST_CASE("labels map to dense ids in first-occurrence order") {
    const auto path = write_temp_csv("mcdd_basic.csv",
                                     "x,y,label\n"
                                     "1,2,a\n"
                                     "3,4,b\n"
                                     "5,6,a\n");
    const TabularDataset d = load_csv(path, "label", true);
    CHECK(d.num_rows() == 3);
    CHECK(d.num_attributes() == 2);
    CHECK(d.labels == std::vector<std::size_t>{0, 1, 0});
    CHECK(d.class_names == std::vector<std::string>{"a", "b"});
    CHECK(d.features(2, 1) == 6.0);
    std::filesystem::remove(path);
}

TEST_CASE("label column can be given as an index, header optional") {
    const auto path = write_temp_csv("mcdd_idx.csv",
                                     "7,1.5,2.5\n"
                                     "8,3.5,4.5\n");
    const TabularDataset d = load_csv(path, "0", false);
    CHECK(d.num_attributes() == 2);
    CHECK(d.class_names == std::vector<std::string>{"7", "8"});
    CHECK(d.features(0, 0) == 1.5);
    std::filesystem::remove(path);
}

TEST_CASE("unparsable cells are reported with row and column") {
    const auto path = write_temp_csv("mcdd_bad.csv",
                                     "x,y,label\n"
                                     "1,2,a\n"
                                     "1,oops,b\n");
    CHECK_THROWS_WITH_AS(load_csv(path, "label", true), doctest::Contains("row 3"),
                         std::invalid_argument);
    std::filesystem::remove(path);
}

TEST_CASE("ragged rows are rejected") {
    const auto path = write_temp_csv("mcdd_ragged.csv",
                                     "x,y,label\n"
                                     "1,2,a\n"
                                     "1,2,3,a\n");
    CHECK_THROWS_AS(load_csv(path, "label", true), std::invalid_argument);
    std::filesystem::remove(path);
}

TEST_CASE("missing label column and missing file are validation errors") {
    const auto path = write_temp_csv("mcdd_nolabel.csv", "x,y\n1,2\n");
    CHECK_THROWS_AS(load_csv(path, "label", true), std::invalid_argument);
    CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", "label", true), std::invalid_argument);
    std::filesystem::remove(path);
}

TEST_CASE("label mapping is stable across reloads") {
    const auto path = write_temp_csv("mcdd_stable.csv",
                                     "x,label\n1,z\n2,q\n3,z\n4,m\n");
    const TabularDataset a = load_csv(path, "label", true);
    const TabularDataset b = load_csv(path, "label", true);
    CHECK(a.labels == b.labels);
    CHECK(a.class_names == b.class_names);
    std::filesystem::remove(path);
}

TEST_CASE("canonical class order sorts names numerically when possible") {
    const auto path = write_temp_csv("mcdd_order.csv",
                                     "x,label\n1,10\n2,2\n3,1\n");
    const TabularDataset d = load_csv(path, "label", true);
    // first-occurrence ids: 10 -> 0, 2 -> 1, 1 -> 2
    const std::vector<std::size_t> order = canonical_class_order(d);
    CHECK(d.class_names[order[0]] == "1");
    CHECK(d.class_names[order[1]] == "2");
    CHECK(d.class_names[order[2]] == "10");
    std::filesystem::remove(path);
}

TEST_CASE("load_features_csv reads every column") {
    const auto path = write_temp_csv("mcdd_feat.csv", "a,b\n1,2\n3,4\n");
    const Matrix m = load_features_csv(path, true);
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 2);
    CHECK(m(1, 1) == 4.0);
    std::filesystem::remove(path);
}

TEST_CASE("zscore pins the population estimator") {
    Matrix features(2, 2);
    features(0, 0) = 0.0; features(0, 1) = 5.0;
    features(1, 0) = 2.0; features(1, 1) = 5.0;
    const std::vector<std::size_t> idx = {0, 1};
    const NormalizationStats stats = zscore_fit(features, idx);
    CHECK(stats.mean[0] == 1.0);
    CHECK(stats.stddev[0] == 1.0); // population std of {0, 2}
    CHECK(stats.stddev[1] == 1.0); // zero-variance rule

    const Matrix normalized = zscore_apply(features, stats);
    CHECK(normalized(0, 0) == -1.0);
    CHECK(normalized(1, 0) == 1.0);
    CHECK(normalized(0, 1) == 0.0); // constant attribute centers to zero
}

TEST_CASE("fit on train only: shifted test rows keep nonzero statistics") {
    Rng rng(3);
    Matrix features(40, 1);
    for (std::size_t i = 0; i < 20; ++i) features(i, 0) = rng.normal();
    for (std::size_t i = 20; i < 40; ++i) features(i, 0) = 10.0 + rng.normal();
    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < 20; ++i) train_idx.push_back(i);

    const NormalizationStats stats = zscore_fit(features, train_idx);
    const Matrix normalized = zscore_apply(features, stats);
    double test_mean = 0.0;
    for (std::size_t i = 20; i < 40; ++i) test_mean += normalized(i, 0);
    test_mean /= 20.0;
    CHECK(test_mean > 3.0); // the shifted block does not re-center to zero
}

TEST_CASE("normalize then invert is the identity within 1e-10") {
    Rng rng(5);
    Matrix features(30, 4);
    for (std::size_t i = 0; i < features.size(); ++i) {
        features.data()[i] = 100.0 * rng.normal() + 50.0;
    }
    std::vector<std::size_t> idx(30);
    for (std::size_t i = 0; i < 30; ++i) idx[i] = i;
    const NormalizationStats stats = zscore_fit(features, idx);
    const Matrix round_trip = zscore_invert(zscore_apply(features, stats), stats);
    for (std::size_t i = 0; i < features.size(); ++i) {
        CHECK(round_trip.data()[i] == doctest::Approx(features.data()[i]).epsilon(1e-10));
    }
}

TEST_CASE("zscore_fit rejects empty index sets") {
    Matrix features(2, 2);
    CHECK_THROWS_AS(zscore_fit(features, std::vector<std::size_t>{}), std::invalid_argument);
}

namespace {

TabularDataset synthetic_dataset(std::size_t classes, std::size_t per_class) {
    TabularDataset d;
    d.name = "synthetic";
    d.features = Matrix(classes * per_class, 2);
    Rng rng(9);
    for (std::size_t i = 0; i < d.features.size(); ++i) d.features.data()[i] = rng.normal();
    for (std::size_t k = 0; k < classes; ++k) {
        d.class_names.push_back("c" + std::to_string(k));
        for (std::size_t i = 0; i < per_class; ++i) d.labels.push_back(k);
    }
    return d;
}

} // namespace

TEST_CASE("leave-one-class-out produces K x folds scenarios with the right shape") {
    const TabularDataset d = synthetic_dataset(6, 25);
    const auto scenarios = make_loco_scenarios(d, 5, 7);
    CHECK(scenarios.size() == 30);

    for (const ScenarioSplit& s : scenarios) {
        // The OOD class never leaks into train or ID test rows.
        for (std::size_t i : s.train_indices) CHECK(d.labels[i] != s.ood_class);
        for (std::size_t i : s.id_test_indices) CHECK(d.labels[i] != s.ood_class);
        for (std::size_t i : s.ood_test_indices) CHECK(d.labels[i] == s.ood_class);
        CHECK(s.ood_test_indices.size() == 25);

        // Disjoint train/test.
        std::set<std::size_t> train(s.train_indices.begin(), s.train_indices.end());
        for (std::size_t i : s.id_test_indices) CHECK(train.count(i) == 0);
    }

    // Across the folds of one OOD class, ID test sets partition the ID rows.
    std::set<std::size_t> seen;
    for (std::size_t f = 0; f < 5; ++f) {
        for (std::size_t i : scenarios[f].id_test_indices) {
            CHECK(seen.insert(i).second); // exactly once
        }
    }
    CHECK(seen.size() == 5 * 25);
}

TEST_CASE("folds are stratified within one sample") {
    const TabularDataset d = synthetic_dataset(3, 23); // 23 = 4*5 + 3 forces remainders
    const auto scenarios = make_loco_scenarios(d, 5, 1);
    for (const ScenarioSplit& s : scenarios) {
        std::vector<std::size_t> counts(3, 0);
        for (std::size_t i : s.id_test_indices) counts[d.labels[i]] += 1;
        for (std::size_t k = 0; k < 3; ++k) {
            if (k == s.ood_class) continue;
            CHECK(counts[k] >= 4);
            CHECK(counts[k] <= 5);
        }
    }
}

TEST_CASE("scenario construction is bit-deterministic per seed") {
    const TabularDataset d = synthetic_dataset(4, 12);
    const auto a = make_loco_scenarios(d, 4, 42);
    const auto b = make_loco_scenarios(d, 4, 42);
    const auto c = make_loco_scenarios(d, 4, 43);
    REQUIRE(a.size() == b.size());
    bool same = true;
    bool diff_seed_changed = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        same = same && a[i].train_indices == b[i].train_indices &&
               a[i].id_test_indices == b[i].id_test_indices;
        diff_seed_changed =
            diff_seed_changed || a[i].id_test_indices != c[i].id_test_indices;
    }
    CHECK(same);
    CHECK(diff_seed_changed);
}

TEST_CASE("scenario validation errors") {
    const TabularDataset d = synthetic_dataset(3, 4);
    CHECK_THROWS_AS(make_loco_scenarios(d, 1, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_loco_scenarios(d, 5, 0), std::invalid_argument); // 4 < folds
}

#ifdef MCDD_DATA_DIR
TEST_CASE("bundled shuttle file matches its published shape") {
    const std::filesystem::path path = std::filesystem::path(MCDD_DATA_DIR) / "shuttle.csv";
    REQUIRE(std::filesystem::exists(path));
    const TabularDataset d = load_csv(path, "class", true);
    CHECK(d.num_rows() == 58000);
    CHECK(d.num_attributes() == 9);
    CHECK(d.num_classes() == 7);
}

TEST_CASE("gas sensor file, when present, matches its published shape") {
    const std::filesystem::path path = std::filesystem::path(MCDD_DATA_DIR) / "gas_sensor.csv";
    if (!std::filesystem::exists(path)) {
        MESSAGE("data/gas_sensor.csv not present; see README for how to obtain it");
        return;
    }
    const TabularDataset d = load_csv(path, "class", true);
    CHECK(d.num_rows() == 13910);
    CHECK(d.num_attributes() == 128);
    CHECK(d.num_classes() == 6);
}
#endif
