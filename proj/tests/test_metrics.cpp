#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "mcdd/errors.hpp"
#include "mcdd/metrics.hpp"
#include "mcdd/rng.hpp"
#include "support/metric_oracles.hpp"

using namespace mcdd;

namespace {

// Scores drawn from a coarse grid so ties occur often.
ScoreSet random_scores(Rng& rng, std::size_t max_points = 100) {
    ScoreSet s;
    const std::size_t n_id = 1 + rng.uniform_int(max_points);
    const std::size_t n_ood = 1 + rng.uniform_int(max_points);
    for (std::size_t i = 0; i < n_id; ++i) {
        s.id_scores.push_back(0.25 * static_cast<double>(rng.uniform_int(40)) + 1.0);
    }
    for (std::size_t i = 0; i < n_ood; ++i) {
        s.ood_scores.push_back(0.25 * static_cast<double>(rng.uniform_int(40)));
    }
    return s;
}

ScoreSet perfect_separation() {
    return {{5.0, 6.0, 7.0}, {1.0, 2.0}};
}

} // namespace

TEST_CASE("perfect separation maxes out every metric") {
    const ScoreSet s = perfect_separation();
    CHECK(auroc(s) == 1.0);
    CHECK(aupr(s) == 1.0);
    CHECK(tnr_at_tpr(s) == 1.0);
    CHECK(detection_accuracy(s) == 1.0);
}

TEST_CASE("identical score multisets behave like chance") {
    const ScoreSet s = {{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}};
    CHECK(auroc(s) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(detection_accuracy(s) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("all four metrics equal their brute-force oracles on 100 random sets") {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const ScoreSet s = random_scores(rng);
        CHECK(auroc(s) == doctest::Approx(oracle::auroc_pairwise(s)).epsilon(1e-12));
        CHECK(aupr(s) == doctest::Approx(oracle::aupr_enumerated(s)).epsilon(1e-12));
        CHECK(tnr_at_tpr(s, 0.85) ==
              doctest::Approx(oracle::tnr_at_tpr_enumerated(s, 0.85)).epsilon(1e-12));
        CHECK(detection_accuracy(s) ==
              doctest::Approx(oracle::detection_accuracy_enumerated(s)).epsilon(1e-12));
    }
}

TEST_CASE("aupr approaches one half on balanced random scores") {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed * 7919 + 1);
        ScoreSet s;
        for (int i = 0; i < 1000; ++i) {
            s.id_scores.push_back(rng.normal());
            s.ood_scores.push_back(rng.normal());
        }
        total += aupr(s);
    }
    CHECK(std::abs(total / 10.0 - 0.5) < 0.1);
}

TEST_CASE("tnr threshold rule pinned on a 20-point identical-score case") {
    ScoreSet s;
    for (int i = 1; i <= 20; ++i) {
        s.id_scores.push_back(static_cast<double>(i));
        s.ood_scores.push_back(static_cast<double>(i));
    }
    // Largest tau with TPR >= 0.85 is 4 (17 of 20 id scores are >= 4);
    // three ood scores (1, 2, 3) fall below it.
    CHECK(tnr_at_tpr(s, 0.85) == doctest::Approx(0.15).epsilon(1e-15));
    CHECK(tnr_at_tpr(s, 0.85) == doctest::Approx(oracle::tnr_at_tpr_enumerated(s, 0.85)));
    CHECK(tnr_at_tpr(s, 0.85) <= 1.0 - 0.85 + 1e-9);
}

TEST_CASE("metrics are invariant under strictly increasing transforms") {
    Rng rng(555);
    const ScoreSet base = random_scores(rng, 60);
    const auto transforms = {
        +[](double x) { return 2.0 * x + 3.0; },
        +[](double x) { return x * x * x; },
        +[](double x) { return std::exp(0.1 * x); },
    };
    for (const auto& f : transforms) {
        ScoreSet t;
        for (double x : base.id_scores) t.id_scores.push_back(f(x));
        for (double x : base.ood_scores) t.ood_scores.push_back(f(x));
        CHECK(auroc(t) == doctest::Approx(auroc(base)).epsilon(1e-12));
        CHECK(aupr(t) == doctest::Approx(aupr(base)).epsilon(1e-12));
        CHECK(tnr_at_tpr(t) == doctest::Approx(tnr_at_tpr(base)).epsilon(1e-12));
        CHECK(detection_accuracy(t) ==
              doctest::Approx(detection_accuracy(base)).epsilon(1e-12));
    }
}

TEST_CASE("swapping the roles reflects auroc around one half") {
    Rng rng(777);
    for (int trial = 0; trial < 20; ++trial) {
        const ScoreSet s = random_scores(rng, 50);
        const ScoreSet swapped = {s.ood_scores, s.id_scores};
        CHECK(auroc(swapped) == doctest::Approx(1.0 - auroc(s)).epsilon(1e-12));
    }
}

TEST_CASE("metrics stay within the unit interval") {
    Rng rng(888);
    for (int trial = 0; trial < 30; ++trial) {
        const ScoreSet s = random_scores(rng, 40);
        for (double v : {auroc(s), aupr(s), tnr_at_tpr(s), detection_accuracy(s)}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("classification accuracy counts exact matches") {
    const std::vector<std::size_t> truth = {0, 1, 2, 1};
    CHECK(classification_accuracy(truth, truth) == 1.0);
    const std::vector<std::size_t> half = {0, 1, 0, 0};
    CHECK(classification_accuracy(half, truth) == 0.5);
    const std::vector<std::size_t> short_list = {0};
    CHECK_THROWS_AS(classification_accuracy(short_list, truth), std::invalid_argument);
}

TEST_CASE("score sets must be non-empty and finite") {
    CHECK_THROWS_AS(auroc(ScoreSet{{}, {1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(auroc(ScoreSet{{1.0}, {}}), std::invalid_argument);
    ScoreSet bad = {{1.0}, {std::numeric_limits<double>::quiet_NaN()}};
    CHECK_THROWS_AS(auroc(bad), NumericError);
    CHECK_THROWS_AS(tnr_at_tpr(ScoreSet{{1.0}, {0.0}}, 1.5), std::invalid_argument);
}

TEST_CASE("evaluate_scores fills the full report") {
    const ScoreSet s = perfect_separation();
    const MetricsReport report = evaluate_scores(s, 0.75);
    CHECK(report.classification_accuracy == 0.75);
    CHECK(report.auroc == 1.0);
    const MetricsReport bare = evaluate_scores(s);
    CHECK_FALSE(bare.classification_accuracy.has_value());
}
