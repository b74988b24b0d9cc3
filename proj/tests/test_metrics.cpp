#include <doctest.h>

#include <cmath>
#include <sstream>

#include "iqe/metrics.hpp"
#include "iqe/tensor.hpp"

using namespace iqe;

namespace {

// O(n^2) oracle: wins plus half-credit for ties over all positive/negative pairs.
double auroc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels) {
    double credit = 0;
    long pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) credit += 1.0;
            else if (scores[i] == scores[j]) credit += 0.5;
        }
    }
    return credit / (double)pairs;
}

}  // namespace

TEST_CASE("the worked ranking example scores exactly 0.75") {
    std::vector<double> scores{0.1, 0.4, 0.35, 0.8};
    std::vector<int> labels{0, 0, 1, 1};
    CHECK(auroc(scores, labels) == 0.75);
    CHECK(auroc_pairwise(scores, labels) == 0.75);
}

TEST_CASE("perfect separation scores one") {
    std::vector<double> scores{0.9, 0.8, 0.2, 0.1};
    std::vector<int> labels{1, 1, 0, 0};
    CHECK(auroc(scores, labels) == 1.0);
}

TEST_CASE("inverting the labels complements the area") {
    Rng rng(1);
    std::vector<double> scores;
    std::vector<int> labels, inverted;
    for (int i = 0; i < 30; ++i) {
        scores.push_back(rng.uniform());
        labels.push_back(rng.uniform() < 0.4 ? 1 : 0);
    }
    labels[0] = 1;
    labels[1] = 0;
    for (int l : labels) inverted.push_back(1 - l);
    CHECK(auroc(scores, inverted) == doctest::Approx(1.0 - auroc(scores, labels)).epsilon(1e-12));
}

TEST_CASE("single-class inputs are an explicit error") {
    std::vector<double> scores{0.1, 0.2, 0.3};
    CHECK_THROWS_AS(auroc(scores, {1, 1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(auroc(scores, {0, 0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(auroc({}, {}), std::invalid_argument);
}

TEST_CASE("rank-based area equals the pairwise oracle on 200 tie-bearing instances") {
    for (uint64_t trial = 0; trial < 200; ++trial) {
        Rng rng(mix_seed(42, trial));
        const int n = 2 + (int)(rng.next_u64() % 63);
        std::vector<double> scores;
        std::vector<int> labels;
        bool has_pos = false, has_neg = false;
        for (int i = 0; i < n; ++i) {
            // quantized scores force frequent ties
            scores.push_back(std::floor(rng.uniform() * 8.0) / 8.0);
            labels.push_back(rng.uniform() < 0.5 ? 1 : 0);
            has_pos = has_pos || labels.back() == 1;
            has_neg = has_neg || labels.back() == 0;
        }
        if (!has_pos) labels[0] = 1;
        if (!has_neg) labels[(size_t)n - 1] = 0;
        CHECK(std::abs(auroc(scores, labels) - auroc_pairwise(scores, labels)) < 1e-12);
    }
}

TEST_CASE("the area is invariant under strictly increasing transforms") {
    Rng rng(7);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 50; ++i) {
        scores.push_back(rng.uniform(-2, 2));
        labels.push_back(rng.uniform() < 0.5 ? 1 : 0);
    }
    labels[0] = 1;
    labels[1] = 0;
    const double base = auroc(scores, labels);
    std::vector<double> exp_scores, affine_scores;
    for (double s : scores) {
        exp_scores.push_back(std::exp(s));
        affine_scores.push_back(3.7 * s + 11.0);
    }
    CHECK(auroc(exp_scores, labels) == doctest::Approx(base).epsilon(1e-12));
    CHECK(auroc(affine_scores, labels) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("scoring the ground-truth mask itself gives a perfect pixel area") {
    Rng rng(9);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 500; ++i) {
        const int l = rng.uniform() < 0.1 ? 1 : 0;
        labels.push_back(l);
        scores.push_back((double)l);
    }
    labels[0] = 1;
    scores[0] = 1.0;
    CHECK(auroc(scores, labels) == 1.0);
}

TEST_CASE("reports carry one row per evaluation plus aggregate rows") {
    std::vector<EvalRow> rows;
    for (int seed = 0; seed < 3; ++seed) {
        EvalRow r;
        r.domain = "stripes";
        r.seed_label = std::to_string(seed);
        r.ac_auroc = 0.8 + 0.05 * seed;
        r.as_auroc = 0.9;
        r.has_as = true;
        r.n_images = 100;
        r.n_pixels = 409600;
        r.wall_seconds = 1.5;
        rows.push_back(r);
    }
    auto text = render_report(rows);
    std::istringstream in(text);
    std::string line;
    int lines = 0, aggregates = 0;
    while (std::getline(in, line)) {
        ++lines;
        if (line.find("AGGREGATE") != std::string::npos) ++aggregates;
    }
    CHECK(lines == 1 + 3 + 2);  // header + per-seed rows + mean/std
    CHECK(aggregates == 2);
    CHECK(text.find("stripes,AGGREGATE_MEAN,0.850000000") != std::string::npos);
}
