#include <catch2/catch_amalgamated.hpp>

#include "pnsis/metrics.hpp"
#include "pnsis/rng.hpp"

using namespace pnsis;

TEST_CASE("roc_auc on hand cases") {
    CHECK(roc_auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == 0.75);
    CHECK(roc_auc({0.2, 0.9}, {0, 1}) == 1.0);
    CHECK(roc_auc({0.9, 0.2}, {0, 1}) == 0.0);
    CHECK(roc_auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);  // all ties -> midrank
}

TEST_CASE("roc_auc complement identity") {
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> s;
        std::vector<int> y;
        for (int i = 0; i < 40; ++i) {
            s.push_back(rng.uniform());
            y.push_back(rng.bernoulli(0.4) ? 1 : 0);
        }
        y[0] = 0;
        y[1] = 1;  // both classes present
        std::vector<int> flipped;
        for (int v : y) flipped.push_back(1 - v);
        CHECK(std::abs(roc_auc(s, y) + roc_auc(s, flipped) - 1.0) <= 1e-15);
    }
}

TEST_CASE("roc_auc is invariant under monotone score transforms") {
    Rng rng(6);
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < 60; ++i) {
        s.push_back(rng.uniform(-2.0, 2.0));
        y.push_back(rng.bernoulli(0.5) ? 1 : 0);
    }
    y[0] = 0;
    y[1] = 1;
    std::vector<double> warped;
    for (double v : s) warped.push_back(std::exp(3.0 * v) - 7.0);
    CHECK(roc_auc(s, y) == roc_auc(warped, y));
}

TEST_CASE("roc_auc rejects bad input") {
    CHECK_THROWS_AS(roc_auc({0.1}, {1, 0}), ArgumentError);
    CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {1, 2}), ArgumentError);
    CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {1, 1}), ArgumentError);
    CHECK_THROWS_AS(roc_auc({}, {}), ArgumentError);
}

TEST_CASE("mean and sample standard deviation") {
    CHECK(mean({1.0, 2.0, 3.0}) == 2.0);
    CHECK(sample_std({2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0}) == Catch::Approx(2.13809).margin(1e-4));
    CHECK(sample_std({3.0}) == 0.0);
    CHECK_THROWS_AS(mean({}), ArgumentError);
}
