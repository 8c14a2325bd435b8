#include <catch2/catch_amalgamated.hpp>

#include "pnsis/gsd.hpp"

using namespace pnsis;

namespace {

StructureEmbedding embed_of(std::initializer_list<double> vals) {
    StructureEmbedding e;
    e.h = Vec(static_cast<long>(vals.size()));
    long i = 0;
    for (double v : vals) e.h[i++] = v;
    return e;
}

Graph random_graph(Rng& rng, int v, int d) {
    Graph g;
    g.adjacency = Mat::Zero(v, v);
    for (int i = 0; i < v; ++i)
        for (int j = i + 1; j < v; ++j)
            if (rng.bernoulli(0.5)) g.adjacency(i, j) = g.adjacency(j, i) = 1.0;
    g.features = Mat(v, d);
    for (int i = 0; i < v; ++i)
        for (int c = 0; c < d; ++c) g.features(i, c) = rng.uniform(-1.0, 1.0);
    return g;
}

std::vector<Graph> random_batch(std::uint64_t seed, int n, int d) {
    Rng rng(seed);
    std::vector<Graph> out;
    for (int i = 0; i < n; ++i) out.push_back(random_graph(rng, 2 + rng.uniform_int(5), d));
    return out;
}

}  // namespace

TEST_CASE("pairwise_l1_mean on hand cases") {
    auto h = embed_of({1.0, 2.0});
    CHECK(pairwise_l1_mean({h}, {h}) == 0.0);
    CHECK(pairwise_l1_mean({embed_of({0.0, 0.0})}, {embed_of({1.0, 2.0})}) == 3.0);
    CHECK(pairwise_l1_mean({embed_of({0.0}), embed_of({2.0})}, {embed_of({1.0})}) == 1.0);
}

TEST_CASE("pairwise_l1_mean rejects bad input") {
    CHECK_THROWS_AS(pairwise_l1_mean({}, {embed_of({1.0})}), ArgumentError);
    CHECK_THROWS_AS(pairwise_l1_mean({embed_of({1.0})}, {embed_of({1.0, 2.0})}), ArgumentError);
}

TEST_CASE("gsd of a singleton batch with itself is zero") {
    auto b = random_batch(1, 1, 2);
    GsdValue v = gsd(b, b, 2);
    CHECK(v.total == 0.0);
    CHECK(v.structure_term == 0.0);
    CHECK(v.feature_term == 0.0);
}

TEST_CASE("gsd hand case: two single-node graphs") {
    Graph a, b;
    a.adjacency = Mat::Zero(1, 1);
    a.features = Mat::Zero(1, 1);
    b = a;
    b.features(0, 0) = 3.0;
    GsdValue v = gsd({a}, {b}, 1);
    CHECK(v.feature_term == 3.0);
    StructureEmbedding ha = structure_embedding(a, 1), hb = structure_embedding(b, 1);
    CHECK(v.structure_term == (ha.h - hb.h).cwiseAbs().sum());
    CHECK(v.total == v.structure_term + v.feature_term);
}

TEST_CASE("gsd is exactly symmetric and nonnegative on 500 random pairs") {
    for (int t = 0; t < 500; ++t) {
        auto a = random_batch(derive_seed(100, t, 0), 1 + t % 3, 2);
        auto b = random_batch(derive_seed(100, t, 1), 1 + (t + 1) % 3, 2);
        GsdValue ab = gsd(a, b, 2);
        GsdValue ba = gsd(b, a, 2);
        CHECK(ab.total >= 0.0);
        CHECK(ab.total == ba.total);
        CHECK(ab.structure_term == ba.structure_term);
        CHECK(ab.feature_term == ba.feature_term);
    }
}

TEST_CASE("triangle inequality holds on 200 singleton triples") {
    for (int t = 0; t < 200; ++t) {
        auto a = random_batch(derive_seed(200, t, 0), 1, 2);
        auto b = random_batch(derive_seed(200, t, 1), 1, 2);
        auto c = random_batch(derive_seed(200, t, 2), 1, 2);
        double ab = gsd(a, b, 2).total;
        double ac = gsd(a, c, 2).total;
        double cb = gsd(c, b, 2).total;
        CHECK(ab <= ac + cb + 1e-9);
    }
}

TEST_CASE("gsd rejects mismatched feature dims and empty batches") {
    auto a = random_batch(5, 2, 2);
    auto b = random_batch(6, 2, 3);
    CHECK_THROWS_AS(gsd(a, b, 2), ArgumentError);
    CHECK_THROWS_AS(gsd(a, {}, 2), ArgumentError);
}

TEST_CASE("feature term zero-pads across node counts symmetrically") {
    Graph small, big;
    small.adjacency = Mat::Zero(1, 1);
    small.features = Mat::Ones(1, 1);
    big.adjacency = Mat::Zero(3, 3);
    big.features = Mat::Ones(3, 1);
    double d1 = feature_term_mean({small}, {big});
    double d2 = feature_term_mean({big}, {small});
    CHECK(d1 == d2);
    CHECK(d1 == Catch::Approx(std::sqrt(2.0)));  // two unmatched rows of ones
}
