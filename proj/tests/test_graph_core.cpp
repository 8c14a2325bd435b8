#include <catch2/catch_amalgamated.hpp>
#include <sstream>

#include "pnsis/dataset_io.hpp"
#include "pnsis/graph.hpp"

using namespace pnsis;

namespace {

Graph triangle() {
    Graph g;
    g.adjacency = Mat::Zero(3, 3);
    g.adjacency(0, 1) = g.adjacency(1, 0) = 1.0;
    g.adjacency(1, 2) = g.adjacency(2, 1) = 1.0;
    g.adjacency(0, 2) = g.adjacency(2, 0) = 1.0;
    g.features = Mat::Zero(3, 2);
    g.features << 1, 0, 0, 1, 1, 1;
    return g;
}

Graph random_graph(Rng& rng, int v, int d) {
    Graph g;
    g.adjacency = Mat::Zero(v, v);
    for (int i = 0; i < v; ++i)
        for (int j = i + 1; j < v; ++j)
            if (rng.bernoulli(0.4)) g.adjacency(i, j) = g.adjacency(j, i) = 1.0;
    g.features = Mat(v, d);
    for (int i = 0; i < v; ++i)
        for (int c = 0; c < d; ++c) g.features(i, c) = rng.uniform(-2.0, 2.0);
    return g;
}

Dataset random_dataset(std::uint64_t seed, int n, int d, int c) {
    Rng rng(seed);
    Dataset ds;
    ds.feature_dim = d;
    ds.num_classes = c;
    for (int i = 0; i < n; ++i) {
        Graph g = random_graph(rng, 2 + rng.uniform_int(6), d);
        if (rng.bernoulli(0.8)) g.label = rng.uniform_int(c);
        if (rng.bernoulli(0.5)) g.env_id = rng.uniform_int(4);
        ds.graphs.push_back(std::move(g));
    }
    return ds;
}

bool identical(const Dataset& a, const Dataset& b) {
    if (a.feature_dim != b.feature_dim || a.num_classes != b.num_classes ||
        a.size() != b.size())
        return false;
    for (int i = 0; i < a.size(); ++i) {
        const Graph &ga = a.graphs[i], &gb = b.graphs[i];
        if (ga.label != gb.label || ga.env_id != gb.env_id) return false;
        if (ga.adjacency != gb.adjacency || ga.features != gb.features) return false;
        if (ga.gt_mask.has_value() != gb.gt_mask.has_value()) return false;
        if (ga.gt_mask && *ga.gt_mask != *gb.gt_mask) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("validate_graph accepts a valid triangle") {
    CHECK(validate_graph(triangle()).empty());
}

TEST_CASE("validate_graph flags asymmetry") {
    Graph g = triangle();
    g.adjacency(0, 1) = 0.5;
    auto v = validate_graph(g);
    CHECK(std::find(v.begin(), v.end(), "asymmetric") != v.end());
}

TEST_CASE("validate_graph flags mask outside edge set") {
    Graph g = triangle();
    Mat m = Mat::Zero(3, 3);
    m(0, 1) = m(1, 0) = 1.0;
    g.adjacency(0, 1) = g.adjacency(1, 0) = 0.0;
    g.gt_mask = m;
    auto v = validate_graph(g);
    CHECK(std::find(v.begin(), v.end(), "mask outside edge set") != v.end());
}

TEST_CASE("validate_graph flags nonzero diagonal and non-binary mask") {
    Graph g = triangle();
    g.adjacency(1, 1) = 2.0;
    auto v = validate_graph(g);
    CHECK(std::find(v.begin(), v.end(), "nonzero diagonal") != v.end());

    Graph h = triangle();
    Mat m = Mat::Zero(3, 3);
    m(0, 1) = m(1, 0) = 0.5;
    h.gt_mask = m;
    auto w = validate_graph(h);
    CHECK(std::find(w.begin(), w.end(), "mask not binary") != w.end());
}

TEST_CASE("dataset round-trips bit-exactly") {
    Dataset ds = random_dataset(7, 10, 3, 4);
    ds.graphs[2].gt_mask = ds.graphs[2].adjacency;  // full-support mask
    std::stringstream ss;
    write_dataset(ss, ds);
    Dataset back = read_dataset(ss);
    CHECK(identical(ds, back));
}

TEST_CASE("dataset round-trip holds on 100 random datasets") {
    for (int t = 0; t < 100; ++t) {
        Dataset ds = random_dataset(1000 + t, 1 + t % 7, 1 + t % 4, 2 + t % 3);
        std::stringstream ss;
        write_dataset(ss, ds);
        CHECK(identical(ds, read_dataset(ss)));
    }
}

TEST_CASE("empty file is a parse error") {
    std::stringstream ss;
    CHECK_THROWS_AS(read_dataset(ss), ParseError);
}

TEST_CASE("wrong feature arity is a schema error with a line number") {
    std::stringstream ss;
    ss << "PNSIS-DS v1 D=2 C=2\n"
       << "V=2 label=0 env=none\n"
       << "1 2 3\n"
       << "4 5\n"
       << "0 1\n"
       << "1 0\n";
    try {
        read_dataset(ss);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(e.line_number == 3);
    }
}

TEST_CASE("truncated feature block is a schema error") {
    std::stringstream ss;
    ss << "PNSIS-DS v1 D=1 C=2\n"
       << "V=3 label=none env=none\n"
       << "0.5\n";
    CHECK_THROWS_AS(read_dataset(ss), SchemaError);
}

TEST_CASE("split_environments is deterministic and disjoint") {
    Dataset ds = random_dataset(3, 10, 2, 2);
    EnvBatchPair p1 = split_environments(ds, 4, 4, 99);
    EnvBatchPair p2 = split_environments(ds, 4, 4, 99);
    CHECK(p1.indices_a == p2.indices_a);
    CHECK(p1.indices_b == p2.indices_b);
    for (int a : p1.indices_a)
        for (int b : p1.indices_b) CHECK(a != b);
    CHECK(p1.batch_a.size() == 4);
    CHECK(p1.batch_b.size() == 4);
}

TEST_CASE("split_environments rejects oversized requests") {
    Dataset ds = random_dataset(4, 10, 2, 2);
    CHECK_THROWS_AS(split_environments(ds, 6, 6, 1), ArgumentError);
    CHECK_THROWS_AS(split_environments(ds, 0, 1, 1), ArgumentError);
}

TEST_CASE("split_environments partitions a 2-graph dataset") {
    Dataset ds = random_dataset(5, 2, 2, 2);
    EnvBatchPair p = split_environments(ds, 1, 1, 42);
    std::vector<int> all = {p.indices_a[0], p.indices_b[0]};
    std::sort(all.begin(), all.end());
    CHECK(all == std::vector<int>{0, 1});
}

TEST_CASE("split_environments draws each index into batch_a near-uniformly") {
    Dataset ds = random_dataset(6, 10, 2, 2);
    std::vector<int> count(10, 0);
    const int draws = 10000;
    for (int t = 0; t < draws; ++t) {
        EnvBatchPair p = split_environments(ds, 4, 4, derive_seed(123, t));
        for (int i : p.indices_a) ++count[i];
    }
    for (int i = 0; i < 10; ++i) {
        double freq = static_cast<double>(count[i]) / draws;
        CHECK(freq == Catch::Approx(0.4).margin(0.05));
    }
}
