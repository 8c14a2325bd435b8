#include <catch2/catch_amalgamated.hpp>

#include "pnsis/synthgen.hpp"

using namespace pnsis;

namespace {

// Decode the base kind from edge counts among base-internal nodes: a tree has
// bn-1 edges, a ladder 3*bn/2 - 2, a wheel 2*(bn-1). These are distinct for
// every bn >= 4, so the decode is exact.
BaseKind decode_base(const Graph& g, int label) {
    const int motif_nodes = label == static_cast<int>(MotifKind::Crane) ? 6 : 5;
    const int bn = g.node_count() - motif_nodes;
    int internal = 0;
    for (int i = 0; i < bn; ++i)
        for (int j = i + 1; j < bn; ++j)
            if (g.adjacency(i, j) != 0.0) ++internal;
    if (internal == bn - 1) return BaseKind::Tree;
    if (internal == 3 * bn / 2 - 2) return BaseKind::Ladder;
    REQUIRE(internal == 2 * (bn - 1));
    return BaseKind::Wheel;
}

int mask_edge_count(const Graph& g) {
    REQUIRE(g.gt_mask.has_value());
    int n = 0;
    const int v = g.node_count();
    for (int i = 0; i < v; ++i)
        for (int j = i + 1; j < v; ++j)
            if ((*g.gt_mask)(i, j) != 0.0) ++n;
    return n;
}

}  // namespace

TEST_CASE("generated graphs validate and have balanced classes") {
    SpmotifConfig cfg;
    cfg.n_graphs = 90;
    cfg.bias = 0.7;
    cfg.seed = 11;
    Dataset ds = generate_spmotif(cfg);
    CHECK(validate_dataset(ds).empty());
    int counts[3] = {0, 0, 0};
    for (const Graph& g : ds.graphs) ++counts[*g.label];
    CHECK(counts[0] == 30);
    CHECK(counts[1] == 30);
    CHECK(counts[2] == 30);
}

TEST_CASE("gt_mask marks exactly the motif edge count") {
    SpmotifConfig cfg;
    cfg.n_graphs = 60;
    cfg.seed = 5;
    Dataset ds = generate_spmotif(cfg);
    for (const Graph& g : ds.graphs) {
        int expected = *g.label == static_cast<int>(MotifKind::Cycle) ? 5 : 6;
        CHECK(mask_edge_count(g) == expected);
    }
}

TEST_CASE("gt_mask edges are motif-internal and connected") {
    SpmotifConfig cfg;
    cfg.n_graphs = 30;
    cfg.seed = 8;
    Dataset ds = generate_spmotif(cfg);
    for (const Graph& g : ds.graphs) {
        const int motif_nodes = *g.label == static_cast<int>(MotifKind::Crane) ? 6 : 5;
        const int bn = g.node_count() - motif_nodes;
        const int v = g.node_count();
        // No mask edge touches a base node.
        for (int i = 0; i < v; ++i)
            for (int j = i + 1; j < v; ++j)
                if ((*g.gt_mask)(i, j) != 0.0) {
                    CHECK(i >= bn);
                    CHECK(j >= bn);
                }
        // Mask edges connect all motif nodes.
        std::vector<int> comp(motif_nodes, -1);
        std::vector<int> stack = {0};
        comp[0] = 0;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int w = 0; w < motif_nodes; ++w)
                if ((*g.gt_mask)(bn + u, bn + w) != 0.0 && comp[w] < 0) {
                    comp[w] = 0;
                    stack.push_back(w);
                }
        }
        for (int w = 0; w < motif_nodes; ++w) CHECK(comp[w] == 0);
    }
}

TEST_CASE("bias 1/3 makes base kind independent of class") {
    SpmotifConfig cfg;
    cfg.n_graphs = 5000;
    cfg.bias = 1.0 / 3.0;
    cfg.seed = 21;
    Dataset ds = generate_spmotif(cfg);
    int matched = 0;
    for (const Graph& g : ds.graphs)
        if (decode_base(g, *g.label) == static_cast<BaseKind>(*g.label)) ++matched;
    CHECK(static_cast<double>(matched) / ds.size() == Catch::Approx(1.0 / 3.0).margin(0.03));
}

TEST_CASE("bias 0.9 matches Cycle class to Tree base") {
    SpmotifConfig cfg;
    cfg.n_graphs = 5000;
    cfg.bias = 0.9;
    cfg.seed = 22;
    Dataset ds = generate_spmotif(cfg);
    int cycle_total = 0, cycle_tree = 0;
    for (const Graph& g : ds.graphs)
        if (*g.label == static_cast<int>(MotifKind::Cycle)) {
            ++cycle_total;
            if (decode_base(g, *g.label) == BaseKind::Tree) ++cycle_tree;
        }
    CHECK(static_cast<double>(cycle_tree) / cycle_total == Catch::Approx(0.9).margin(0.03));
}

TEST_CASE("unbiased split passes a chi-square independence check") {
    SpmotifConfig cfg;
    cfg.n_graphs = 5000;
    cfg.bias = 1.0 / 3.0;
    cfg.seed = 30;
    Dataset ds = generate_spmotif(cfg);
    double table[3][3] = {};
    for (const Graph& g : ds.graphs)
        table[*g.label][static_cast<int>(decode_base(g, *g.label))] += 1.0;
    double chi2 = 0.0;
    for (int y = 0; y < 3; ++y) {
        double row = table[y][0] + table[y][1] + table[y][2];
        for (int b = 0; b < 3; ++b) {
            double col = table[0][b] + table[1][b] + table[2][b];
            double expected = row * col / ds.size();
            chi2 += (table[y][b] - expected) * (table[y][b] - expected) / expected;
        }
    }
    CHECK(chi2 < 13.277);  // chi-square 99th percentile, 4 degrees of freedom
}

TEST_CASE("generation is deterministic and rejects bad configs") {
    SpmotifConfig cfg;
    cfg.n_graphs = 20;
    cfg.seed = 77;
    Dataset a = generate_spmotif(cfg);
    Dataset b = generate_spmotif(cfg);
    for (int i = 0; i < a.size(); ++i) {
        CHECK(a.graphs[i].adjacency == b.graphs[i].adjacency);
        CHECK(a.graphs[i].features == b.graphs[i].features);
    }
    cfg.bias = 0.2;
    CHECK_THROWS_AS(generate_spmotif(cfg), ArgumentError);
    cfg.bias = 0.5;
    cfg.n_graphs = 2;
    CHECK_THROWS_AS(generate_spmotif(cfg), ArgumentError);
}

TEST_CASE("mixed mode plants the class constant on base node features") {
    SpmotifConfig cfg;
    cfg.n_graphs = 300;
    cfg.bias = 1.0;  // plant always, so the check is deterministic
    cfg.mixed = true;
    cfg.seed = 13;
    Dataset ds = generate_spmotif(cfg);
    for (const Graph& g : ds.graphs) {
        const int motif_nodes = *g.label == static_cast<int>(MotifKind::Crane) ? 6 : 5;
        const int bn = g.node_count() - motif_nodes;
        for (int i = 0; i < bn; ++i) CHECK(g.features(i, 0) == *g.label / 10.0);
    }

    // Unbiased: the watermark encodes the base kind, which is independent of
    // the label, so it agrees with the label about a third of the time.
    cfg.bias = 1.0 / 3.0;
    cfg.n_graphs = 3000;
    Dataset unb = generate_spmotif(cfg);
    int agree = 0;
    for (const Graph& g : unb.graphs) agree += g.features(0, 0) == *g.label / 10.0;
    CHECK(agree > 0.28 * unb.size());
    CHECK(agree < 0.39 * unb.size());
}

TEST_CASE("label noise flips the expected fraction, deterministically") {
    SpmotifConfig cfg;
    cfg.n_graphs = 9999;
    cfg.seed = 4;
    Dataset ds = generate_spmotif(cfg);

    NoiseConfig nc;
    nc.flip_rate = 0.0;
    nc.seed = 1;
    Dataset same = inject_label_noise(ds, nc);
    for (int i = 0; i < ds.size(); ++i) CHECK(*same.graphs[i].label == *ds.graphs[i].label);

    nc.flip_rate = 0.3;
    Dataset noisy1 = inject_label_noise(ds, nc);
    Dataset noisy2 = inject_label_noise(ds, nc);
    int flipped = 0;
    for (int i = 0; i < ds.size(); ++i) {
        CHECK(*noisy1.graphs[i].label == *noisy2.graphs[i].label);
        if (*noisy1.graphs[i].label != *ds.graphs[i].label) ++flipped;
    }
    CHECK(static_cast<double>(flipped) / ds.size() == Catch::Approx(0.3).margin(0.02));
}

TEST_CASE("label noise requires labels") {
    SpmotifConfig cfg;
    cfg.n_graphs = 5;
    Dataset ds = generate_spmotif(cfg);
    ds.graphs[2].label.reset();
    NoiseConfig nc;
    nc.flip_rate = 0.1;
    CHECK_THROWS_AS(inject_label_noise(ds, nc), ArgumentError);
}
