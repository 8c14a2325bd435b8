#pragma once

#include <utility>
#include <vector>

#include "pnsis/graph.hpp"

namespace pnsis {

enum class BaseKind { Tree = 0, Ladder = 1, Wheel = 2 };
enum class MotifKind { Cycle = 0, House = 1, Crane = 2 };

constexpr int kSpmotifFeatureDim = 4;
constexpr int kSpmotifNumClasses = 3;

struct SpmotifConfig {
    int n_graphs = 300;
    double bias = 1.0 / 3.0;        // P(base kind == class-matched kind)
    int base_size_min = 8;
    int base_size_max = 15;
    bool mixed = false;             // also plant a spurious node-feature channel
    std::uint64_t seed = 0;
};

struct NoiseConfig {
    double flip_rate = 0.0;
    std::uint64_t seed = 0;
};

namespace detail {

using EdgeList = std::vector<std::pair<int, int>>;

inline EdgeList make_tree(int n, Rng& rng) {
    EdgeList e;
    for (int i = 1; i < n; ++i) e.emplace_back(rng.uniform_int(i), i);
    return e;
}

inline EdgeList make_ladder(int n) {
    int m = std::max(2, n / 2);  // rungs; actual node count is 2m
    EdgeList e;
    for (int i = 0; i < m; ++i) {
        e.emplace_back(2 * i, 2 * i + 1);
        if (i + 1 < m) {
            e.emplace_back(2 * i, 2 * i + 2);
            e.emplace_back(2 * i + 1, 2 * i + 3);
        }
    }
    return e;
}

inline EdgeList make_wheel(int n) {
    n = std::max(4, n);
    EdgeList e;
    for (int i = 1; i < n; ++i) {
        e.emplace_back(0, i);
        e.emplace_back(i, i == n - 1 ? 1 : i + 1);
    }
    return e;
}

inline int base_node_count(BaseKind kind, int requested) {
    switch (kind) {
        case BaseKind::Ladder: return 2 * std::max(2, requested / 2);
        case BaseKind::Wheel: return std::max(4, requested);
        default: return requested;
    }
}

inline EdgeList make_base(BaseKind kind, int n, Rng& rng) {
    switch (kind) {
        case BaseKind::Tree: return make_tree(n, rng);
        case BaseKind::Ladder: return make_ladder(n);
        default: return make_wheel(n);
    }
}

// Fixed motif shapes; only mutual distinctness matters.
inline EdgeList motif_edges(MotifKind kind) {
    switch (kind) {
        case MotifKind::Cycle:  // 5-cycle
            return {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0}};
        case MotifKind::House:  // square with a roof node, 6 edges
            return {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 4}, {1, 4}};
        default:                // kite: triangle with a 3-node tail
            return {{0, 1}, {1, 2}, {2, 0}, {2, 3}, {3, 4}, {4, 5}};
    }
}

inline int motif_node_count(MotifKind kind) {
    return kind == MotifKind::Crane ? 6 : 5;
}

}  // namespace detail

inline void validate_config(const SpmotifConfig& cfg) {
    if (cfg.bias < 1.0 / 3.0 - 1e-12 || cfg.bias > 1.0)
        throw ArgumentError("spmotif: bias must lie in [1/3, 1]");
    if (cfg.n_graphs < 3) throw ArgumentError("spmotif: need at least 3 graphs");
    if (cfg.base_size_min > cfg.base_size_max || cfg.base_size_min < 4)
        throw ArgumentError("spmotif: bad base size range");
}

// One graph per call: class-labeled motif attached to a (spuriously
// class-correlated) base by a single bridge edge. gt_mask marks exactly the
// motif's internal edges.
inline Graph make_spmotif_graph(const SpmotifConfig& cfg, int label, Rng& rng) {
    const MotifKind motif = static_cast<MotifKind>(label);
    BaseKind base_kind;
    if (rng.bernoulli(cfg.bias)) {
        base_kind = static_cast<BaseKind>(label);  // class-matched (spurious)
    } else {
        int off = 1 + rng.uniform_int(2);
        base_kind = static_cast<BaseKind>((label + off) % 3);
    }
    int requested = cfg.base_size_min + rng.uniform_int(cfg.base_size_max - cfg.base_size_min + 1);
    const int bn = detail::base_node_count(base_kind, requested);
    const int mn = detail::motif_node_count(motif);
    const int v = bn + mn;

    Graph g;
    g.adjacency = Mat::Zero(v, v);
    g.gt_mask = Mat::Zero(v, v);
    auto put = [&](int i, int j, bool invariant) {
        g.adjacency(i, j) = g.adjacency(j, i) = 1.0;
        if (invariant) (*g.gt_mask)(i, j) = (*g.gt_mask)(j, i) = 1.0;
    };
    for (auto [i, j] : detail::make_base(base_kind, bn, rng)) put(i, j, false);
    for (auto [i, j] : detail::motif_edges(motif)) put(bn + i, bn + j, true);
    put(rng.uniform_int(bn), bn + rng.uniform_int(mn), false);  // bridge

    g.features = Mat::Zero(v, kSpmotifFeatureDim);
    for (int i = 0; i < v; ++i)
        for (int c = 0; c < kSpmotifFeatureDim; ++c) g.features(i, c) = rng.uniform();
    if (cfg.mixed) {
        // The watermark encodes the base kind, so it agrees with the label
        // exactly when the base kind is class-matched (probability = bias).
        for (int i = 0; i < bn; ++i)
            g.features(i, 0) = static_cast<int>(base_kind) / 10.0;
    }
    g.label = label;
    return g;
}

inline Dataset generate_spmotif(const SpmotifConfig& cfg) {
    validate_config(cfg);
    Dataset ds;
    ds.feature_dim = kSpmotifFeatureDim;
    ds.num_classes = kSpmotifNumClasses;
    ds.graphs.reserve(cfg.n_graphs);
    for (int n = 0; n < cfg.n_graphs; ++n) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(n)));
        ds.graphs.push_back(make_spmotif_graph(cfg, n % kSpmotifNumClasses, rng));
    }
    return ds;
}

inline Dataset inject_label_noise(const Dataset& ds, const NoiseConfig& cfg) {
    if (cfg.flip_rate < 0.0 || cfg.flip_rate >= 1.0)
        throw ArgumentError("inject_label_noise: flip_rate must lie in [0, 1)");
    Dataset out = ds;
    for (int n = 0; n < out.size(); ++n) {
        Graph& g = out.graphs[n];
        if (!g.label) throw ArgumentError("inject_label_noise: graph " + std::to_string(n) +
                                          " has no label");
        Rng rng(derive_seed(cfg.seed, 0x6E6F6973ull, static_cast<std::uint64_t>(n)));
        if (rng.bernoulli(cfg.flip_rate)) {
            int shift = 1 + rng.uniform_int(ds.num_classes - 1);
            g.label = (*g.label + shift) % ds.num_classes;
        }
    }
    return out;
}

}  // namespace pnsis
