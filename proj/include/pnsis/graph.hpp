#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "pnsis/errors.hpp"
#include "pnsis/rng.hpp"

namespace pnsis {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// A single graph: dense symmetric weighted adjacency, per-node features,
// optional class label and environment id. gt_mask marks the ground-truth
// invariant edge set on synthetic data.
struct Graph {
    Mat adjacency;                 // V x V, symmetric, zero diagonal
    Mat features;                  // V x D
    std::optional<int> label;
    std::optional<int> env_id;
    std::optional<Mat> gt_mask;    // V x V, {0,1}, subset of edge support

    int node_count() const { return static_cast<int>(adjacency.rows()); }
    int feature_dim() const { return static_cast<int>(features.cols()); }
};

struct Dataset {
    std::vector<Graph> graphs;
    int feature_dim = 0;
    int num_classes = 0;

    int size() const { return static_cast<int>(graphs.size()); }
};

// Two disjoint graph batches standing in for a pair of environments.
struct EnvBatchPair {
    std::vector<Graph> batch_a;
    std::vector<Graph> batch_b;
    std::vector<int> indices_a;    // positions in the source dataset
    std::vector<int> indices_b;
};

constexpr double kSymmetryTol = 1e-12;

inline std::vector<std::string> validate_graph(const Graph& g) {
    std::vector<std::string> violations;
    const int v = g.node_count();
    if (v <= 0) violations.push_back("node_count not positive");
    if (g.adjacency.rows() != g.adjacency.cols())
        violations.push_back("adjacency not square");
    if (g.adjacency.rows() == g.adjacency.cols()) {
        for (int i = 0; i < v; ++i) {
            if (g.adjacency(i, i) != 0.0) {
                violations.push_back("nonzero diagonal");
                break;
            }
        }
        bool asym = false, neg = false;
        for (int i = 0; i < v && !(asym && neg); ++i)
            for (int j = 0; j < v; ++j) {
                if (std::abs(g.adjacency(i, j) - g.adjacency(j, i)) > kSymmetryTol) asym = true;
                if (g.adjacency(i, j) < 0.0) neg = true;
            }
        if (asym) violations.push_back("asymmetric");
        if (neg) violations.push_back("negative edge weight");
    }
    if (g.features.rows() != v)
        violations.push_back("feature row count mismatch");
    if (g.gt_mask) {
        const Mat& m = *g.gt_mask;
        if (m.rows() != v || m.cols() != v) {
            violations.push_back("mask shape mismatch");
        } else {
            bool asym = false, nonbin = false, outside = false;
            for (int i = 0; i < v; ++i)
                for (int j = 0; j < v; ++j) {
                    if (std::abs(m(i, j) - m(j, i)) > kSymmetryTol) asym = true;
                    if (m(i, j) != 0.0 && m(i, j) != 1.0) nonbin = true;
                    if (m(i, j) != 0.0 && g.adjacency(i, j) == 0.0) outside = true;
                }
            if (asym) violations.push_back("mask asymmetric");
            if (nonbin) violations.push_back("mask not binary");
            if (outside) violations.push_back("mask outside edge set");
        }
    }
    return violations;
}

inline std::vector<std::string> validate_dataset(const Dataset& ds) {
    std::vector<std::string> violations;
    for (int i = 0; i < ds.size(); ++i) {
        const Graph& g = ds.graphs[i];
        for (const std::string& s : validate_graph(g))
            violations.push_back("graph " + std::to_string(i) + ": " + s);
        if (g.feature_dim() != ds.feature_dim)
            violations.push_back("graph " + std::to_string(i) + ": feature dim mismatch");
        if (g.label && (*g.label < 0 || *g.label >= ds.num_classes))
            violations.push_back("graph " + std::to_string(i) + ": label out of range");
    }
    return violations;
}

// Uniform without-replacement draw of two disjoint batches, serving as a
// stand-in for sampling a pair of training environments.
inline EnvBatchPair split_environments(const Dataset& ds, int size_a, int size_b,
                                       std::uint64_t seed) {
    if (size_a < 1 || size_b < 1)
        throw ArgumentError("split_environments: batch sizes must be >= 1");
    if (size_a + size_b > ds.size())
        throw ArgumentError("split_environments: sizes exceed dataset (" +
                            std::to_string(size_a) + "+" + std::to_string(size_b) +
                            " > " + std::to_string(ds.size()) + ")");
    Rng rng(seed);
    std::vector<int> picked = rng.sample_without_replacement(ds.size(), size_a + size_b);
    EnvBatchPair pair;
    for (int i = 0; i < size_a; ++i) {
        pair.indices_a.push_back(picked[i]);
        pair.batch_a.push_back(ds.graphs[picked[i]]);
    }
    for (int i = size_a; i < size_a + size_b; ++i) {
        pair.indices_b.push_back(picked[i]);
        pair.batch_b.push_back(ds.graphs[picked[i]]);
    }
    return pair;
}

// Content hash covering everything that defines the graph as an input
// (adjacency, features, label). Used to key per-graph sampling noise.
inline std::uint64_t graph_content_hash(const Graph& g) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    const int v = g.node_count();
    h = hash_bytes(&v, sizeof(v), h);
    h = hash_bytes(g.adjacency.data(), sizeof(double) * g.adjacency.size(), h);
    h = hash_bytes(g.features.data(), sizeof(double) * g.features.size(), h);
    int label = g.label ? *g.label : -1;
    h = hash_bytes(&label, sizeof(label), h);
    return h;
}

}  // namespace pnsis
