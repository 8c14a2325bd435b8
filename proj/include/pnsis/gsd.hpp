#pragma once

#include <vector>

#include "pnsis/pmp.hpp"

namespace pnsis {

// Structure-plus-feature distance between two environment batches.
struct GsdValue {
    double total = 0.0;
    double structure_term = 0.0;
    double feature_term = 0.0;
};

// Mean L1 distance over all cross pairs of structure embeddings; the
// finite-sample surrogate for the distance between the two embedding
// distributions. Exact accumulation keeps it symmetric in (a, b) bit for bit.
inline double pairwise_l1_mean(const std::vector<StructureEmbedding>& a,
                               const std::vector<StructureEmbedding>& b) {
    if (a.empty() || b.empty())
        throw ArgumentError("pairwise_l1_mean: empty batch");
    const long len = a.front().length();
    for (const auto& e : a)
        if (e.length() != len) throw ArgumentError("pairwise_l1_mean: embedding length mismatch");
    for (const auto& e : b)
        if (e.length() != len) throw ArgumentError("pairwise_l1_mean: embedding length mismatch");
    ExactSum total;
    for (const auto& ea : a)
        for (const auto& eb : b) {
            ExactSum l1;
            for (long k = 0; k < len; ++k) l1.add(std::abs(ea.h[k] - eb.h[k]));
            total.add(l1.value());
        }
    return total.value() / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

namespace detail {

// Frobenius distance between node-feature matrices, zero-padding the smaller
// graph. Padding embeds every matrix into a common space, so the value is
// independent of which pad size any particular pair picked.
inline double padded_feature_distance(const Mat& xa, const Mat& xb) {
    const int v = static_cast<int>(std::max(xa.rows(), xb.rows()));
    const int d = static_cast<int>(xa.cols());
    ExactSum s;
    for (int i = 0; i < v; ++i)
        for (int j = 0; j < d; ++j) {
            double va = i < xa.rows() ? xa(i, j) : 0.0;
            double vb = i < xb.rows() ? xb(i, j) : 0.0;
            double df = va - vb;
            s.add(df * df);
        }
    return std::sqrt(s.value());
}

}  // namespace detail

inline double feature_term_mean(const std::vector<Graph>& a, const std::vector<Graph>& b) {
    ExactSum total;
    for (const Graph& ga : a)
        for (const Graph& gb : b)
            total.add(detail::padded_feature_distance(ga.features, gb.features));
    return total.value() / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

inline std::vector<StructureEmbedding> embed_batch(const std::vector<Graph>& batch, int n_cap) {
    std::vector<StructureEmbedding> out;
    out.reserve(batch.size());
    for (const Graph& g : batch) out.push_back(structure_embedding(g, n_cap));
    return out;
}

inline GsdValue gsd(const std::vector<Graph>& batch_a, const std::vector<Graph>& batch_b,
                    int n_cap) {
    if (batch_a.empty() || batch_b.empty()) throw ArgumentError("gsd: empty batch");
    const int d = batch_a.front().feature_dim();
    for (const Graph& g : batch_a)
        if (g.feature_dim() != d) throw ArgumentError("gsd: feature dim mismatch");
    for (const Graph& g : batch_b)
        if (g.feature_dim() != d) throw ArgumentError("gsd: feature dim mismatch");
    GsdValue v;
    v.structure_term = pairwise_l1_mean(embed_batch(batch_a, n_cap), embed_batch(batch_b, n_cap));
    v.feature_term = feature_term_mean(batch_a, batch_b);
    v.total = v.structure_term + v.feature_term;
    return v;
}

}  // namespace pnsis
