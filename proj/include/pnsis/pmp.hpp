#pragma once

#include <map>
#include <utility>
#include <vector>

#include "pnsis/exact_sum.hpp"
#include "pnsis/graph.hpp"

namespace pnsis {

// V x V x (D+2) stack: one diagonal slice per feature column, then the
// adjacency matrix, then the pairwise feature-distance matrix.
struct FeatureCollectionTensor {
    int v = 0;
    int d = 0;
    std::vector<Mat> slices;  // size d + 2

    int channels() const { return d + 2; }
};

inline FeatureCollectionTensor feature_collection(const Graph& g) {
    FeatureCollectionTensor t;
    t.v = g.node_count();
    t.d = g.feature_dim();
    t.slices.reserve(t.d + 2);
    for (int c = 0; c < t.d; ++c) {
        Mat s = Mat::Zero(t.v, t.v);
        for (int k = 0; k < t.v; ++k) s(k, k) = g.features(k, c);
        t.slices.push_back(std::move(s));
    }
    t.slices.push_back(g.adjacency);
    Mat dist = Mat::Zero(t.v, t.v);
    for (int i = 0; i < t.v; ++i)
        for (int j = i + 1; j < t.v; ++j) {
            double d2 = 0.0;
            for (int c = 0; c < t.d; ++c) {
                double df = g.features(i, c) - g.features(j, c);
                d2 += df * df;
            }
            dist(i, j) = dist(j, i) = std::sqrt(d2);
        }
    t.slices.push_back(std::move(dist));
    return t;
}

// One power-sum term: per-channel exponent vectors for the two legs of the
// k-sum. Channels never mix; entry c of the term couples slice c with itself.
struct MultiIndexPair {
    std::vector<int> a;  // exponents for the (k, i2) leg, one per channel
    std::vector<int> b;  // exponents for the (i1, k) leg
    int degree = 0;
};

// All pairs with |a|+|b| <= n_cap in graded lexicographic order over the
// concatenated exponent vector. Graded order makes the embedding at cap N a
// strict prefix of the embedding at cap N+1.
inline std::vector<MultiIndexPair> enumerate_multi_indices(int channels, int n_cap) {
    std::vector<MultiIndexPair> out;
    const int len = 2 * channels;
    std::vector<int> e(len, 0);
    auto emit = [&](int deg) {
        MultiIndexPair p;
        p.a.assign(e.begin(), e.begin() + channels);
        p.b.assign(e.begin() + channels, e.end());
        p.degree = deg;
        out.push_back(std::move(p));
    };
    // Positions are filled left to right with ascending exponents, so within
    // each degree the emitted order is ascending lexicographic.
    auto rec = [&](auto&& self, int pos, int remaining, int deg) -> void {
        if (pos == len - 1) {
            e[pos] = remaining;
            emit(deg);
            e[pos] = 0;
            return;
        }
        for (int v = 0; v <= remaining; ++v) {
            e[pos] = v;
            self(self, pos + 1, remaining - v, deg);
        }
        e[pos] = 0;
    };
    for (int deg = 0; deg <= n_cap; ++deg) rec(rec, 0, deg, deg);
    return out;
}

inline long multi_index_count(int channels, int n_cap) {
    // C(2*channels + n_cap, n_cap): monomials of degree <= n_cap in 2*channels vars.
    long n = 2L * channels;
    long count = 1;
    for (long i = 1; i <= n_cap; ++i) count = count * (n + i) / i;
    return count;
}

struct StructureEmbedding {
    Vec h;
    int n_cap = 0;
    int d_prime = 0;   // number of multi-index pairs
    int channels = 0;  // D + 2

    int length() const { return static_cast<int>(h.size()); }
};

constexpr int kDefaultMultiIndexCeiling = 512;

namespace detail {

// Elementwise power with the 0^0 := 1 convention (exponent 0 gives all-ones).
inline Mat cwise_int_pow(const Mat& m, int e) {
    const int v = static_cast<int>(m.rows());
    if (e == 0) return Mat::Ones(v, m.cols());
    Mat out = m;
    for (int t = 1; t < e; ++t) out = out.cwiseProduct(m);
    return out;
}

// Matrix product with order-invariant inner sums.
inline Mat exact_matmul(const Mat& q, const Mat& p) {
    const int v = static_cast<int>(q.rows());
    Mat out(v, v);
    for (int i = 0; i < v; ++i)
        for (int j = 0; j < v; ++j) {
            ExactSum s;
            for (int k = 0; k < v; ++k) s.add(q(i, k) * p(k, j));
            out(i, j) = s.value();
        }
    return out;
}

inline double exact_total(const Mat& m) {
    ExactSum s;
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) s.add(m(i, j));
    return s.value();
}

inline double exact_weighted_total(const Mat& w, const Mat& m) {
    ExactSum s;
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) s.add(w(i, j) * m(i, j));
    return s.value();
}

}  // namespace detail

// Structure embedding of a graph: for each channel c, the total mass of slice
// c, followed per multi-index pair j by the slice-weighted power-sum term
//
//   h[(1+j)*Dc + c] = sum_{i1,i2} C[i1,i2,c] * sum_k C[k,i2,c]^a_{j,c} * C[i1,k,c]^b_{j,c}
//
// All sums use exact accumulation, so node relabeling changes nothing, not
// even the last bit. Weighting each power-sum term by the tuple's own entry is
// what lets the encoding separate 1-WL-equivalent pairs such as C6 vs two
// triangles (an unweighted sum collapses to degree statistics).
inline StructureEmbedding structure_embedding(const Graph& g, int n_cap,
                                              int ceiling = kDefaultMultiIndexCeiling) {
    if (n_cap < 1) throw ArgumentError("structure_embedding: n_cap must be >= 1");
    FeatureCollectionTensor t = feature_collection(g);
    const int dc = t.channels();
    if (multi_index_count(dc, n_cap) > ceiling)
        throw CapacityError("structure_embedding: multi-index family exceeds ceiling (" +
                            std::to_string(multi_index_count(dc, n_cap)) + " > " +
                            std::to_string(ceiling) + ")");
    const std::vector<MultiIndexPair> idx = enumerate_multi_indices(dc, n_cap);
    const int d_prime = static_cast<int>(idx.size());

    StructureEmbedding emb;
    emb.n_cap = n_cap;
    emb.d_prime = d_prime;
    emb.channels = dc;
    emb.h = Vec::Zero(static_cast<long>(dc) * (1 + d_prime));

    // Powered slices and their pairwise products, cached per channel.
    std::vector<std::vector<Mat>> powers(dc);
    for (int c = 0; c < dc; ++c) {
        powers[c].reserve(n_cap + 1);
        for (int e = 0; e <= n_cap; ++e)
            powers[c].push_back(detail::cwise_int_pow(t.slices[c], e));
    }
    std::vector<std::map<std::pair<int, int>, Mat>> products(dc);

    for (int c = 0; c < dc; ++c) emb.h[c] = detail::exact_total(t.slices[c]);
    for (int j = 0; j < d_prime; ++j) {
        for (int c = 0; c < dc; ++c) {
            const int ea = idx[j].a[c];
            const int eb = idx[j].b[c];
            auto key = std::make_pair(ea, eb);
            auto it = products[c].find(key);
            if (it == products[c].end()) {
                // z(i1,i2) = sum_k Q[i1,k] P[k,i2], Q = slice^b, P = slice^a.
                Mat z = detail::exact_matmul(powers[c][eb], powers[c][ea]);
                it = products[c].emplace(key, std::move(z)).first;
            }
            emb.h[static_cast<long>(1 + j) * dc + c] =
                detail::exact_weighted_total(t.slices[c], it->second);
        }
    }
    return emb;
}

}  // namespace pnsis
