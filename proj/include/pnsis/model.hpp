#pragma once

#include <optional>
#include <vector>

#include "pnsis/autodiff.hpp"
#include "pnsis/dataset_io.hpp"
#include "pnsis/graph.hpp"

namespace pnsis {

// One GCN stack: weights[l] is d_l x d_{l+1}, biases[l] is 1 x d_{l+1}.
struct GcnParams {
    std::vector<Mat> weights;
    std::vector<Mat> biases;

    int n_layers() const { return static_cast<int>(weights.size()); }
    int out_dim() const { return static_cast<int>(weights.back().cols()); }
};

// GCN backbone plus affine graph-level readout (mean pooling in between).
struct ClassifierParams {
    GcnParams gcn;
    Mat readout_w;  // d x C
    Mat readout_b;  // 1 x C
};

// The four trained parameter groups: two subgraph extractors and the
// classifiers reading their sampled subgraphs.
struct ModelParams {
    GcnParams extractor_sf;
    GcnParams extractor_nc;
    ClassifierParams classifier_sf;
    ClassifierParams classifier_nc;
    int num_classes = 0;
};

struct ModelSizes {
    std::vector<int> extractor_hidden = {32, 16};
    std::vector<int> classifier_hidden = {32, 32};
};

inline GcnParams init_gcn(int in_dim, const std::vector<int>& hidden, Rng& rng) {
    GcnParams p;
    int d = in_dim;
    for (int h : hidden) {
        Mat w(d, h);
        double s = std::sqrt(2.0 / (d + h));
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < h; ++j) w(i, j) = s * rng.normal();
        p.weights.push_back(std::move(w));
        p.biases.push_back(Mat::Zero(1, h));
        d = h;
    }
    return p;
}

inline ClassifierParams init_classifier(int in_dim, const std::vector<int>& hidden,
                                        int num_classes, Rng& rng) {
    ClassifierParams p;
    p.gcn = init_gcn(in_dim, hidden, rng);
    int d = p.gcn.out_dim();
    double s = std::sqrt(2.0 / (d + num_classes));
    p.readout_w = Mat(d, num_classes);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < num_classes; ++j) p.readout_w(i, j) = s * rng.normal();
    p.readout_b = Mat::Zero(1, num_classes);
    return p;
}

inline ModelParams init_model(int feature_dim, int num_classes, const ModelSizes& sizes,
                              std::uint64_t seed) {
    ModelParams mp;
    mp.num_classes = num_classes;
    Rng r_sf(derive_seed(seed, 1)), r_nc(derive_seed(seed, 2));
    Rng r_csf(derive_seed(seed, 3)), r_cnc(derive_seed(seed, 4));
    mp.extractor_sf = init_gcn(feature_dim, sizes.extractor_hidden, r_sf);
    mp.extractor_nc = init_gcn(feature_dim, sizes.extractor_hidden, r_nc);
    mp.classifier_sf = init_classifier(feature_dim, sizes.classifier_hidden, num_classes, r_csf);
    mp.classifier_nc = init_classifier(feature_dim, sizes.classifier_hidden, num_classes, r_cnc);
    return mp;
}

// Flat parameter views in a fixed canonical order; the optimizer, the gradient
// collector, and the checkpoint format all share this ordering.
inline void collect_params(GcnParams& p, std::vector<Mat*>& out) {
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        out.push_back(&p.weights[l]);
        out.push_back(&p.biases[l]);
    }
}

inline void collect_params(ClassifierParams& p, std::vector<Mat*>& out) {
    collect_params(p.gcn, out);
    out.push_back(&p.readout_w);
    out.push_back(&p.readout_b);
}

inline std::vector<Mat*> param_ptrs(ClassifierParams& p) {
    std::vector<Mat*> out;
    collect_params(p, out);
    return out;
}

inline std::vector<Mat*> param_ptrs(ModelParams& mp) {
    std::vector<Mat*> out;
    collect_params(mp.extractor_sf, out);
    collect_params(mp.extractor_nc, out);
    collect_params(mp.classifier_sf, out);
    collect_params(mp.classifier_nc, out);
    return out;
}

// ---- plain (evaluation-path) forward ----

// D̂^{-1/2} Â D̂^{-1/2} with Â = (edge_weights ⊙ A, or A) + I.
inline Mat normalized_adjacency(const Mat& adjacency, const Mat* edge_weights) {
    const int v = static_cast<int>(adjacency.rows());
    Mat ahat = edge_weights ? Mat(edge_weights->cwiseProduct(adjacency)) : adjacency;
    ahat += Mat::Identity(v, v);
    Vec d = ahat.rowwise().sum();
    Vec s = d.array().pow(-0.5);
    return (s * s.transpose()).cwiseProduct(ahat);
}

// Layer rule H <- ReLU(An H W + b); the last layer stays linear.
inline Mat gcn_forward(const Graph& g, const GcnParams& p, const Mat* edge_weights = nullptr) {
    if (p.n_layers() == 0) throw ArgumentError("gcn_forward: empty parameter stack");
    if (p.weights.front().rows() != g.feature_dim())
        throw ArgumentError("gcn_forward: input dim mismatch");
    Mat an = normalized_adjacency(g.adjacency, edge_weights);
    Mat h = g.features;
    for (int l = 0; l < p.n_layers(); ++l) {
        h = (an * (h * p.weights[l])).rowwise() + p.biases[l].row(0);
        if (l + 1 < p.n_layers()) h = h.cwiseMax(0.0);
    }
    return h;
}

struct EdgeProbMatrix {
    Mat probs;  // V x V, sigmoid(Z Zᵀ), exactly symmetric
};

inline EdgeProbMatrix extract_edge_probs(const Graph& g, const GcnParams& p) {
    Mat z = gcn_forward(g, p);
    Mat s = z * z.transpose();
    const int v = static_cast<int>(s.rows());
    EdgeProbMatrix ep;
    ep.probs = Mat(v, v);
    // Upper triangle computed, lower mirrored: symmetry holds bit for bit.
    for (int i = 0; i < v; ++i)
        for (int j = i; j < v; ++j)
            ep.probs(i, j) = ep.probs(j, i) = 1.0 / (1.0 + std::exp(-s(i, j)));
    return ep;
}

struct SubgraphMask {
    Mat mask;  // V x V, zero off the edge support, symmetric
    bool hard = false;
    double temperature = 1.0;
};

// Per-undirected-edge Gumbel difference G1 - G2, mirrored; zero off support.
// Edges are visited in row-major (i < j) order, so the draw is a pure function
// of (graph support, seed) shared by the evaluation and training paths.
inline Mat gumbel_delta(const Graph& g, std::uint64_t seed) {
    const int v = g.node_count();
    Rng rng(seed);
    Mat delta = Mat::Zero(v, v);
    for (int i = 0; i < v; ++i)
        for (int j = i + 1; j < v; ++j)
            if (g.adjacency(i, j) != 0.0) {
                double d = rng.gumbel() - rng.gumbel();
                delta(i, j) = delta(j, i) = d;
            }
    return delta;
}

inline SubgraphMask sample_subgraph(const EdgeProbMatrix& ep, const Graph& g, double tau,
                                    bool hard, std::uint64_t seed) {
    if (tau <= 0.0) throw ArgumentError("sample_subgraph: temperature must be > 0");
    const int v = g.node_count();
    Mat delta = gumbel_delta(g, seed);
    SubgraphMask sm;
    sm.hard = hard;
    sm.temperature = tau;
    sm.mask = Mat::Zero(v, v);
    for (int i = 0; i < v; ++i)
        for (int j = i + 1; j < v; ++j)
            if (g.adjacency(i, j) != 0.0) {
                double p = ep.probs(i, j);
                double logit = std::log(p) - std::log1p(-p);
                double m = 1.0 / (1.0 + std::exp(-(logit + delta(i, j)) / tau));
                if (hard) m = m > 0.5 ? 1.0 : 0.0;
                sm.mask(i, j) = sm.mask(j, i) = m;
            }
    return sm;
}

// Hard complement over the edge support: the spurious subgraph.
inline SubgraphMask complement_mask(const Graph& g, const SubgraphMask& sm) {
    const int v = g.node_count();
    SubgraphMask out;
    out.hard = true;
    out.temperature = sm.temperature;
    out.mask = Mat::Zero(v, v);
    for (int i = 0; i < v; ++i)
        for (int j = 0; j < v; ++j)
            if (g.adjacency(i, j) != 0.0 && sm.mask(i, j) <= 0.5) out.mask(i, j) = 1.0;
    return out;
}

inline Vec softmax_vec(const Eigen::RowVectorXd& logits) {
    double m = logits.maxCoeff();
    Vec ex = (logits.array() - m).exp();
    return ex / ex.sum();
}

// Readout weights: each node counts with its mask degree, so the pooled
// representation is a mean over the subgraph's own nodes. An all-zero mask
// (no subgraph) falls back to the uniform mean, matching the edgeless graph.
inline Vec subgraph_pool_weights(const Mat& mask) {
    Vec w = mask.rowwise().sum();
    double total = w.sum();
    if (total <= 0.0) return Vec::Constant(mask.rows(), 1.0 / mask.rows());
    return w / total;
}

inline Vec classify_subgraph(const Graph& g, const SubgraphMask& sm, const ClassifierParams& cp) {
    Mat h = gcn_forward(g, cp.gcn, &sm.mask);
    Eigen::RowVectorXd pooled = subgraph_pool_weights(sm.mask).transpose() * h;
    Eigen::RowVectorXd logits = pooled * cp.readout_w + cp.readout_b.row(0);
    return softmax_vec(logits);
}

inline Vec classify_full(const Graph& g, const ClassifierParams& cp) {
    Mat h = gcn_forward(g, cp.gcn);
    Eigen::RowVectorXd pooled = h.colwise().mean();
    Eigen::RowVectorXd logits = pooled * cp.readout_w + cp.readout_b.row(0);
    return softmax_vec(logits);
}

// Average of the two branch classifiers, each marginalized over
// n_samples hard subgraph draws.
inline Vec joint_predict(const Graph& g, const ModelParams& mp, int n_samples, double tau,
                         std::uint64_t seed) {
    if (n_samples < 1) throw ArgumentError("joint_predict: n_samples must be >= 1");
    EdgeProbMatrix ep_sf = extract_edge_probs(g, mp.extractor_sf);
    EdgeProbMatrix ep_nc = extract_edge_probs(g, mp.extractor_nc);
    Vec acc = Vec::Zero(mp.num_classes);
    for (int s = 0; s < n_samples; ++s) {
        SubgraphMask m_sf = sample_subgraph(ep_sf, g, tau, true, derive_seed(seed, 1, s));
        SubgraphMask m_nc = sample_subgraph(ep_nc, g, tau, true, derive_seed(seed, 2, s));
        acc += classify_subgraph(g, m_sf, mp.classifier_sf);
        acc += classify_subgraph(g, m_nc, mp.classifier_nc);
    }
    return acc / (2.0 * n_samples);
}

// ---- checkpoints ----

namespace detail {

inline void write_mat(std::ostream& out, const char* tag, const Mat& m) {
    out << tag << " " << m.rows() << " " << m.cols() << "\n";
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) out << (j ? " " : "") << fmt17(m(i, j));
        out << "\n";
    }
}

inline Mat read_mat(LineReader& lr, const std::string& tag) {
    std::string line;
    if (!lr.next(line)) throw ParseError("checkpoint truncated before " + tag, lr.line_no);
    char got[16] = {0};
    long r = -1, c = -1;
    if (std::sscanf(line.c_str(), "%15s %ld %ld", got, &r, &c) != 3 || tag != got || r < 0 || c < 0)
        throw ParseError("expected '" + tag + " <rows> <cols>', got '" + line + "'", lr.line_no);
    Mat m(r, c);
    std::vector<double> row(c);
    for (long i = 0; i < r; ++i) {
        if (!lr.next(line)) throw SchemaError("truncated matrix block", lr.line_no);
        if (!parse_row(line, row.data(), static_cast<int>(c)))
            throw SchemaError("matrix row has wrong arity", lr.line_no);
        for (long j = 0; j < c; ++j) m(i, j) = row[j];
    }
    return m;
}

inline void write_gcn(std::ostream& out, const GcnParams& p) {
    out << "layers " << p.n_layers() << "\n";
    for (int l = 0; l < p.n_layers(); ++l) {
        write_mat(out, "W", p.weights[l]);
        write_mat(out, "B", p.biases[l]);
    }
}

inline GcnParams read_gcn(LineReader& lr) {
    std::string line;
    if (!lr.next(line)) throw ParseError("checkpoint truncated before layer count", lr.line_no);
    int n = -1;
    if (std::sscanf(line.c_str(), "layers %d", &n) != 1 || n < 1)
        throw ParseError("bad layer count: '" + line + "'", lr.line_no);
    GcnParams p;
    for (int l = 0; l < n; ++l) {
        p.weights.push_back(read_mat(lr, "W"));
        p.biases.push_back(read_mat(lr, "B"));
    }
    return p;
}

inline void write_classifier(std::ostream& out, const ClassifierParams& p) {
    write_gcn(out, p.gcn);
    write_mat(out, "R", p.readout_w);
    write_mat(out, "Rb", p.readout_b);
}

inline ClassifierParams read_classifier(LineReader& lr) {
    ClassifierParams p;
    p.gcn = read_gcn(lr);
    p.readout_w = read_mat(lr, "R");
    p.readout_b = read_mat(lr, "Rb");
    return p;
}

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const ModelParams& mp) {
    out << "PNSIS-CKPT v1 C=" << mp.num_classes << "\n";
    detail::write_gcn(out, mp.extractor_sf);
    detail::write_gcn(out, mp.extractor_nc);
    detail::write_classifier(out, mp.classifier_sf);
    detail::write_classifier(out, mp.classifier_nc);
}

inline ModelParams load_checkpoint(std::istream& in) {
    detail::LineReader lr(in);
    std::string line;
    if (!lr.next(line)) throw ParseError("missing checkpoint header", 1);
    int c = -1;
    if (std::sscanf(line.c_str(), "PNSIS-CKPT v1 C=%d", &c) != 1 || c < 1)
        throw ParseError("bad checkpoint header: '" + line + "'", lr.line_no);
    ModelParams mp;
    mp.num_classes = c;
    mp.extractor_sf = detail::read_gcn(lr);
    mp.extractor_nc = detail::read_gcn(lr);
    mp.classifier_sf = detail::read_classifier(lr);
    mp.classifier_nc = detail::read_classifier(lr);
    return mp;
}

inline void save_checkpoint(const std::string& path, const ModelParams& mp) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    save_checkpoint(out, mp);
    if (!out) throw IoError("write failed: " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    return load_checkpoint(in);
}

inline void save_classifier(std::ostream& out, const ClassifierParams& cp) {
    out << "PNSIS-CKPT v1 C=" << cp.readout_w.cols() << "\n";
    detail::write_classifier(out, cp);
}

inline ClassifierParams load_classifier(std::istream& in) {
    detail::LineReader lr(in);
    std::string line;
    if (!lr.next(line)) throw ParseError("missing checkpoint header", 1);
    int c = -1;
    if (std::sscanf(line.c_str(), "PNSIS-CKPT v1 C=%d", &c) != 1 || c < 1)
        throw ParseError("bad checkpoint header: '" + line + "'", lr.line_no);
    return detail::read_classifier(lr);
}

// ---- tape (training-path) forward ----

namespace tape {

struct GcnVars {
    std::vector<ad::Var> w, b;
};

struct ClfVars {
    GcnVars gcn;
    ad::Var rw, rb;
};

struct ModelVars {
    GcnVars ext_sf, ext_nc;
    ClfVars clf_sf, clf_nc;
    std::vector<ad::Var> all;  // same order as param_ptrs(ModelParams)
};

inline GcnVars lift(ad::Tape& t, const GcnParams& p, std::vector<ad::Var>& all) {
    GcnVars v;
    for (int l = 0; l < p.n_layers(); ++l) {
        v.w.push_back(t.leaf(p.weights[l]));
        v.b.push_back(t.leaf(p.biases[l]));
        all.push_back(v.w.back());
        all.push_back(v.b.back());
    }
    return v;
}

inline ClfVars lift(ad::Tape& t, const ClassifierParams& p, std::vector<ad::Var>& all) {
    ClfVars v;
    v.gcn = lift(t, p.gcn, all);
    v.rw = t.leaf(p.readout_w);
    v.rb = t.leaf(p.readout_b);
    all.push_back(v.rw);
    all.push_back(v.rb);
    return v;
}

inline ModelVars lift(ad::Tape& t, const ModelParams& mp) {
    ModelVars v;
    v.ext_sf = lift(t, mp.extractor_sf, v.all);
    v.ext_nc = lift(t, mp.extractor_nc, v.all);
    v.clf_sf = lift(t, mp.classifier_sf, v.all);
    v.clf_nc = lift(t, mp.classifier_nc, v.all);
    return v;
}

inline std::vector<Mat> collect_grads(const std::vector<ad::Var>& all) {
    std::vector<Mat> g;
    g.reserve(all.size());
    for (const ad::Var& v : all) g.push_back(v.grad());
    return g;
}

// Normalized adjacency; mask, when present, is a tape value (the sampled soft
// or straight-through edge weights).
inline ad::Var norm_adj(ad::Tape& t, const Mat& adjacency,
                        std::optional<ad::Var> mask = std::nullopt) {
    const int v = static_cast<int>(adjacency.rows());
    ad::Var ahat = mask ? ad::cadd(t, ad::cmul(t, *mask, adjacency), Mat::Identity(v, v))
                        : t.constant(adjacency + Mat::Identity(v, v));
    ad::Var d = ad::rowsum(t, ahat);
    ad::Var s = ad::cwise_pow(t, d, -0.5);
    return ad::hadamard(t, ad::matmul(t, s, ad::transpose(t, s)), ahat);
}

inline ad::Var gcn_layers(ad::Tape& t, ad::Var an, const Mat& features, const GcnVars& p) {
    ad::Var h = t.constant(features);
    const int n = static_cast<int>(p.w.size());
    for (int l = 0; l < n; ++l) {
        h = ad::add_rowvec(t, ad::matmul(t, an, ad::matmul(t, h, p.w[l])), p.b[l]);
        if (l + 1 < n) h = ad::relu(t, h);
    }
    return h;
}

// Pre-sigmoid edge scores S = Z Zᵀ; note σ(S) is the edge probability and S is
// already its logit, so the binary-concrete draw needs no log/exp round trip.
inline ad::Var edge_logits(ad::Tape& t, const Graph& g, const GcnVars& ext) {
    ad::Var z = gcn_layers(t, norm_adj(t, g.adjacency), g.features, ext);
    return ad::matmul(t, z, ad::transpose(t, z));
}

// Soft binary-concrete mask restricted to the edge support, with fixed noise
// delta (from gumbel_delta).
inline ad::Var soft_mask(ad::Tape& t, ad::Var logits, const Graph& g, double tau,
                         const Mat& delta) {
    Mat support = g.adjacency.unaryExpr([](double x) { return x != 0.0 ? 1.0 : 0.0; });
    ad::Var shifted = ad::cadd(t, logits, delta);
    ad::Var m = ad::sigmoid(t, ad::scale(t, shifted, 1.0 / tau));
    return ad::cmul(t, m, support);
}

// 1 x C logits of the classifier on the (optionally masked) graph.
inline ad::Var classify(ad::Tape& t, const Graph& g, std::optional<ad::Var> mask,
                        const ClfVars& clf) {
    ad::Var h = gcn_layers(t, norm_adj(t, g.adjacency, mask), g.features, clf.gcn);
    ad::Var pooled = [&] {
        if (mask && mask->val().sum() > 0.0) {
            // Mask-degree-weighted mean: the readout of the subgraph's own nodes.
            ad::Var w = ad::rowsum(t, *mask);
            ad::Var inv_total = ad::cwise_pow(t, ad::sum_all(t, w), -1.0);
            ad::Var wn = ad::matmul(t, w, inv_total);
            return ad::matmul(t, ad::transpose(t, wn), h);
        }
        return ad::colmean(t, h);
    }();
    return ad::add_rowvec(t, ad::matmul(t, pooled, clf.rw), clf.rb);
}

}  // namespace tape

}  // namespace pnsis
