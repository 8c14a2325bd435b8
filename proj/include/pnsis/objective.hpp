#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <vector>

#include "pnsis/gsd.hpp"
#include "pnsis/model.hpp"

namespace pnsis {

enum class Ablation { full, no_bound, no_ensemble };

struct TrainConfig {
    int epochs = 60;
    double lr = 0.01;
    double K = 0.1;                 // weight of the structure-distance penalty
    int env_size_a = 16;
    int env_size_b = 16;
    double tau0 = 1.0;              // temperature schedule: tau0 * tau_decay^epoch
    double tau_decay = 0.97;
    double tau_min = 0.3;
    double c_max = 3.0;             // clip for the necessity hinge
    int n_samples_train = 1;
    int n_samples_eval = 16;
    int n_cap = 2;
    int penalty_every = 1;          // apply the penalty on every n-th step
    std::uint64_t seed = 0;
    Ablation ablation = Ablation::full;
    ModelSizes sizes;

    double tau_at(int epoch) const {
        return std::max(tau_min, tau0 * std::pow(tau_decay, epoch));
    }
    double effective_k() const { return ablation == Ablation::no_bound ? 0.0 : K; }
    void validate() const {
        if (lr < 0.0) throw ArgumentError("train config: lr must be >= 0");
        if (K < 0.0) throw ArgumentError("train config: K must be >= 0");
        if (c_max <= 0.0) throw ArgumentError("train config: c_max must be > 0");
        if (epochs < 0 || env_size_a < 1 || env_size_b < 1 || n_samples_train < 1)
            throw ArgumentError("train config: bad sizes");
        if (penalty_every < 1) throw ArgumentError("train config: penalty_every must be >= 1");
    }
};

struct PnsRiskValue {
    double sf_term = 0.0;  // sufficiency violation
    double nc_term = 0.0;  // necessity violation
    double total = 0.0;
};

enum class Surrogate { indicator, cross_entropy };

// Risk over one batch: sufficient branch should hit the label, necessary
// branch should miss it. Both expectations run over n_samples hard masks.
inline PnsRiskValue pns_risk(const std::vector<Graph>& batch, const ModelParams& mp,
                             int n_samples, Surrogate surrogate, std::uint64_t seed,
                             double tau = 0.5, double c_max = 3.0) {
    if (batch.empty()) throw ArgumentError("pns_risk: empty batch");
    if (n_samples < 1) throw ArgumentError("pns_risk: n_samples must be >= 1");
    ExactSum sf_sum, nc_sum;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Graph& g = batch[i];
        if (!g.label) throw ArgumentError("pns_risk: graph " + std::to_string(i) + " unlabeled");
        const int y = *g.label;
        EdgeProbMatrix ep_sf = extract_edge_probs(g, mp.extractor_sf);
        EdgeProbMatrix ep_nc = extract_edge_probs(g, mp.extractor_nc);
        for (int s = 0; s < n_samples; ++s) {
            SubgraphMask m_sf = sample_subgraph(ep_sf, g, tau, true, derive_seed(seed, 1, i, s));
            SubgraphMask m_nc = sample_subgraph(ep_nc, g, tau, true, derive_seed(seed, 2, i, s));
            Vec p_sf = classify_subgraph(g, m_sf, mp.classifier_sf);
            Vec p_nc = classify_subgraph(g, m_nc, mp.classifier_nc);
            if (surrogate == Surrogate::indicator) {
                int a_sf, a_nc;
                p_sf.maxCoeff(&a_sf);
                p_nc.maxCoeff(&a_nc);
                sf_sum.add(a_sf != y ? 1.0 : 0.0);
                nc_sum.add(a_nc == y ? 1.0 : 0.0);
            } else {
                sf_sum.add(-std::log(std::max(p_sf(y), 1e-300)));
                nc_sum.add(std::max(0.0, c_max + std::log(std::max(p_nc(y), 1e-300))));
            }
        }
    }
    const double n = static_cast<double>(batch.size()) * n_samples;
    PnsRiskValue r;
    r.sf_term = sf_sum.value() / n;
    r.nc_term = nc_sum.value() / n;
    r.total = r.sf_term + r.nc_term;
    return r;
}

struct LossBreakdown {
    PnsRiskValue pns_risk;
    double gsd_penalty = 0.0;
    double K = 0.0;
    double total = 0.0;
};

namespace detail {

// Structure embedding of the soft-masked graph as a tape value. The feature
// and distance channels do not depend on the mask, so their entries come from
// the raw-graph embedding; only the adjacency channel lives on the tape.
inline ad::Var tape_masked_embedding(ad::Tape& t, const Graph& g, ad::Var masked_adj,
                                     const StructureEmbedding& raw,
                                     const std::vector<MultiIndexPair>& idx) {
    const int dc = raw.channels;
    const int c_adj = dc - 2;  // adjacency channel index
    std::map<std::pair<int, int>, ad::Var> cache;
    auto adj_term = [&](int ea, int eb) {
        auto key = std::make_pair(ea, eb);
        auto it = cache.find(key);
        if (it == cache.end()) {
            ad::Var z = ad::matmul(t, ad::cwise_pow(t, masked_adj, eb),
                                   ad::cwise_pow(t, masked_adj, ea));
            it = cache.emplace(key, ad::sum_all(t, ad::hadamard(t, masked_adj, z))).first;
        }
        return it->second;
    };
    std::vector<ad::Var> parts;
    parts.reserve(raw.length());
    for (int c = 0; c < dc; ++c)
        parts.push_back(c == c_adj ? ad::sum_all(t, masked_adj) : t.scalar(raw.h[c]));
    for (int j = 0; j < raw.d_prime; ++j)
        for (int c = 0; c < dc; ++c) {
            long k = static_cast<long>(1 + j) * dc + c;
            parts.push_back(c == c_adj ? adj_term(idx[j].a[c], idx[j].b[c])
                                       : t.scalar(raw.h[k]));
        }
    return ad::concat_scalars(t, parts);
}

}  // namespace detail

struct TapeLoss {
    ad::Var total, sf, nc, penalty;  // all 1x1
    int sf_correct = 0;
    int n_graphs = 0;
};

// Full training loss on the tape: PNS risk (cross-entropy surrogate) on
// batch_a plus K times the structure-distance penalty between the sf-branch
// soft-masked batches. The penalty uses noise-free mean-field masks, so the
// penalty of two identical batches is exactly zero.
inline TapeLoss total_loss_tape(ad::Tape& t, const EnvBatchPair& pair,
                                const tape::ModelVars& mv, const TrainConfig& cfg,
                                double tau, std::uint64_t seed) {
    if (pair.batch_a.empty() || pair.batch_b.empty())
        throw ArgumentError("total_loss: empty batch");
    TapeLoss out;
    out.n_graphs = static_cast<int>(pair.batch_a.size());

    ad::Var sf_sum = t.scalar(0.0), nc_sum = t.scalar(0.0);
    std::vector<ad::Var> sf_masks_a;  // reused by the penalty below
    for (std::size_t i = 0; i < pair.batch_a.size(); ++i) {
        const Graph& g = pair.batch_a[i];
        if (!g.label) throw ArgumentError("total_loss: unlabeled graph in batch_a");
        const int y = *g.label;
        ad::Var s_sf = tape::edge_logits(t, g, mv.ext_sf);
        ad::Var s_nc = tape::edge_logits(t, g, mv.ext_nc);
        for (int s = 0; s < cfg.n_samples_train; ++s) {
            ad::Var soft_sf = tape::soft_mask(t, s_sf, g, tau,
                                              gumbel_delta(g, derive_seed(seed, 1, i, s)));
            ad::Var soft_nc = tape::soft_mask(t, s_nc, g, tau,
                                              gumbel_delta(g, derive_seed(seed, 2, i, s)));
            // Training differentiates through the relaxation itself; hard
            // straight-through masks are reserved for sampling at eval time.
            ad::Var logits_sf = tape::classify(t, g, soft_sf, mv.clf_sf);
            ad::Var logits_nc = tape::classify(t, g, soft_nc, mv.clf_nc);
            sf_sum = ad::add(t, sf_sum, ad::softmax_cross_entropy(t, logits_sf, y));
            ad::Var hinge = ad::relu(
                t, ad::cadd(t, ad::scale(t, ad::softmax_cross_entropy(t, logits_nc, y), -1.0),
                            Mat::Constant(1, 1, cfg.c_max)));
            nc_sum = ad::add(t, nc_sum, hinge);
            if (s == 0) {
                int argmax;
                ad::softmax_row(logits_sf.val()).maxCoeff(&argmax);
                if (argmax == y) ++out.sf_correct;
            }
        }
    }
    const double inv_n = 1.0 / (static_cast<double>(pair.batch_a.size()) * cfg.n_samples_train);
    out.sf = ad::scale(t, sf_sum, inv_n);
    out.nc = ad::scale(t, nc_sum, inv_n);
    ad::Var risk = ad::add(t, out.sf, out.nc);

    const double k = cfg.effective_k();
    if (k > 0.0) {
        // The environments differ in spurious structure but share label
        // semantics, so the distance is taken between same-label pairs: the
        // invariant subgraph is exactly what stays constant within a class
        // across environments. When the batches share no label, every cross
        // pair counts.
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t i = 0; i < pair.batch_a.size(); ++i)
            for (std::size_t j = 0; j < pair.batch_b.size(); ++j)
                if (pair.batch_a[i].label && pair.batch_b[j].label &&
                    *pair.batch_a[i].label == *pair.batch_b[j].label)
                    pairs.emplace_back(i, j);
        if (pairs.empty())
            for (std::size_t i = 0; i < pair.batch_a.size(); ++i)
                for (std::size_t j = 0; j < pair.batch_b.size(); ++j)
                    pairs.emplace_back(i, j);

        const std::vector<MultiIndexPair> idx = enumerate_multi_indices(
            pair.batch_a.front().feature_dim() + 2, cfg.n_cap);
        // The penalty embeds the mean-field subgraph (noise-free mask): the
        // expected masked structure is what should be invariant across
        // environments, and identical graphs then embed identically.
        auto embed = [&](const Graph& g) {
            ad::Var s_sf = tape::edge_logits(t, g, mv.ext_sf);
            ad::Var soft = tape::soft_mask(t, s_sf, g, tau,
                                           Mat::Zero(g.node_count(), g.node_count()));
            ad::Var masked_adj = ad::cmul(t, soft, g.adjacency);
            return detail::tape_masked_embedding(t, g, masked_adj,
                                                 structure_embedding(g, cfg.n_cap), idx);
        };
        std::map<std::size_t, ad::Var> emb_a, emb_b;
        for (const auto& [i, j] : pairs) {
            if (!emb_a.count(i)) emb_a.emplace(i, embed(pair.batch_a[i]));
            if (!emb_b.count(j)) emb_b.emplace(j, embed(pair.batch_b[j]));
        }
        ad::Var l1_sum = t.scalar(0.0);
        ExactSum feat_sum;
        for (const auto& [i, j] : pairs) {
            l1_sum = ad::add(
                t, l1_sum,
                ad::sum_all(t, ad::abs(t, ad::sub(t, emb_a.at(i), emb_b.at(j)))));
            feat_sum.add(detail::padded_feature_distance(pair.batch_a[i].features,
                                                         pair.batch_b[j].features));
        }
        double inv_pairs = 1.0 / static_cast<double>(pairs.size());
        ad::Var structure = ad::scale(t, l1_sum, inv_pairs);
        double feat = feat_sum.value() * inv_pairs;
        out.penalty = ad::cadd(t, structure, Mat::Constant(1, 1, feat));
        out.total = ad::add(t, risk, ad::scale(t, out.penalty, k));
    } else {
        out.penalty = t.scalar(0.0);
        out.total = risk;
    }
    return out;
}

// Evaluation wrapper: builds the tape once and reports its values, so the
// reported breakdown is exactly what training differentiates.
inline LossBreakdown total_loss(const EnvBatchPair& pair, const ModelParams& mp,
                                const TrainConfig& cfg, double tau, std::uint64_t seed) {
    ad::Tape t;
    ModelParams copy = mp;
    tape::ModelVars mv = tape::lift(t, copy);
    TapeLoss tl = total_loss_tape(t, pair, mv, cfg, tau, seed);
    LossBreakdown lb;
    lb.pns_risk.sf_term = tl.sf.scalar();
    lb.pns_risk.nc_term = tl.nc.scalar();
    lb.pns_risk.total = lb.pns_risk.sf_term + lb.pns_risk.nc_term;
    lb.gsd_penalty = tl.penalty.scalar();
    lb.K = cfg.effective_k();
    lb.total = tl.total.scalar();
    return lb;
}

struct EpochRecord {
    int epoch = 0;
    double sf_loss = 0.0;
    double nc_loss = 0.0;
    double gsd_penalty = 0.0;
    double total = 0.0;
    double train_acc = 0.0;
};

using TrainLog = std::vector<EpochRecord>;

inline std::string format_log(const TrainLog& log) {
    std::string out;
    for (const EpochRecord& r : log) {
        out += "epoch=" + std::to_string(r.epoch) + " sf_loss=" + fmt17(r.sf_loss) +
               " nc_loss=" + fmt17(r.nc_loss) + " gsd_penalty=" + fmt17(r.gsd_penalty) +
               " total=" + fmt17(r.total) + " train_acc=" + fmt17(r.train_acc) + "\n";
    }
    return out;
}

// Adam over a flat parameter view.
class Adam {
public:
    Adam(std::vector<Mat*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (Mat* p : params_) {
            m_.push_back(Mat::Zero(p->rows(), p->cols()));
            v_.push_back(Mat::Zero(p->rows(), p->cols()));
        }
    }

    void step(const std::vector<Mat>& grads) {
        if (grads.size() != params_.size()) throw ArgumentError("adam: gradient count mismatch");
        ++t_;
        double c1 = 1.0 - std::pow(beta1_, t_);
        double c2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
            Mat mhat = m_[i] / c1;
            Mat vhat = v_[i] / c2;
            *params_[i] -= lr_ * mhat.cwiseQuotient(
                (vhat.cwiseSqrt().array() + eps_).matrix());
        }
    }

private:
    std::vector<Mat*> params_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Mat> m_, v_;
};

struct FitResult {
    ModelParams params;
    TrainLog log;
};

inline FitResult fit(const Dataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    if (ds.size() < cfg.env_size_a + cfg.env_size_b)
        throw ArgumentError("fit: dataset smaller than one environment pair");
    FitResult res;
    res.params = init_model(ds.feature_dim, ds.num_classes, cfg.sizes,
                            derive_seed(cfg.seed, 0x696E6974ull));
    std::vector<Mat*> params = param_ptrs(res.params);
    Adam opt(params, cfg.lr);
    const int steps = std::max(1, ds.size() / (cfg.env_size_a + cfg.env_size_b));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double tau = cfg.tau_at(epoch);
        ExactSum sf, nc, pen, tot;
        int correct = 0, seen = 0;
        for (int step = 0; step < steps; ++step) {
            EnvBatchPair pair =
                split_environments(ds, cfg.env_size_a, cfg.env_size_b,
                                   derive_seed(cfg.seed, 0x656E76ull, epoch, step));
            ad::Tape t;
            tape::ModelVars mv = tape::lift(t, res.params);
            // The penalty is the dominant cost; applying it on a strided
            // subset of steps keeps its expected gradient direction while
            // cutting epoch time roughly by the stride.
            TrainConfig step_cfg = cfg;
            if (step % cfg.penalty_every != 0) step_cfg.K = 0.0;
            TapeLoss tl = total_loss_tape(t, pair, mv, step_cfg, tau,
                                          derive_seed(cfg.seed, 0x6C6F7373ull, epoch, step));
            if (!std::isfinite(tl.total.scalar()))
                throw NumericError("fit: non-finite loss at epoch " + std::to_string(epoch) +
                                   " step " + std::to_string(step));
            t.backward(tl.total);
            opt.step(tape::collect_grads(mv.all));
            sf.add(tl.sf.scalar());
            nc.add(tl.nc.scalar());
            pen.add(tl.penalty.scalar());
            tot.add(tl.total.scalar());
            correct += tl.sf_correct;
            seen += tl.n_graphs;
        }
        EpochRecord r;
        r.epoch = epoch;
        r.sf_loss = sf.value() / steps;
        r.nc_loss = nc.value() / steps;
        r.gsd_penalty = pen.value() / steps;
        r.total = tot.value() / steps;
        r.train_acc = seen ? static_cast<double>(correct) / seen : 0.0;
        res.log.push_back(r);
    }
    return res;
}

struct BoundReport {
    double violation_rate = 0.0;
    double fitted_k = 0.0;
    double fitted_lambda = 0.0;
};

namespace detail {

// Smallest (K, lambda >= 0) covering every pair, by total slack
// n*lambda + K*sum(d): candidate K values are 0 and all constraint
// intersections; lambda then follows from feasibility.
inline void fit_bound(const std::vector<double>& delta, const std::vector<double>& d,
                      double& k_out, double& lambda_out) {
    const std::size_t n = delta.size();
    double d_sum = 0.0;
    for (double x : d) d_sum += x;
    std::vector<double> candidates{0.0};
    for (std::size_t i = 0; i < n; ++i) {
        if (d[i] > 1e-12 && delta[i] > 0.0) candidates.push_back(delta[i] / d[i]);
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(d[i] - d[j]) > 1e-12) {
                double k = (delta[i] - delta[j]) / (d[i] - d[j]);
                if (k > 0.0) candidates.push_back(k);
            }
    }
    double best = std::numeric_limits<double>::infinity();
    for (double k : candidates) {
        double lambda = 0.0;
        for (std::size_t i = 0; i < n; ++i) lambda = std::max(lambda, delta[i] - k * d[i]);
        double objective = static_cast<double>(n) * lambda + k * d_sum;
        if (objective < best) {
            best = objective;
            k_out = k;
            lambda_out = lambda;
        }
    }
}

}  // namespace detail

// Empirical check of the generalization inequality r_a <= r_b + K*d + lambda:
// fit (K, lambda) on n_pairs sampled pairs, then measure the violation rate on
// n_pairs fresh ones.
inline BoundReport bound_check(const Dataset& ds, const ModelParams& mp, int n_pairs,
                               std::uint64_t seed, int size_a = 8, int size_b = 8,
                               int n_cap = 2, int n_samples = 4, double tau = 0.5) {
    if (n_pairs < 10) throw ArgumentError("bound_check: need at least 10 pairs");
    auto measure = [&](std::uint64_t pair_seed, double& delta, double& dist) {
        EnvBatchPair pair = split_environments(ds, size_a, size_b, pair_seed);
        double r_a = pns_risk(pair.batch_a, mp, n_samples, Surrogate::indicator,
                              derive_seed(pair_seed, 10), tau)
                         .total;
        double r_b = pns_risk(pair.batch_b, mp, n_samples, Surrogate::indicator,
                              derive_seed(pair_seed, 11), tau)
                         .total;
        delta = r_a - r_b;
        dist = gsd(pair.batch_a, pair.batch_b, n_cap).total;
    };
    std::vector<double> delta(n_pairs), d(n_pairs);
    for (int p = 0; p < n_pairs; ++p)
        measure(derive_seed(seed, 1, p), delta[p], d[p]);
    BoundReport rep;
    detail::fit_bound(delta, d, rep.fitted_k, rep.fitted_lambda);
    int violations = 0;
    for (int p = 0; p < n_pairs; ++p) {
        double dl, dd;
        measure(derive_seed(seed, 2, p), dl, dd);
        if (dl > rep.fitted_k * dd + rep.fitted_lambda + 1e-9) ++violations;
    }
    rep.violation_rate = static_cast<double>(violations) / n_pairs;
    return rep;
}

}  // namespace pnsis
