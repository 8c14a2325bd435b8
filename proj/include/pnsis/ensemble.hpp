#pragma once

#include <vector>

#include "pnsis/objective.hpp"

namespace pnsis {

// One transductive pseudo-labeled example: the extracted invariant subgraph,
// its complement, and the invariant classifier's verdict on the former.
struct PseudoPair {
    Graph g;
    SubgraphMask mask_c;  // hard invariant mask
    SubgraphMask mask_s;  // complement over the edge support
    Vec p_inv;            // invariant classifier distribution
    int y_hat = 0;        // pseudo-label
};

inline std::vector<PseudoPair> build_pseudo_dataset(const Dataset& ds, const ModelParams& mp,
                                                    double tau_eval, std::uint64_t seed) {
    std::vector<PseudoPair> pl;
    pl.reserve(ds.size());
    for (int n = 0; n < ds.size(); ++n) {
        const Graph& g = ds.graphs[n];
        PseudoPair p;
        p.g = g;
        EdgeProbMatrix ep = extract_edge_probs(g, mp.extractor_sf);
        p.mask_c = sample_subgraph(ep, g, tau_eval, true, derive_seed(seed, 0x706Cull, n));
        p.mask_s = complement_mask(g, p.mask_c);
        p.p_inv = classify_subgraph(g, p.mask_c, mp.classifier_sf);
        if (p.p_inv.size() == 2) {
            p.y_hat = p.p_inv(1) >= 0.5 ? 1 : 0;
        } else {
            int a;
            p.p_inv.maxCoeff(&a);
            p.y_hat = a;
        }
        pl.push_back(std::move(p));
    }
    return pl;
}

// Fit the spurious classifier on (complement subgraph, pseudo-label) pairs.
inline ClassifierParams train_spurious(const std::vector<PseudoPair>& pl, int num_classes,
                                       const TrainConfig& cfg) {
    if (pl.empty()) throw ArgumentError("train_spurious: empty pseudo-dataset");
    bool multi = false;
    for (const PseudoPair& p : pl)
        if (p.y_hat != pl.front().y_hat) multi = true;
    if (!multi) throw ArgumentError("train_spurious: pseudo-labels are single-class");
    const int d = pl.front().g.feature_dim();
    ClassifierParams cp;
    {
        Rng rng(derive_seed(cfg.seed, 0x7370696Eull));
        cp = init_classifier(d, cfg.sizes.classifier_hidden, num_classes, rng);
    }
    std::vector<Mat*> params = param_ptrs(cp);
    Adam opt(params, cfg.lr);
    const int batch = 8;
    Rng shuffle_rng(derive_seed(cfg.seed, 0x73687566ull));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order =
            shuffle_rng.sample_without_replacement(static_cast<int>(pl.size()),
                                                   static_cast<int>(pl.size()));
        for (std::size_t start = 0; start < order.size(); start += batch) {
            ad::Tape t;
            std::vector<ad::Var> all;
            tape::ClfVars cv = tape::lift(t, cp, all);
            ad::Var loss = t.scalar(0.0);
            std::size_t end = std::min(order.size(), start + batch);
            for (std::size_t i = start; i < end; ++i) {
                const PseudoPair& p = pl[order[i]];
                ad::Var mask = t.constant(p.mask_s.mask);
                ad::Var logits = tape::classify(t, p.g, mask, cv);
                loss = ad::add(t, loss, ad::softmax_cross_entropy(t, logits, p.y_hat));
            }
            loss = ad::scale(t, loss, 1.0 / static_cast<double>(end - start));
            if (!std::isfinite(loss.scalar()))
                throw NumericError("train_spurious: non-finite loss at epoch " +
                                   std::to_string(epoch));
            t.backward(loss);
            opt.step(tape::collect_grads(all));
        }
    }
    return cp;
}

// Calibration statistics for one class treated as the positive label.
struct EpsilonStats {
    double e0 = 0.0;       // raw pseudo-label sum
    double e0_rate = 0.5;  // clamped base rate used in calibration
    double e1 = 0.0;
    double e2 = 0.0;       // recorded, not used in fusion
    double e3 = 0.0;       // logit of the base rate
    bool degenerate = false;
};

namespace detail {

inline double clamp_prob(double p) { return std::min(1.0 - 1e-6, std::max(1e-6, p)); }

inline double logit(double p) {
    p = clamp_prob(p);
    return std::log(p) - std::log1p(-p);
}

}  // namespace detail

inline EpsilonStats epsilon_stats(const std::vector<PseudoPair>& pl,
                                  const ClassifierParams& spurious, int cls) {
    if (pl.empty()) throw ArgumentError("epsilon_stats: empty pseudo-dataset");
    const double n = static_cast<double>(pl.size());
    EpsilonStats eps;
    ExactSum e1_sum, e2_sum;
    for (const PseudoPair& p : pl) {
        const double y = p.y_hat == cls ? 1.0 : 0.0;
        eps.e0 += y;
        double p_sp = classify_subgraph(p.g, p.mask_s, spurious)(cls);
        e1_sum.add((1.0 - y) * (1.0 - p_sp));
        e2_sum.add(y * p.p_inv(cls));
    }
    eps.e0_rate = detail::clamp_prob(eps.e0 / n);
    eps.e1 = n - eps.e0 > 0.5 ? e1_sum.value() / (n - eps.e0) : 0.0;
    eps.e2 = eps.e0 > 0.5 ? e2_sum.value() / eps.e0 : 0.0;
    eps.e3 = detail::logit(eps.e0_rate);
    eps.degenerate = std::abs(eps.e0_rate + eps.e1 - 1.0) < 1e-6;
    return eps;
}

// Posterior fusion as a single sigmoid over summed logits: invariant
// evidence plus bias-corrected spurious evidence minus the prior.
inline double fuse(double p_inv, double p_sp, const EpsilonStats& eps) {
    double cal = eps.degenerate
                     ? p_sp
                     : (p_sp + eps.e0_rate - 1.0) / (eps.e0_rate + eps.e1 - 1.0);
    double z = detail::logit(p_inv) + detail::logit(detail::clamp_prob(cal)) - eps.e3;
    return 1.0 / (1.0 + std::exp(-z));
}

// One-vs-rest fusion per class, renormalized.
inline Vec fuse_multiclass(const Vec& p_inv, const Vec& p_sp,
                           const std::vector<EpsilonStats>& eps) {
    if (p_inv.size() != p_sp.size() || static_cast<std::size_t>(p_inv.size()) != eps.size())
        throw ArgumentError("fuse_multiclass: size mismatch");
    Vec f(p_inv.size());
    for (int c = 0; c < p_inv.size(); ++c) f(c) = fuse(p_inv(c), p_sp(c), eps[c]);
    double s = f.sum();
    if (s <= 0.0) throw NumericError("fuse_multiclass: degenerate fused scores");
    return f / s;
}

// Full trained ensemble: invariant model, spurious classifier, and per-class
// calibration statistics.
struct EnsembleModel {
    ClassifierParams spurious;
    std::vector<EpsilonStats> eps;
};

inline EnsembleModel build_ensemble(const Dataset& ds, const ModelParams& mp,
                                    const TrainConfig& cfg, double tau_eval) {
    std::vector<PseudoPair> pl =
        build_pseudo_dataset(ds, mp, tau_eval, derive_seed(cfg.seed, 0x656E73ull));
    EnsembleModel em;
    bool multi = false;
    for (const PseudoPair& p : pl)
        if (p.y_hat != pl.front().y_hat) multi = true;
    if (!multi) {
        // Single-class pseudo-labels leave nothing to fit; fall back to an
        // uninformative spurious classifier, which fusion treats as neutral.
        Rng rng(derive_seed(cfg.seed, 0x7370696Eull));
        em.spurious = init_classifier(pl.front().g.feature_dim(),
                                      cfg.sizes.classifier_hidden, mp.num_classes, rng);
        em.spurious.readout_w.setZero();
        em.spurious.readout_b.setZero();
        for (int c = 0; c < mp.num_classes; ++c) {
            EpsilonStats eps;
            eps.degenerate = true;
            eps.e3 = detail::logit(1.0 / mp.num_classes);
            em.eps.push_back(eps);
        }
        return em;
    }
    em.spurious = train_spurious(pl, mp.num_classes, cfg);
    for (int c = 0; c < mp.num_classes; ++c)
        em.eps.push_back(epsilon_stats(pl, em.spurious, c));
    return em;
}

inline Vec ensemble_predict(const Graph& g, const ModelParams& mp, const EnsembleModel& em,
                            double tau_eval, std::uint64_t seed) {
    EdgeProbMatrix ep = extract_edge_probs(g, mp.extractor_sf);
    SubgraphMask mask_c = sample_subgraph(ep, g, tau_eval, true, seed);
    SubgraphMask mask_s = complement_mask(g, mask_c);
    Vec p_inv = classify_subgraph(g, mask_c, mp.classifier_sf);
    Vec p_sp = classify_subgraph(g, mask_s, em.spurious);
    return fuse_multiclass(p_inv, p_sp, em.eps);
}

}  // namespace pnsis
