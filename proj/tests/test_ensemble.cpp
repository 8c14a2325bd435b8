#include <catch2/catch_amalgamated.hpp>

#include "pnsis/ensemble.hpp"
#include "pnsis/synthgen.hpp"

using namespace pnsis;

namespace {

ModelSizes tiny_sizes() {
    ModelSizes s;
    s.extractor_hidden = {3, 2};
    s.classifier_hidden = {4, 4};
    return s;
}

Graph random_graph(Rng& rng, int v, int d) {
    Graph g;
    g.adjacency = Mat::Zero(v, v);
    for (int i = 0; i < v; ++i)
        for (int j = i + 1; j < v; ++j)
            if (rng.bernoulli(0.6)) g.adjacency(i, j) = g.adjacency(j, i) = 1.0;
    g.features = Mat(v, d);
    for (int i = 0; i < v; ++i)
        for (int c = 0; c < d; ++c) g.features(i, c) = rng.uniform(-1.0, 1.0);
    return g;
}

// Pseudo-pairs whose complement-graph features carry (or do not carry) the
// pseudo-label.
std::vector<PseudoPair> synthetic_pairs(int n, bool informative, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<PseudoPair> pl;
    for (int i = 0; i < n; ++i) {
        PseudoPair p;
        p.y_hat = i % 2;
        p.g = random_graph(rng, 5, 2);
        if (informative)
            p.g.features.col(0).setConstant(p.y_hat ? 1.0 : -1.0);
        p.mask_s.mask = p.g.adjacency;  // full support
        p.mask_s.hard = true;
        p.mask_c.mask = Mat::Zero(5, 5);
        p.mask_c.hard = true;
        p.p_inv = Vec::Constant(2, 0.5);
        pl.push_back(std::move(p));
    }
    return pl;
}

double spurious_accuracy(const std::vector<PseudoPair>& pl, const ClassifierParams& cp) {
    int correct = 0;
    for (const PseudoPair& p : pl) {
        int a;
        classify_subgraph(p.g, p.mask_s, cp).maxCoeff(&a);
        if (a == p.y_hat) ++correct;
    }
    return static_cast<double>(correct) / pl.size();
}

EpsilonStats identity_eps(double prior) {
    EpsilonStats eps;
    eps.e0_rate = 1.0;
    eps.e1 = 1.0;
    eps.e3 = std::log(prior) - std::log1p(-prior);
    return eps;
}

}  // namespace

TEST_CASE("pseudo masks partition the edge support") {
    SpmotifConfig gen;
    gen.n_graphs = 30;
    gen.seed = 14;
    Dataset ds = generate_spmotif(gen);
    ModelParams mp = init_model(ds.feature_dim, ds.num_classes, tiny_sizes(), 5);
    auto pl = build_pseudo_dataset(ds, mp, 0.3, 77);
    REQUIRE(static_cast<int>(pl.size()) == ds.size());
    for (const PseudoPair& p : pl) {
        const int v = p.g.node_count();
        for (int i = 0; i < v; ++i)
            for (int j = 0; j < v; ++j) {
                double c = p.mask_c.mask(i, j), s = p.mask_s.mask(i, j);
                if (p.g.adjacency(i, j) == 0.0) {
                    CHECK(c == 0.0);
                    CHECK(s == 0.0);
                } else {
                    CHECK(c + s == 1.0);
                    CHECK((c == 0.0 || c == 1.0));
                }
            }
        // y_hat is the argmax of p_inv.
        int a;
        p.p_inv.maxCoeff(&a);
        CHECK(p.y_hat == a);
    }
    // Deterministic in the seed.
    auto pl2 = build_pseudo_dataset(ds, mp, 0.3, 77);
    for (std::size_t i = 0; i < pl.size(); ++i) CHECK(pl[i].mask_c.mask == pl2[i].mask_c.mask);
}

TEST_CASE("train_spurious learns informative complements") {
    auto pl = synthetic_pairs(60, true, 9);
    TrainConfig cfg;
    cfg.sizes = tiny_sizes();
    cfg.epochs = 40;
    cfg.lr = 0.02;
    cfg.seed = 3;
    ClassifierParams cp = train_spurious(pl, 2, cfg);
    CHECK(spurious_accuracy(pl, cp) >= 0.9);
}

TEST_CASE("train_spurious stays near chance on uninformative complements") {
    auto pl = synthetic_pairs(60, false, 10);
    TrainConfig cfg;
    cfg.sizes = tiny_sizes();
    cfg.epochs = 10;
    cfg.lr = 0.01;
    cfg.seed = 3;
    ClassifierParams cp = train_spurious(pl, 2, cfg);
    CHECK(spurious_accuracy(pl, cp) <= 0.75);
}

TEST_CASE("train_spurious with zero learning rate leaves the init unchanged") {
    auto pl = synthetic_pairs(20, true, 11);
    TrainConfig cfg;
    cfg.sizes = tiny_sizes();
    cfg.epochs = 3;
    cfg.lr = 0.0;
    cfg.seed = 8;
    ClassifierParams cp = train_spurious(pl, 2, cfg);
    Rng rng(derive_seed(cfg.seed, 0x7370696Eull));
    ClassifierParams fresh = init_classifier(2, cfg.sizes.classifier_hidden, 2, rng);
    std::vector<Mat*> a = param_ptrs(cp), b = param_ptrs(fresh);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
}

TEST_CASE("train_spurious rejects degenerate pseudo-datasets") {
    TrainConfig cfg;
    cfg.sizes = tiny_sizes();
    CHECK_THROWS_AS(train_spurious({}, 2, cfg), ArgumentError);
    auto pl = synthetic_pairs(10, true, 12);
    for (PseudoPair& p : pl) p.y_hat = 1;
    CHECK_THROWS_AS(train_spurious(pl, 2, cfg), ArgumentError);
}

TEST_CASE("epsilon statistics on a hand-built pseudo-dataset") {
    // Spurious classifier with zero readout: always uniform, p_sp = 0.5.
    Rng rng(1);
    ClassifierParams cp = init_classifier(2, {3}, 2, rng);
    cp.readout_w.setZero();
    cp.readout_b.setZero();
    auto pl = synthetic_pairs(10, false, 13);  // y_hat alternates 0/1
    EpsilonStats eps = epsilon_stats(pl, cp, 1);
    CHECK(eps.e0 == 5.0);
    CHECK(eps.e0_rate == 0.5);
    CHECK(eps.e1 == Catch::Approx(0.5));
    CHECK(eps.e2 == Catch::Approx(0.5));  // p_inv was 0.5 everywhere
    CHECK(eps.e3 == Catch::Approx(0.0).margin(1e-12));
    CHECK(eps.degenerate);  // 0.5 + 0.5 - 1 = 0
}

TEST_CASE("fuse is neutral when the spurious evidence equals the prior") {
    EpsilonStats eps;
    eps.e0_rate = 0.6;
    eps.e1 = 0.7;
    eps.e3 = std::log(0.6) - std::log1p(-0.6);
    // Pick p_sp so the calibrated score equals the base rate: then the spurious
    // logit cancels the prior term exactly.
    double p_sp = eps.e0_rate * (eps.e0_rate + eps.e1 - 1.0) + 1.0 - eps.e0_rate;
    for (double p_inv : {0.1, 0.25, 0.5, 0.77, 0.9}) {
        CHECK(fuse(p_inv, p_sp, eps) == Catch::Approx(p_inv).margin(1e-9));
    }
}

TEST_CASE("identity calibration with a flat prior returns the spurious score") {
    EpsilonStats eps = identity_eps(0.5);
    for (double p_sp : {0.2, 0.5, 0.8})
        CHECK(fuse(0.5, p_sp, eps) == Catch::Approx(p_sp).margin(1e-9));
}

TEST_CASE("fuse is monotone in both inputs") {
    EpsilonStats eps;
    eps.e0_rate = 0.55;
    eps.e1 = 0.8;
    eps.e3 = std::log(0.55) - std::log1p(-0.55);
    for (double a = 0.1; a < 0.9; a += 0.1)
        for (double b = 0.35; b < 0.9; b += 0.1) {
            CHECK(fuse(a + 0.05, b, eps) >= fuse(a, b, eps));
            CHECK(fuse(a, b + 0.05, eps) >= fuse(a, b, eps));
        }
}

TEST_CASE("fused scores match the Bayes posterior on a 21x21 grid") {
    // Two conditionally independent evidence channels for a Bernoulli(q) label.
    // Each channel is summarized by its own posterior; fusing them with identity
    // calibration must reproduce the exact joint posterior.
    const double q = 0.3;
    EpsilonStats eps = identity_eps(q);
    double max_err = 0.0;
    for (int i = 0; i <= 20; ++i)
        for (int j = 0; j <= 20; ++j) {
            double p_inv = 0.05 + 0.9 * i / 20.0;
            double p_sp = 0.05 + 0.9 * j / 20.0;
            // Channel likelihood ratios implied by the per-channel posteriors.
            double la = p_inv / (1.0 - p_inv) * (1.0 - q) / q;
            double lb = p_sp / (1.0 - p_sp) * (1.0 - q) / q;
            double odds = q / (1.0 - q) * la * lb;
            double bayes = odds / (1.0 + odds);
            max_err = std::max(max_err, std::abs(fuse(p_inv, p_sp, eps) - bayes));
        }
    CHECK(max_err <= 0.05);
    CHECK(max_err <= 1e-4);  // the match is actually near-exact
}

TEST_CASE("degenerate statistics fall back to the raw spurious score") {
    EpsilonStats eps;
    eps.e0_rate = 0.4;
    eps.e1 = 0.6 + 1e-9;  // e0_rate + e1 - 1 within tolerance of zero
    eps.degenerate = true;
    eps.e3 = 0.0;
    CHECK(fuse(0.5, 0.7, eps) == Catch::Approx(0.7).margin(1e-9));
}

TEST_CASE("fuse_multiclass renormalizes and validates shapes") {
    std::vector<EpsilonStats> eps(3, identity_eps(1.0 / 3.0));
    Vec p_inv(3), p_sp(3);
    p_inv << 0.5, 0.3, 0.2;
    p_sp << 0.4, 0.4, 0.2;
    Vec f = fuse_multiclass(p_inv, p_sp, eps);
    CHECK(f.sum() == Catch::Approx(1.0).margin(1e-12));
    CHECK(f.minCoeff() >= 0.0);
    Vec bad(2);
    bad << 0.5, 0.5;
    CHECK_THROWS_AS(fuse_multiclass(bad, p_sp, eps), ArgumentError);
}

TEST_CASE("end-to-end ensemble pipeline runs and is deterministic") {
    SpmotifConfig gen;
    gen.n_graphs = 45;
    gen.seed = 19;
    Dataset ds = generate_spmotif(gen);
    ModelParams mp = init_model(ds.feature_dim, ds.num_classes, tiny_sizes(), 23);
    TrainConfig cfg;
    cfg.sizes = tiny_sizes();
    cfg.epochs = 2;
    cfg.seed = 6;
    Dataset unl = ds;
    for (Graph& g : unl.graphs) g.label.reset();
    EnsembleModel em = build_ensemble(unl, mp, cfg, 0.3);
    REQUIRE(static_cast<int>(em.eps.size()) == ds.num_classes);
    Vec a = ensemble_predict(ds.graphs[0], mp, em, 0.3, 42);
    Vec b = ensemble_predict(ds.graphs[0], mp, em, 0.3, 42);
    CHECK(a == b);
    CHECK(a.sum() == Catch::Approx(1.0).margin(1e-12));
}
