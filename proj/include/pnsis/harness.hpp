#pragma once

#include <map>
#include <sstream>
#include <vector>

#include "pnsis/ensemble.hpp"
#include "pnsis/metrics.hpp"
#include "pnsis/synthgen.hpp"

namespace pnsis {

// Flat key=value configuration file; '#' starts a comment line.
struct Config {
    std::map<std::string, std::string> kv;

    static Config parse(std::istream& in) {
        Config c;
        std::string line;
        long line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line[0] == '#') continue;
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ParseError("expected key=value, got '" + line + "'", line_no);
            c.kv[line.substr(0, eq)] = line.substr(eq + 1);
        }
        return c;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open: " + path);
        return parse(in);
    }

    bool has(const std::string& key) const { return kv.count(key) != 0; }
    std::string get(const std::string& key, const std::string& def) const {
        auto it = kv.find(key);
        return it == kv.end() ? def : it->second;
    }
    int get_int(const std::string& key, int def) const {
        auto it = kv.find(key);
        return it == kv.end() ? def : std::stoi(it->second);
    }
    double get_double(const std::string& key, double def) const {
        auto it = kv.find(key);
        return it == kv.end() ? def : std::stod(it->second);
    }
    std::uint64_t get_u64(const std::string& key, std::uint64_t def) const {
        auto it = kv.find(key);
        return it == kv.end() ? def : std::stoull(it->second);
    }
    bool get_bool(const std::string& key, bool def) const {
        auto it = kv.find(key);
        if (it == kv.end()) return def;
        return it->second == "1" || it->second == "true" || it->second == "yes";
    }
};

inline TrainConfig train_config_from(const Config& c, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = c.get_int("epochs", cfg.epochs);
    cfg.lr = c.get_double("lr", cfg.lr);
    cfg.K = c.get_double("K", cfg.K);
    cfg.env_size_a = c.get_int("env_size_a", cfg.env_size_a);
    cfg.env_size_b = c.get_int("env_size_b", cfg.env_size_b);
    cfg.tau0 = c.get_double("tau0", cfg.tau0);
    cfg.tau_decay = c.get_double("tau_decay", cfg.tau_decay);
    cfg.tau_min = c.get_double("tau_min", cfg.tau_min);
    cfg.c_max = c.get_double("c_max", cfg.c_max);
    cfg.n_samples_train = c.get_int("n_samples_train", cfg.n_samples_train);
    cfg.n_samples_eval = c.get_int("n_samples_eval", cfg.n_samples_eval);
    cfg.n_cap = c.get_int("n_cap", cfg.n_cap);
    cfg.penalty_every = c.get_int("penalty_every", cfg.penalty_every);
    if (c.has("clf_width") || c.has("clf_depth")) {
        int w = c.get_int("clf_width", cfg.sizes.classifier_hidden.front());
        int d = c.get_int("clf_depth", static_cast<int>(cfg.sizes.classifier_hidden.size()));
        if (w < 1 || d < 1) throw ArgumentError("clf_width/clf_depth must be positive");
        cfg.sizes.classifier_hidden.assign(d, w);
    }
    if (c.has("ext_width") || c.has("ext_depth")) {
        int w = c.get_int("ext_width", cfg.sizes.extractor_hidden.back());
        int d = c.get_int("ext_depth", static_cast<int>(cfg.sizes.extractor_hidden.size()));
        if (w < 1 || d < 1) throw ArgumentError("ext_width/ext_depth must be positive");
        cfg.sizes.extractor_hidden.assign(d, w);
    }
    cfg.seed = seed;
    std::string ab = c.get("ablation", "full");
    if (ab == "full") cfg.ablation = Ablation::full;
    else if (ab == "no_bound") cfg.ablation = Ablation::no_bound;
    else if (ab == "no_ensemble") cfg.ablation = Ablation::no_ensemble;
    else throw ArgumentError("unknown ablation: " + ab);
    return cfg;
}

// ---- evaluation helpers ----

// Macro-averaged one-vs-rest ROC-AUC over the classes present on both sides.
inline double multiclass_auc(const std::vector<Vec>& scores, const std::vector<int>& labels,
                             int num_classes) {
    if (scores.size() != labels.size() || scores.empty())
        throw ArgumentError("multiclass_auc: bad inputs");
    std::vector<double> per_class;
    for (int c = 0; c < num_classes; ++c) {
        std::vector<double> s;
        std::vector<int> y;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            s.push_back(scores[i](c));
            y.push_back(labels[i] == c ? 1 : 0);
        }
        bool pos = false, neg = false;
        for (int v : y) (v ? pos : neg) = true;
        if (pos && neg) per_class.push_back(roc_auc(s, y));
    }
    if (per_class.empty()) throw ArgumentError("multiclass_auc: single class");
    return mean(per_class);
}

// Per-edge soft mask scores vs ground-truth invariant edges, pooled across all
// graphs carrying a gt_mask.
inline double mask_recovery_auc(const Dataset& ds, const ModelParams& mp) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const Graph& g : ds.graphs) {
        if (!g.gt_mask) continue;
        EdgeProbMatrix ep = extract_edge_probs(g, mp.extractor_sf);
        const int v = g.node_count();
        for (int i = 0; i < v; ++i)
            for (int j = i + 1; j < v; ++j)
                if (g.adjacency(i, j) != 0.0) {
                    scores.push_back(ep.probs(i, j));
                    labels.push_back((*g.gt_mask)(i, j) != 0.0 ? 1 : 0);
                }
    }
    if (scores.empty()) throw ArgumentError("mask_recovery_auc: no ground-truth masks");
    return roc_auc(scores, labels);
}

// Same pooling with uniform random scores: the chance baseline.
inline double random_mask_auc(const Dataset& ds, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> scores;
    std::vector<int> labels;
    for (const Graph& g : ds.graphs) {
        if (!g.gt_mask) continue;
        const int v = g.node_count();
        for (int i = 0; i < v; ++i)
            for (int j = i + 1; j < v; ++j)
                if (g.adjacency(i, j) != 0.0) {
                    scores.push_back(rng.uniform());
                    labels.push_back((*g.gt_mask)(i, j) != 0.0 ? 1 : 0);
                }
    }
    if (scores.empty()) throw ArgumentError("random_mask_auc: no ground-truth masks");
    return roc_auc(scores, labels);
}

// ---- ERM baseline ----

// Single classifier on full graphs, same backbone and optimizer.
inline ClassifierParams train_erm(const Dataset& ds, const TrainConfig& cfg) {
    ClassifierParams cp;
    {
        Rng rng(derive_seed(cfg.seed, 0x65726Dull));
        cp = init_classifier(ds.feature_dim, cfg.sizes.classifier_hidden, ds.num_classes, rng);
    }
    std::vector<Mat*> params = param_ptrs(cp);
    Adam opt(params, cfg.lr);
    const int batch = cfg.env_size_a + cfg.env_size_b;
    Rng shuffle_rng(derive_seed(cfg.seed, 0x6F726472ull));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order = shuffle_rng.sample_without_replacement(ds.size(), ds.size());
        for (std::size_t start = 0; start < order.size(); start += batch) {
            ad::Tape t;
            std::vector<ad::Var> all;
            tape::ClfVars cv = tape::lift(t, cp, all);
            ad::Var loss = t.scalar(0.0);
            std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch));
            for (std::size_t i = start; i < end; ++i) {
                const Graph& g = ds.graphs[order[i]];
                if (!g.label) throw ArgumentError("train_erm: unlabeled graph");
                ad::Var logits = tape::classify(t, g, std::nullopt, cv);
                loss = ad::add(t, loss, ad::softmax_cross_entropy(t, logits, *g.label));
            }
            loss = ad::scale(t, loss, 1.0 / static_cast<double>(end - start));
            if (!std::isfinite(loss.scalar()))
                throw NumericError("train_erm: non-finite loss at epoch " +
                                   std::to_string(epoch));
            t.backward(loss);
            opt.step(tape::collect_grads(all));
        }
    }
    return cp;
}

// ---- experiment orchestration ----

struct SeedMetrics {
    std::uint64_t seed = 0;
    double train_acc = 0.0;
    double test_acc = 0.0;
    double test_auc = 0.0;
    double mask_auc = 0.0;        // -1 when not applicable
    double random_mask_auc = 0.0;
};

struct ExperimentReport {
    std::vector<std::pair<std::string, std::string>> config_echo;  // sorted
    std::string method;
    std::string ablation;
    std::vector<SeedMetrics> per_seed;
    std::vector<std::vector<EpsilonStats>> eps_per_seed;  // empty without ensemble
    bool failed = false;
    std::string failed_stage;

    std::vector<double> column(double SeedMetrics::* f) const {
        std::vector<double> out;
        for (const SeedMetrics& m : per_seed) out.push_back(m.*f);
        return out;
    }
};

inline std::string serialize_report(const ExperimentReport& r) {
    std::ostringstream out;
    out << "PNSIS-REPORT v1\n";
    for (const auto& [k, v] : r.config_echo) out << "config " << k << "=" << v << "\n";
    out << "method " << r.method << "\n";
    out << "ablation " << r.ablation << "\n";
    for (const SeedMetrics& m : r.per_seed) {
        out << "seed " << m.seed << " train_acc=" << fmt17(m.train_acc)
            << " test_acc=" << fmt17(m.test_acc) << " test_auc=" << fmt17(m.test_auc)
            << " mask_auc=" << fmt17(m.mask_auc)
            << " random_mask_auc=" << fmt17(m.random_mask_auc) << "\n";
    }
    for (std::size_t s = 0; s < r.eps_per_seed.size(); ++s)
        for (std::size_t c = 0; c < r.eps_per_seed[s].size(); ++c) {
            const EpsilonStats& e = r.eps_per_seed[s][c];
            out << "eps seed=" << r.per_seed[s].seed << " class=" << c << " e0=" << fmt17(e.e0)
                << " e0_rate=" << fmt17(e.e0_rate) << " e1=" << fmt17(e.e1)
                << " e2=" << fmt17(e.e2) << " e3=" << fmt17(e.e3)
                << " degenerate=" << (e.degenerate ? 1 : 0) << "\n";
        }
    if (!r.per_seed.empty()) {
        out << "aggregate"
            << " train_acc_mean=" << fmt17(mean(r.column(&SeedMetrics::train_acc)))
            << " test_acc_mean=" << fmt17(mean(r.column(&SeedMetrics::test_acc)))
            << " test_acc_std=" << fmt17(sample_std(r.column(&SeedMetrics::test_acc)))
            << " test_auc_mean=" << fmt17(mean(r.column(&SeedMetrics::test_auc)))
            << " mask_auc_mean=" << fmt17(mean(r.column(&SeedMetrics::mask_auc))) << "\n";
    }
    out << "status " << (r.failed ? "failed " + r.failed_stage : "ok") << "\n";
    return out.str();
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) seeds.push_back(std::stoull(tok));
    if (seeds.empty()) throw ArgumentError("empty seed list");
    return seeds;
}

inline ExperimentReport run_experiment(const Config& c) {
    ExperimentReport rep;
    for (const auto& [k, v] : c.kv) rep.config_echo.emplace_back(k, v);
    rep.method = c.get("method", "pnsis");
    rep.ablation = c.get("ablation", "full");
    std::string stage = "setup";
    try {
        std::vector<std::uint64_t> seeds = parse_seed_list(c.get("seeds", "1"));
        const std::uint64_t data_seed = c.get_u64("data_seed", 0);
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = train_config_from(c, seed);
            stage = "generate";
            SpmotifConfig train_gen;
            train_gen.n_graphs = c.get_int("n_train", 300);
            train_gen.bias = c.get_double("bias", 0.9);
            train_gen.mixed = c.get_bool("mixed", false);
            train_gen.base_size_min = c.get_int("base_size_min", train_gen.base_size_min);
            train_gen.base_size_max = c.get_int("base_size_max", train_gen.base_size_max);
            train_gen.seed = derive_seed(data_seed, seed, 1);
            Dataset train_ds = generate_spmotif(train_gen);
            SpmotifConfig test_gen = train_gen;
            test_gen.n_graphs = c.get_int("n_test", 150);
            test_gen.bias = 1.0 / 3.0;  // unbiased test split
            test_gen.seed = derive_seed(data_seed, seed, 2);
            Dataset test_ds = generate_spmotif(test_gen);

            SeedMetrics m;
            m.seed = seed;
            std::vector<Vec> scores;
            std::vector<int> labels;
            for (const Graph& g : test_ds.graphs) labels.push_back(*g.label);

            if (rep.method == "erm") {
                stage = "train";
                ClassifierParams cp = train_erm(train_ds, cfg);
                stage = "evaluate";
                int correct = 0;
                for (int i = 0; i < train_ds.size(); ++i) {
                    int a;
                    classify_full(train_ds.graphs[i], cp).maxCoeff(&a);
                    if (a == *train_ds.graphs[i].label) ++correct;
                }
                m.train_acc = static_cast<double>(correct) / train_ds.size();
                for (const Graph& g : test_ds.graphs) scores.push_back(classify_full(g, cp));
                m.mask_auc = -1.0;
                m.random_mask_auc = -1.0;
            } else if (rep.method == "pnsis") {
                stage = "train";
                FitResult fr = fit(train_ds, cfg);
                m.train_acc = fr.log.empty() ? 0.0 : fr.log.back().train_acc;
                const double tau_eval = cfg.tau_min;
                if (cfg.ablation == Ablation::no_ensemble) {
                    stage = "evaluate";
                    for (int i = 0; i < test_ds.size(); ++i)
                        scores.push_back(joint_predict(test_ds.graphs[i], fr.params,
                                                       cfg.n_samples_eval, tau_eval,
                                                       derive_seed(seed, 0x6576ull, i)));
                } else {
                    stage = "ensemble";
                    Dataset unl = test_ds;  // transductive: pseudo-labels on test inputs
                    for (Graph& g : unl.graphs) g.label.reset();
                    EnsembleModel em = build_ensemble(unl, fr.params, cfg, tau_eval);
                    rep.eps_per_seed.push_back(em.eps);
                    stage = "evaluate";
                    for (int i = 0; i < test_ds.size(); ++i)
                        scores.push_back(ensemble_predict(test_ds.graphs[i], fr.params, em,
                                                          tau_eval,
                                                          derive_seed(seed, 0x6576ull, i)));
                }
                m.mask_auc = mask_recovery_auc(test_ds, fr.params);
                m.random_mask_auc = random_mask_auc(test_ds, derive_seed(seed, 0x726Eull));
            } else {
                throw ArgumentError("unknown method: " + rep.method);
            }
            int correct = 0;
            for (std::size_t i = 0; i < scores.size(); ++i) {
                int a;
                scores[i].maxCoeff(&a);
                if (a == labels[i]) ++correct;
            }
            m.test_acc = static_cast<double>(correct) / scores.size();
            m.test_auc = multiclass_auc(scores, labels, test_ds.num_classes);
            rep.per_seed.push_back(m);
        }
    } catch (const Error& e) {
        rep.failed = true;
        rep.failed_stage = stage + ": " + e.what();
    }
    return rep;
}

// ---- visualization export ----

// DOT graph with kept edges carrying invariant=true; node labels summarize the
// feature row.
inline void export_subgraph_viz(std::ostream& out, const Graph& g, const Mat& mask) {
    const int v = g.node_count();
    if (mask.rows() != v || mask.cols() != v)
        throw ArgumentError("export_subgraph_viz: mask shape mismatch");
    out << "graph subgraph_viz {\n";
    for (int i = 0; i < v; ++i) {
        out << "  n" << i << " [label=\"" << i << ":";
        for (int c = 0; c < g.feature_dim(); ++c) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.3g", g.features(i, c));
            out << (c ? "," : " ") << buf;
        }
        out << "\"];\n";
    }
    for (int i = 0; i < v; ++i)
        for (int j = i + 1; j < v; ++j)
            if (g.adjacency(i, j) != 0.0) {
                out << "  n" << i << " -- n" << j;
                if (mask(i, j) > 0.5) out << " [invariant=true]";
                out << ";\n";
            }
    out << "}\n";
}

inline void export_subgraph_viz(const std::string& path, const Graph& g, const Mat& mask) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    export_subgraph_viz(out, g, mask);
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace pnsis
