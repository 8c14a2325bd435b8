#include <CLI11.hpp>
#include <iostream>

#include "pnsis/pnsis.hpp"

namespace {

using namespace pnsis;

int cmd_gen_spmotif(int n, double bias, bool mixed, bool test, std::uint64_t seed,
                    const std::string& out) {
    SpmotifConfig cfg;
    cfg.n_graphs = n;
    cfg.bias = test ? 1.0 / 3.0 : bias;
    cfg.mixed = mixed;
    cfg.seed = seed;
    Dataset ds = generate_spmotif(cfg);
    if (out.empty())
        write_dataset(std::cout, ds);
    else
        write_dataset(out, ds);
    return 0;
}

int cmd_embed(const std::string& in, int n_cap, const std::string& out) {
    Dataset ds = read_dataset(in);
    std::ofstream file;
    std::ostream* os = &std::cout;
    if (!out.empty()) {
        file.open(out);
        if (!file) throw IoError("cannot open for writing: " + out);
        os = &file;
    }
    for (const Graph& g : ds.graphs) {
        StructureEmbedding e = structure_embedding(g, n_cap);
        for (long k = 0; k < e.h.size(); ++k) *os << (k ? " " : "") << fmt17(e.h[k]);
        *os << "\n";
    }
    return 0;
}

int cmd_gsd(const std::string& a, const std::string& b, int n_cap) {
    Dataset da = read_dataset(a), db = read_dataset(b);
    GsdValue v = gsd(da.graphs, db.graphs, n_cap);
    std::cout << "total=" << fmt17(v.total) << "\n"
              << "structure=" << fmt17(v.structure_term) << "\n"
              << "feature=" << fmt17(v.feature_term) << "\n";
    return 0;
}

int cmd_train(const std::string& data, const std::string& config, std::uint64_t seed,
              const std::string& out_ckpt, const std::string& out_log) {
    Config c = config.empty() ? Config{} : Config::load(config);
    TrainConfig cfg = train_config_from(c, seed);
    Dataset ds = read_dataset(data);
    FitResult fr = fit(ds, cfg);
    if (!out_ckpt.empty()) save_checkpoint(out_ckpt, fr.params);
    std::string log = format_log(fr.log);
    if (out_log.empty()) {
        std::cout << log;
    } else {
        std::ofstream f(out_log);
        if (!f) throw IoError("cannot open for writing: " + out_log);
        f << log;
    }
    return 0;
}

int cmd_ensemble(const std::string& data, const std::string& ckpt, const std::string& config,
                 std::uint64_t seed, const std::string& out_sp) {
    Config c = config.empty() ? Config{} : Config::load(config);
    TrainConfig cfg = train_config_from(c, seed);
    Dataset ds = read_dataset(data);
    ModelParams mp = load_checkpoint(ckpt);
    EnsembleModel em = build_ensemble(ds, mp, cfg, cfg.tau_min);
    if (!out_sp.empty()) {
        std::ofstream f(out_sp);
        if (!f) throw IoError("cannot open for writing: " + out_sp);
        save_classifier(f, em.spurious);
    }
    for (std::size_t cls = 0; cls < em.eps.size(); ++cls) {
        const EpsilonStats& e = em.eps[cls];
        std::cout << "eps class=" << cls << " e0=" << fmt17(e.e0)
                  << " e0_rate=" << fmt17(e.e0_rate) << " e1=" << fmt17(e.e1)
                  << " e2=" << fmt17(e.e2) << " e3=" << fmt17(e.e3)
                  << " degenerate=" << (e.degenerate ? 1 : 0) << "\n";
    }
    return 0;
}

int cmd_eval(const std::string& data, const std::string& ckpt, int n_samples, double tau,
             std::uint64_t seed) {
    Dataset ds = read_dataset(data);
    ModelParams mp = load_checkpoint(ckpt);
    std::vector<Vec> scores;
    std::vector<int> labels;
    int correct = 0, labeled = 0;
    for (int i = 0; i < ds.size(); ++i) {
        const Graph& g = ds.graphs[i];
        Vec p = joint_predict(g, mp, n_samples, tau, derive_seed(seed, 0x6576ull, i));
        if (g.label) {
            int a;
            p.maxCoeff(&a);
            if (a == *g.label) ++correct;
            ++labeled;
            scores.push_back(p);
            labels.push_back(*g.label);
        }
    }
    if (labeled == 0) throw ArgumentError("eval: dataset has no labels");
    std::cout << "accuracy=" << fmt17(static_cast<double>(correct) / labeled) << "\n";
    std::cout << "auc=" << fmt17(multiclass_auc(scores, labels, ds.num_classes)) << "\n";
    return 0;
}

int cmd_run(const std::string& config, const std::string& out) {
    ExperimentReport rep = run_experiment(Config::load(config));
    std::string text = serialize_report(rep);
    if (out.empty()) {
        std::cout << text;
    } else {
        std::ofstream f(out);
        if (!f) throw IoError("cannot open for writing: " + out);
        f << text;
    }
    return rep.failed ? 1 : 0;
}

int cmd_viz(const std::string& data, int index, const std::string& ckpt, double tau,
            std::uint64_t seed, const std::string& out) {
    Dataset ds = read_dataset(data);
    if (index < 0 || index >= ds.size()) throw ArgumentError("viz: index out of range");
    const Graph& g = ds.graphs[index];
    Mat mask;
    if (!ckpt.empty()) {
        ModelParams mp = load_checkpoint(ckpt);
        EdgeProbMatrix ep = extract_edge_probs(g, mp.extractor_sf);
        mask = sample_subgraph(ep, g, tau, true, seed).mask;
    } else if (g.gt_mask) {
        mask = *g.gt_mask;
    } else {
        throw ArgumentError("viz: no checkpoint given and graph has no gt_mask");
    }
    if (out.empty())
        export_subgraph_viz(std::cout, g, mask);
    else
        export_subgraph_viz(out, g, mask);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PNS-based invariant subgraph learning pipeline"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-spmotif", "Generate a biased SPMotif-style dataset");
    int gen_n = 300;
    double gen_bias = 0.9;
    bool gen_mixed = false, gen_test = false;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    gen->add_option("--n", gen_n, "Number of graphs");
    gen->add_option("--bias", gen_bias, "P(base kind matches class)");
    gen->add_flag("--mixed", gen_mixed, "Also plant spurious node features");
    gen->add_flag("--test", gen_test, "Force the unbiased test split (bias 1/3)");
    gen->add_option("--seed", gen_seed, "Seed");
    gen->add_option("--out", gen_out, "Output path (default stdout)");

    auto* emb = app.add_subcommand("embed", "Dump structure embeddings, one line per graph");
    std::string emb_in, emb_out;
    int emb_cap = 2;
    emb->add_option("--in", emb_in, "Dataset file")->required();
    emb->add_option("--n-cap", emb_cap, "Multi-index degree cap");
    emb->add_option("--out", emb_out, "Output path (default stdout)");

    auto* gsd_cmd = app.add_subcommand("gsd", "Structure distance between two datasets");
    std::string gsd_a, gsd_b;
    int gsd_cap = 2;
    gsd_cmd->add_option("--a", gsd_a, "First dataset")->required();
    gsd_cmd->add_option("--b", gsd_b, "Second dataset")->required();
    gsd_cmd->add_option("--n-cap", gsd_cap, "Multi-index degree cap");

    auto* train = app.add_subcommand("train", "Fit the two-extractor model");
    std::string train_data, train_cfg, train_ckpt, train_log;
    std::uint64_t train_seed = 0;
    train->add_option("--data", train_data, "Training dataset")->required();
    train->add_option("--config", train_cfg, "key=value config file");
    train->add_option("--seed", train_seed, "Seed");
    train->add_option("--out-ckpt", train_ckpt, "Checkpoint output path");
    train->add_option("--out-log", train_log, "Training log path (default stdout)");

    auto* ens = app.add_subcommand("ensemble", "Train the spurious classifier and print stats");
    std::string ens_data, ens_ckpt, ens_cfg, ens_out;
    std::uint64_t ens_seed = 0;
    ens->add_option("--data", ens_data, "Dataset for pseudo-labeling")->required();
    ens->add_option("--ckpt", ens_ckpt, "Model checkpoint")->required();
    ens->add_option("--config", ens_cfg, "key=value config file");
    ens->add_option("--seed", ens_seed, "Seed");
    ens->add_option("--out-spurious", ens_out, "Spurious classifier checkpoint path");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled dataset");
    std::string ev_data, ev_ckpt;
    int ev_samples = 16;
    double ev_tau = 0.3;
    std::uint64_t ev_seed = 0;
    ev->add_option("--data", ev_data, "Dataset")->required();
    ev->add_option("--ckpt", ev_ckpt, "Model checkpoint")->required();
    ev->add_option("--n-samples", ev_samples, "Mask samples per graph");
    ev->add_option("--tau", ev_tau, "Sampling temperature");
    ev->add_option("--seed", ev_seed, "Seed");

    auto* run = app.add_subcommand("run", "Run a full experiment from a config file");
    std::string run_cfg, run_out;
    run->add_option("--config", run_cfg, "key=value config file")->required();
    run->add_option("--out", run_out, "Report path (default stdout)");

    auto* viz = app.add_subcommand("viz", "Export a graph with its invariant subgraph as DOT");
    std::string viz_data, viz_ckpt, viz_out;
    int viz_index = 0;
    double viz_tau = 0.3;
    std::uint64_t viz_seed = 0;
    viz->add_option("--data", viz_data, "Dataset")->required();
    viz->add_option("--index", viz_index, "Graph index");
    viz->add_option("--ckpt", viz_ckpt, "Model checkpoint (default: use gt_mask)");
    viz->add_option("--tau", viz_tau, "Sampling temperature");
    viz->add_option("--seed", viz_seed, "Seed");
    viz->add_option("--out", viz_out, "Output path (default stdout)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (gen->parsed())
            return cmd_gen_spmotif(gen_n, gen_bias, gen_mixed, gen_test, gen_seed, gen_out);
        if (emb->parsed()) return cmd_embed(emb_in, emb_cap, emb_out);
        if (gsd_cmd->parsed()) return cmd_gsd(gsd_a, gsd_b, gsd_cap);
        if (train->parsed())
            return cmd_train(train_data, train_cfg, train_seed, train_ckpt, train_log);
        if (ens->parsed()) return cmd_ensemble(ens_data, ens_ckpt, ens_cfg, ens_seed, ens_out);
        if (ev->parsed()) return cmd_eval(ev_data, ev_ckpt, ev_samples, ev_tau, ev_seed);
        if (run->parsed()) return cmd_run(run_cfg, run_out);
        if (viz->parsed())
            return cmd_viz(viz_data, viz_index, viz_ckpt, viz_tau, viz_seed, viz_out);
    } catch (const pnsis::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
