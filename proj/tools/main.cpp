#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "fedshift/experiments.hpp"

using namespace fedshift;
namespace fs = std::filesystem;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir = ".";
    std::vector<std::string> overrides;
    int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "config file (key = value lines)");
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--set", opts.overrides, "override, key=value (repeatable)");
    cmd->add_option("--seed", opts.seed, "override the config seed");
}

ExperimentConfig resolve_config(const CommonOpts& opts) {
    ExperimentConfig cfg =
        opts.config_path.empty() ? ExperimentConfig{} : load_config(opts.config_path);
    for (const std::string& kv : opts.overrides) apply_override(cfg, kv);
    if (opts.seed >= 0) cfg.seed = static_cast<uint64_t>(opts.seed);
    std::vector<std::string> errs = validate(cfg);
    if (!errs.empty()) {
        std::string msg = "config invalid:\n";
        for (const std::string& e : errs) msg += "  - " + e + "\n";
        throw std::runtime_error(msg);
    }
    return cfg;
}

fs::path prepare_out(const CommonOpts& opts, const ExperimentConfig& cfg) {
    fs::path out(opts.out_dir);
    fs::create_directories(out);
    write_manifest((out / "manifest.cfg").string(), cfg);
    return out;
}

int cmd_ingest(const std::string& path, const std::string& out_dir) {
    Dataset ds = load_tu_dataset(path);
    double nodes = 0, edges = 0;
    std::vector<int> per_class(ds.num_classes, 0);
    for (const Graph& g : ds.graphs) {
        nodes += g.num_nodes;
        edges += static_cast<double>(g.edges.size());
        ++per_class[g.label];
    }
    std::printf("graphs=%zu classes=%d feature_dim=%d\n", ds.graphs.size(), ds.num_classes,
                ds.feature_dim);
    std::printf("avg_nodes=%.2f avg_edges=%.2f\n", nodes / ds.graphs.size(),
                edges / ds.graphs.size());
    std::string ratio;
    for (int c = 0; c < ds.num_classes; ++c)
        ratio += (c ? ":" : "") + std::to_string(per_class[c]);
    std::printf("class_ratio=%s\n", ratio.c_str());
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        save_tu_dataset(ds, out_dir);
        std::printf("cached normalized dataset in %s\n", out_dir.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated graph-learning attack simulator"};
    app.require_subcommand(1);

    std::string ingest_path, ingest_out;
    CLI::App* ingest = app.add_subcommand("ingest", "load a TU-format dataset and print stats");
    ingest->add_option("path", ingest_path, "dataset directory")->required();
    ingest->add_option("--out", ingest_out, "cache directory for the normalized dataset");

    CommonOpts train_o, attack_o, q1_o, q2_o, q3_o, abl_o;
    CLI::App* train = app.add_subcommand("train", "federated training only (no stage 2)");
    add_common(train, train_o);
    CLI::App* attack = app.add_subcommand("attack", "full pipeline for one config");
    add_common(attack, attack_o);
    CLI::App* q1 = app.add_subcommand("q1", "client-count sweep at fixed attacker count");
    add_common(q1, q1_o);
    std::vector<int> q1_counts = {10, 20, 30, 40};
    q1->add_option("--clients", q1_counts, "client counts to sweep");
    CLI::App* q2 = app.add_subcommand("q2", "aggregator sweep");
    add_common(q2, q2_o);
    CLI::App* q3 = app.add_subcommand("q3", "stage-2 warm/cold convergence traces");
    add_common(q3, q3_o);
    CLI::App* abl = app.add_subcommand("ablation", "pipeline-component ablation");
    add_common(abl, abl_o);

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed()) return cmd_ingest(ingest_path, ingest_out);
        if (train->parsed()) {
            ExperimentConfig cfg = resolve_config(train_o);
            cfg.stage2 = false;
            fs::path out = prepare_out(train_o, cfg);
            CellResult cell = run_single_cell(cfg);
            write_metrics_csv((out / "metrics.csv").string(), {cell.row});
            std::string rounds = "round,oa,aggregator,info\n";
            for (const RoundRecord& r : cell.training.rounds)
                rounds += std::to_string(r.round) + "," + std::to_string(r.oa) + "," +
                          r.aggregator + "," + r.info + "\n";
            std::ofstream((out / "rounds.csv").string()) << rounds;
            std::printf("oa=%.4f\n", cell.row.oa);
            return 0;
        }
        if (attack->parsed()) {
            ExperimentConfig cfg = resolve_config(attack_o);
            fs::path out = prepare_out(attack_o, cfg);
            CellResult cell = run_single_cell(cfg);
            write_metrics_csv((out / "metrics.csv").string(), {cell.row});
            write_trace_csv((out / "stage2_trace.csv").string(), "full", cell.stage2.trace);
            std::printf("asr=%.4f oa=%.4f aas=%.4f\n", cell.row.asr, cell.row.oa, cell.row.aas);
            return 0;
        }
        if (q1->parsed()) {
            ExperimentConfig cfg = resolve_config(q1_o);
            fs::path out = prepare_out(q1_o, cfg);
            write_metrics_csv((out / "q1.csv").string(), run_q1(cfg, q1_counts, cfg.repetitions));
            return 0;
        }
        if (q2->parsed()) {
            ExperimentConfig cfg = resolve_config(q2_o);
            fs::path out = prepare_out(q2_o, cfg);
            write_metrics_csv((out / "q2.csv").string(),
                              run_q2(cfg, {"fedavg", "krum", "bulyan", "foolsgold"},
                                     cfg.repetitions));
            return 0;
        }
        if (q3->parsed()) {
            ExperimentConfig cfg = resolve_config(q3_o);
            fs::path out = prepare_out(q3_o, cfg);
            Q3Result r = run_q3(cfg);
            write_trace_csv((out / "q3_full.csv").string(), "full", r.full);
            write_trace_csv((out / "q3_warm.csv").string(), "warm_no_tune", r.warm_no_tune);
            write_trace_csv((out / "q3_cold.csv").string(), "cold", r.cold);
            return 0;
        }
        if (abl->parsed()) {
            ExperimentConfig cfg = resolve_config(abl_o);
            fs::path out = prepare_out(abl_o, cfg);
            for (const AblationRow& r : run_ablation(cfg))
                write_metrics_csv((out / ("ablation_" + r.variant + ".csv")).string(), {r.row});
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
