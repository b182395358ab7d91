#include "fedshift/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace fedshift {

namespace {

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

MetricsRow make_row(const ExperimentConfig& cfg, const std::string& dataset_name, double asr,
                    double oa) {
    MetricsRow row;
    row.dataset = dataset_name;
    row.N = cfg.num_clients;
    row.cm = cfg.attack == "none" ? 0 : cfg.num_malicious;
    row.aggregator = cfg.aggregator;
    row.p = cfg.p;
    row.f = cfg.f;
    row.n_tri = cfg.n_tri;
    row.seed = cfg.seed;
    row.asr = asr;
    row.oa = oa;
    row.aas = compute_aas(asr, oa);
    return row;
}

}  // namespace

double compute_asr(const GnnParams& model, const Dataset& ds, const std::vector<int>& test_indices,
                   int target_class, const std::function<Graph(const Graph&, int)>& attack) {
    int hits = 0, total = 0;
    for (int idx : test_indices) {
        const Graph& g = ds.graphs[idx];
        if (g.label == target_class) continue;
        ++total;
        if (predict(model, attack(g, idx)) == target_class) ++hits;
    }
    if (total == 0)
        throw std::invalid_argument("compute_asr: no test graphs outside the target class");
    return static_cast<double>(hits) / total;
}

double compute_aas(double asr, double oa) {
    if (asr < 0 || asr > 1 || oa < 0 || oa > 1)
        throw std::invalid_argument("compute_aas: inputs must be in [0, 1]");
    if (asr == 0.0) return 0.0;  // covers 0^0 := 1 -> 0 * 1
    return asr * std::pow(oa, asr);
}

std::string metrics_csv_header() { return "dataset,N,cm,aggregator,p,f,n_tri,seed,asr,oa,aas"; }

std::string to_csv(const MetricsRow& r) {
    return r.dataset + "," + std::to_string(r.N) + "," + std::to_string(r.cm) + "," +
           r.aggregator + "," + fmt(r.p) + "," + fmt(r.f) + "," + fmt(r.n_tri) + "," +
           std::to_string(r.seed) + "," + fmt(r.asr) + "," + fmt(r.oa) + "," + fmt(r.aas);
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::string out = metrics_csv_header() + "\n";
    for (const MetricsRow& r : rows) out += to_csv(r) + "\n";
    write_file(path, out);
}

void write_trace_csv(const std::string& path, const std::string& variant,
                     const std::vector<Stage2Point>& trace) {
    std::string out = "variant,epoch,asr,loss\n";
    for (const Stage2Point& p : trace)
        out += variant + "," + std::to_string(p.epoch) + "," + fmt(p.asr) + "," + fmt(p.loss) + "\n";
    write_file(path, out);
}

void write_manifest(const std::string& path, const ExperimentConfig& cfg) {
    write_file(path, to_text(cfg));
}

Dataset load_experiment_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset == "synthetic") {
        SyntheticSpec spec;
        spec.graphs_per_class = cfg.syn_graphs_per_class;
        spec.min_nodes = cfg.syn_min_nodes;
        spec.max_nodes = cfg.syn_max_nodes;
        spec.feature_dim = cfg.syn_feature_dim;
        spec.seed = cfg.seed;
        Dataset ds = generate_synthetic(spec);
        ds.name = "synthetic";
        return ds;
    }
    Dataset ds = load_tu_dataset(cfg.dataset);
    if (ds.name.empty()) ds.name = cfg.dataset;
    return ds;
}

CellResult run_single_cell(const ExperimentConfig& cfg) {
    std::vector<std::string> errs = validate(cfg);
    if (!errs.empty()) {
        std::string msg = "invalid config:";
        for (const std::string& e : errs) msg += " " + e + ";";
        throw std::invalid_argument(msg);
    }

    Dataset ds = load_experiment_dataset(cfg);
    auto [train_idx, test_idx] = split_train_test(ds, cfg.train_ratio, cfg.seed);
    Partition part = partition_clients(train_idx, cfg.num_clients, cfg.seed);
    part.test_indices = test_idx;

    CellResult result;
    int cm = cfg.attack == "none" ? 0 : cfg.num_malicious;

    if (cfg.attack == "fedshift" && cm > 0) {
        std::vector<MaliciousContext> clients;
        for (int i = 0; i < cm; ++i)
            clients.push_back(setup_malicious_client(i, ds, part.client_indices[i], cfg));
        for (MaliciousContext& mc : clients) stage1_train(mc, cfg);

        result.training = run_training(cfg, ds, part, &clients);
        const GnnParams& theta = result.training.model;

        ExperimentConfig s2cfg = cfg;
        if (!cfg.stage2) s2cfg.stage2_epochs = 0;
        result.stage2 = stage2_finetune(clients, theta, ds, test_idx, s2cfg);
        double asr = compute_asr(theta, ds, test_idx, cfg.target_class, [&](const Graph& g, int) {
            return apply_trigger(g, result.stage2.trigger, cfg.n_tri, result.stage2.range);
        });
        double oa = evaluate_accuracy(theta, ds, test_idx);
        result.row = make_row(cfg, ds.name, asr, oa);
    } else if (cfg.attack == "random" && cm > 0) {
        result.training = run_training(cfg, ds, part, nullptr);
        const GnnParams& theta = result.training.model;
        std::vector<Trigger> trigs;
        std::vector<FeatureRange> ranges;
        for (int i = 0; i < cm; ++i) {
            RandomAttackClient bc = make_baseline_client(cfg, ds, part, i);
            trigs.push_back(bc.trigger);
            ranges.push_back(bc.range);
        }
        Trigger agg = aggregate_triggers(trigs, cfg.f);
        FeatureRange merged = merge_ranges(ranges);
        double asr = compute_asr(theta, ds, test_idx, cfg.target_class, [&](const Graph& g, int idx) {
            return apply_trigger_at(g, agg, baseline_positions(cfg, g.num_nodes, idx), merged);
        });
        double oa = evaluate_accuracy(theta, ds, test_idx);
        result.row = make_row(cfg, ds.name, asr, oa);
    } else {
        ExperimentConfig clean = cfg;
        clean.attack = "none";
        result.training = run_training(clean, ds, part, nullptr);
        const GnnParams& theta = result.training.model;
        double asr = compute_asr(theta, ds, test_idx, cfg.target_class,
                                 [](const Graph& g, int) { return g; });
        double oa = evaluate_accuracy(theta, ds, test_idx);
        result.row = make_row(clean, ds.name, asr, oa);
    }
    return result;
}

std::vector<MetricsRow> run_q1(const ExperimentConfig& base, const std::vector<int>& client_counts,
                               int repetitions) {
    std::vector<MetricsRow> rows;
    for (int n : client_counts)
        for (int r = 0; r < repetitions; ++r) {
            ExperimentConfig cfg = base;
            cfg.num_clients = n;
            cfg.seed = base.seed + static_cast<uint64_t>(r);
            rows.push_back(run_single_cell(cfg).row);
        }
    return rows;
}

std::vector<MetricsRow> run_q2(const ExperimentConfig& base,
                               const std::vector<std::string>& aggregators, int repetitions) {
    std::vector<MetricsRow> rows;
    for (const std::string& agg : aggregators)
        for (int r = 0; r < repetitions; ++r) {
            ExperimentConfig cfg = base;
            cfg.aggregator = agg;
            cfg.seed = base.seed + static_cast<uint64_t>(r);
            rows.push_back(run_single_cell(cfg).row);
        }
    return rows;
}

Q3Result run_q3(const ExperimentConfig& base) {
    ExperimentConfig cfg = base;
    cfg.attack = "fedshift";
    cfg.fl_tune = true;
    std::vector<std::string> errs = validate(cfg);
    if (!errs.empty()) throw std::invalid_argument("invalid config: " + errs[0]);

    Dataset ds = load_experiment_dataset(cfg);
    auto [train_idx, test_idx] = split_train_test(ds, cfg.train_ratio, cfg.seed);
    Partition part = partition_clients(train_idx, cfg.num_clients, cfg.seed);
    part.test_indices = test_idx;

    std::vector<MaliciousContext> clients;
    for (int i = 0; i < cfg.num_malicious; ++i)
        clients.push_back(setup_malicious_client(i, ds, part.client_indices[i], cfg));
    for (MaliciousContext& mc : clients) stage1_train(mc, cfg);
    std::vector<MaliciousContext> stage1_snapshot = clients;  // pre-round-tuning generators

    TrainingResult tr = run_training(cfg, ds, part, &clients);
    const GnnParams& theta = tr.model;

    Q3Result out;
    {
        std::vector<MaliciousContext> c = clients;
        ExperimentConfig c1 = cfg;
        c1.cold_start = false;
        out.full = stage2_finetune(c, theta, ds, test_idx, c1).trace;
    }
    {
        std::vector<MaliciousContext> c = stage1_snapshot;
        ExperimentConfig c2 = cfg;
        c2.cold_start = false;
        out.warm_no_tune = stage2_finetune(c, theta, ds, test_idx, c2).trace;
    }
    {
        std::vector<MaliciousContext> c = clients;
        ExperimentConfig c3 = cfg;
        c3.cold_start = true;
        out.cold = stage2_finetune(c, theta, ds, test_idx, c3).trace;
    }
    return out;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& base) {
    struct Variant {
        std::string name;
        bool fl_tune;
        bool stage2;
    };
    const std::vector<Variant> variants = {
        {"stage1", false, false},
        {"stage1_fltune", true, false},
        {"stage1_stage2", false, true},
        {"full", true, true},
    };
    std::vector<AblationRow> rows;
    for (const Variant& v : variants) {
        ExperimentConfig cfg = base;
        cfg.attack = "fedshift";
        cfg.fl_tune = v.fl_tune;
        cfg.stage2 = v.stage2;
        cfg.cold_start = false;
        rows.push_back({v.name, run_single_cell(cfg).row});
    }
    return rows;
}

}  // namespace fedshift
