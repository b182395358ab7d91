#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fedshift/config.hpp"
#include "fedshift/dataset.hpp"
#include "fedshift/federation.hpp"
#include "fedshift/shifter.hpp"

namespace fedshift {

// --- metrics -------------------------------------------------------------

// Fraction of non-target-class test graphs the model classifies as the
// target class after the attack closure perturbs them. The closure
// receives (graph, dataset index). Throws when no test graph qualifies.
double compute_asr(const GnnParams& model, const Dataset& ds, const std::vector<int>& test_indices,
                   int target_class, const std::function<Graph(const Graph&, int)>& attack);

// asr * oa^asr with 0^0 := 1; rejects inputs outside [0, 1].
double compute_aas(double asr, double oa);

struct MetricsRow {
    std::string dataset;
    int N = 0;
    int cm = 0;
    std::string aggregator;
    double p = 0, f = 0, n_tri = 0;
    uint64_t seed = 0;
    double asr = 0, oa = 0, aas = 0;
};

std::string metrics_csv_header();  // dataset,N,cm,aggregator,p,f,n_tri,seed,asr,oa,aas
std::string to_csv(const MetricsRow& row);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

// convergence CSV: variant,epoch,asr,loss
void write_trace_csv(const std::string& path, const std::string& variant,
                     const std::vector<Stage2Point>& trace);

// Full resolved config; parsing it back reproduces the run.
void write_manifest(const std::string& path, const ExperimentConfig& cfg);

// --- drivers -------------------------------------------------------------

Dataset load_experiment_dataset(const ExperimentConfig& cfg);

struct CellResult {
    MetricsRow row;
    TrainingResult training;
    Stage2Result stage2;  // empty trace unless the fedshift stage-2 ran
};

// One full pipeline run (data -> stage 1 -> federated training -> stage 2
// -> metrics) for a single config.
CellResult run_single_cell(const ExperimentConfig& cfg);

// Q1-style: sweep the client count at fixed |C_M|; `repetitions` seeds per
// cell, cell seed = base seed + rep.
std::vector<MetricsRow> run_q1(const ExperimentConfig& base, const std::vector<int>& client_counts,
                               int repetitions);

// Q2-style: sweep aggregators at a fixed budget.
std::vector<MetricsRow> run_q2(const ExperimentConfig& base,
                               const std::vector<std::string>& aggregators, int repetitions);

// Q3-style: one training run, then three stage-2 traces against the same
// frozen global model: warm start from the round-tuned generator, warm
// start from the pre-tuning generator, and cold start. Identical seeds.
struct Q3Result {
    std::vector<Stage2Point> full;          // fl-tuned warm start
    std::vector<Stage2Point> warm_no_tune;  // stage-1 generator, no round tuning
    std::vector<Stage2Point> cold;
};

Q3Result run_q3(const ExperimentConfig& base);

// Ablation: Stage1-only, Stage1+FL-Tune, Stage1+Stage2, Full; shared seed.
struct AblationRow {
    std::string variant;
    MetricsRow row;
};

std::vector<AblationRow> run_ablation(const ExperimentConfig& base);

}  // namespace fedshift
