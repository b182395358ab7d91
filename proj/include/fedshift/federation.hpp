#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedshift/config.hpp"
#include "fedshift/dataset.hpp"
#include "fedshift/gnn.hpp"
#include "fedshift/shifter.hpp"

namespace fedshift {

// --- robust aggregation on flattened parameter vectors ------------------

std::vector<double> flatten_params(const GnnParams& p);
void unflatten_params(GnnParams& p, const std::vector<double>& flat);

// Weighted coordinate mean; weights need not be normalized.
std::vector<double> fedavg_aggregate(const std::vector<std::vector<double>>& updates,
                                     const std::vector<double>& weights);

// Index of the client whose summed squared distance to its n - f - 2
// nearest peers is smallest; ties go to the lower client id. Requires
// n >= f + 3.
int krum_select(const std::vector<std::vector<double>>& updates, int f_byz);

// Iterated-selection + coordinate-wise trimmed mean. Requires n >= 4f + 3.
std::vector<double> bulyan_aggregate(const std::vector<std::vector<double>>& updates, int f_byz);

// Cumulative per-client update history for similarity-based reweighting.
struct FoolsGoldState {
    std::vector<std::vector<double>> history;  // one running sum per client

    void accumulate(const std::vector<std::vector<double>>& deltas);
};

// Client weights in [0, 1] from pairwise history similarity (pardoning +
// logit rescale). All-zero output means "no signal"; callers fall back to
// plain averaging.
std::vector<double> foolsgold_weights(const FoolsGoldState& state);

// --- random-trigger baseline --------------------------------------------

// The fixed trigger, clamp range and poison set attacker `client` uses for
// the whole run under cfg.attack == "random". Deterministic in (cfg, part).
struct RandomAttackClient {
    Trigger trigger;
    FeatureRange range;
    std::vector<int> poison;  // dataset indices, ascending
};

RandomAttackClient make_baseline_client(const ExperimentConfig& cfg, const Dataset& ds,
                                        const Partition& part, int client);

// Per-graph node positions for the baseline trigger (train and test time).
std::vector<int> baseline_positions(const ExperimentConfig& cfg, int graph_nodes,
                                    int graph_index);

// --- the training loop --------------------------------------------------

struct RoundRecord {
    int round = 0;
    double oa = 0.0;          // clean test accuracy of the new global model
    std::string aggregator;
    std::string info;         // e.g. selected client, fallback notes
    std::vector<double> update_norms;
};

struct TrainingResult {
    GnnParams model;
    std::vector<RoundRecord> rounds;
};

// Federated training. Clients 0..num_malicious-1 are the adversary when
// cfg.attack != "none": "fedshift" clients train on generator-poisoned
// copies of their shard (labels untouched) and tune the generator each
// round; "random" clients apply a fixed random trigger (optionally
// flipping poisoned labels to the target class). malicious may be null
// for benign runs.
TrainingResult run_training(const ExperimentConfig& cfg, const Dataset& ds,
                            const Partition& part, std::vector<MaliciousContext>* malicious);

}  // namespace fedshift
